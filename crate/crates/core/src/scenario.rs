//! Scenario files and sweep planning.
//!
//! Scenarios are flat `key = value` text: dotted section prefixes, comma
//! separated lists, `#` comments, UTF-8. Every knob has a default matching
//! the reference cluster setup, so an empty file is a valid full sweep. See
//! the repository README for the complete grammar and key table.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::rng::mix_run_seed;

/// Which cluster layout a run models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// All cluster nodes co-located; the emulated delay sits entirely on the
    /// client<->headnode link.
    SingleSite,
    /// Cluster nodes at distinct sites; the total delay splits evenly between
    /// the client<->headnode hop and the headnode<->worker hop.
    MultiSite,
}

impl TopologyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TopologyKind::SingleSite => "single_site",
            TopologyKind::MultiSite => "multi_site",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cluster shape shared by every run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologySpec {
    /// Fixed topology for this scenario; `None` means sweep both.
    pub kind: Option<TopologyKind>,
    pub worker_count: u32,
    /// Whether the headnode may host function replicas alongside control
    /// duties (k3s-style servers are schedulable by default).
    pub headnode_hosts_replicas: bool,
}

/// Where new replicas land.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementPolicy {
    /// Default: the first replica of a scaled-from-zero service lands on a
    /// worker (mirroring schedulers that keep app pods off the control-plane
    /// node under low pressure); further replicas spread evenly, preferring
    /// the headnode when counts tie.
    WorkerFirst,
    /// Round-robin that starts at the headnode; ties prefer the headnode.
    HeadnodeFirst,
}

impl PlacementPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlacementPolicy::WorkerFirst => "worker_first",
            PlacementPolicy::HeadnodeFirst => "headnode_first",
        }
    }
}

/// Cluster tuning knobs that are not part of the autoscaler proper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSpec {
    pub placement: PlacementPolicy,
    /// Replicas pre-warmed (ready) at t=0. Useful for calibration runs.
    pub initial_replicas: u32,
    /// Time the ingress proxy spends forwarding one request. Requests
    /// arriving while it is busy queue behind it, so a synchronized burst
    /// reaches the replicas paced out rather than in one instant. Zero
    /// forwards everything immediately.
    pub ingress_cost_ms: f64,
}

/// Per-direction delays for one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayProfile {
    /// Total end-to-end emulated delay between client and application.
    pub x_total_ms: f64,
    /// One-way delay on the client<->headnode link.
    pub access_delay_ms: f64,
    /// One-way delay on each headnode<->worker link.
    pub intra_delay_ms: f64,
    pub jitter_ms: f64,
    pub loss_prob: f64,
}

impl DelayProfile {
    pub fn with_network(mut self, jitter_ms: f64, loss_prob: f64) -> Self {
        self.jitter_ms = jitter_ms;
        self.loss_prob = loss_prob;
        self
    }
}

/// Split a total delay across the links of a topology.
///
/// Single-site puts everything on the access link; multi-site splits it
/// evenly (access = intra = X/2), keeping the end-to-end client->application
/// delay comparable across topologies.
pub fn derive_delays(x_total_ms: f64, kind: TopologyKind) -> Result<DelayProfile, ScenarioError> {
    if !(x_total_ms >= 0.0) || !x_total_ms.is_finite() {
        return Err(ScenarioError::Validation {
            msg: format!("x_total_ms must be >= 0 and finite, got {x_total_ms}"),
        });
    }
    let (access, intra) = match kind {
        TopologyKind::SingleSite => (x_total_ms, 0.0),
        TopologyKind::MultiSite => (x_total_ms / 2.0, x_total_ms / 2.0),
    };
    Ok(DelayProfile {
        x_total_ms,
        access_delay_ms: access,
        intra_delay_ms: intra,
        jitter_ms: 0.0,
        loss_prob: 0.0,
    })
}

/// The deployed function, minus its gridded processing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionSpec {
    /// Per-request service cost besides the configured sleep. Keeps
    /// zero-delay, zero-processing throughput finite.
    pub base_overhead_ms: f64,
    /// Provisioning time for a new replica before it can serve.
    pub cold_start_ms: f64,
    /// Mean of an exponential per-request wobble added to the service time.
    /// Timer wakeups and proxy hops are never exact; without this,
    /// closed-loop users stay phase-locked forever and arrive in
    /// synchronized waves, which no real deployment exhibits. Zero
    /// disables it.
    pub exec_jitter_ms: f64,
}

/// Concurrency-based autoscaler settings (stable/panic window semantics).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoscalerConfig {
    pub enabled: bool,
    pub max_replicas: u32,
    /// Admission cap per replica; 0 means unlimited concurrency.
    pub hard_concurrency_limit: u32,
    /// Soft concurrency target per replica.
    pub concurrency_target: f64,
    /// Percentage of the soft target the scaler actually aims for.
    pub target_utilization_pct: f64,
    pub stable_window_s: u64,
    /// Panic window as a percentage of the stable window.
    pub panic_window_pct: f64,
    /// Panic entry threshold as a percentage of current capacity.
    pub panic_threshold_pct: f64,
    pub tick_interval_s: u64,
    /// How long the stable average must sit at zero before scaling to zero.
    pub scale_to_zero_grace_s: u64,
}

impl AutoscalerConfig {
    /// Effective per-replica concurrency target.
    pub fn effective_target(&self) -> f64 {
        self.concurrency_target * self.target_utilization_pct / 100.0
    }

    pub fn panic_window_s(&self) -> f64 {
        self.stable_window_s as f64 * self.panic_window_pct / 100.0
    }
}

/// Load shape shared by every run (the per-run user count is gridded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSpec {
    pub duration_s: u64,
    pub request_timeout_ms: u64,
}

/// Link randomness shared by every grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSpec {
    pub jitter_ms: f64,
    pub loss_prob: f64,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub topology: TopologySpec,
    pub cluster: ClusterSpec,
    pub delay_grid_ms: Vec<f64>,
    pub processing_grid_ms: Vec<f64>,
    pub user_grid: Vec<u32>,
    pub function: FunctionSpec,
    pub autoscaler: AutoscalerConfig,
    pub workload: WorkloadSpec,
    pub network: NetworkSpec,
    pub seed: u64,
    pub repetitions: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            topology: TopologySpec {
                kind: None,
                worker_count: 2,
                headnode_hosts_replicas: true,
            },
            cluster: ClusterSpec {
                placement: PlacementPolicy::WorkerFirst,
                initial_replicas: 0,
                ingress_cost_ms: 0.05,
            },
            delay_grid_ms: vec![0.0, 12.5, 25.0, 50.0, 100.0, 200.0, 400.0, 800.0],
            processing_grid_ms: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            user_grid: vec![1, 50, 500],
            function: FunctionSpec {
                base_overhead_ms: 0.5,
                cold_start_ms: 800.0,
                exec_jitter_ms: 2.5,
            },
            autoscaler: AutoscalerConfig {
                enabled: true,
                max_replicas: 100,
                hard_concurrency_limit: 0,
                concurrency_target: 100.0,
                target_utilization_pct: 70.0,
                stable_window_s: 60,
                panic_window_pct: 10.0,
                panic_threshold_pct: 200.0,
                tick_interval_s: 2,
                scale_to_zero_grace_s: 30,
            },
            workload: WorkloadSpec { duration_s: 300, request_timeout_ms: 20_000 },
            network: NetworkSpec { jitter_ms: 0.0, loss_prob: 0.0 },
            seed: 42,
            repetitions: 1,
        }
    }
}

/// Errors from parsing or validating a scenario.
#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value for '{key}': {msg}")]
    InvalidValue { line: usize, key: String, msg: String },
    #[error("invalid scenario: {msg}")]
    Validation { msg: String },
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ScenarioError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ScenarioError::InvalidValue {
            line,
            key: key.to_string(),
            msg: format!("expected a number, got '{v}'"),
        })
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64, ScenarioError> {
    v.parse::<u64>().map_err(|_| ScenarioError::InvalidValue {
        line,
        key: key.to_string(),
        msg: format!("expected a non-negative integer, got '{v}'"),
    })
}

fn parse_u32(line: usize, key: &str, v: &str) -> Result<u32, ScenarioError> {
    v.parse::<u32>().map_err(|_| ScenarioError::InvalidValue {
        line,
        key: key.to_string(),
        msg: format!("expected a non-negative integer, got '{v}'"),
    })
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ScenarioError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ScenarioError::InvalidValue {
            line,
            key: key.to_string(),
            msg: format!("expected true or false, got '{v}'"),
        }),
    }
}

fn parse_f64_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ScenarioError> {
    v.split(',').map(|part| parse_f64(line, key, part.trim())).collect()
}

fn parse_u32_list(line: usize, key: &str, v: &str) -> Result<Vec<u32>, ScenarioError> {
    v.split(',').map(|part| parse_u32(line, key, part.trim())).collect()
}

impl ScenarioConfig {
    /// Parse scenario text, starting from defaults and applying overrides.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut cfg = ScenarioConfig::default();
        let mut seen: HashSet<String> = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ScenarioError::Syntax {
                line,
                msg: format!("expected 'key = value', got '{content}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(ScenarioError::Syntax { line, msg: format!("empty value for '{key}'") });
            }
            if !seen.insert(key.to_string()) {
                return Err(ScenarioError::DuplicateKey { line, key: key.to_string() });
            }
            cfg.apply(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, line: usize, key: &str, value: &str) -> Result<(), ScenarioError> {
        match key {
            "topology.kind" => {
                self.topology.kind = Some(match value {
                    "single_site" => TopologyKind::SingleSite,
                    "multi_site" => TopologyKind::MultiSite,
                    _ => {
                        return Err(ScenarioError::InvalidValue {
                            line,
                            key: key.to_string(),
                            msg: format!("expected single_site or multi_site, got '{value}'"),
                        })
                    }
                })
            }
            "topology.worker_count" => self.topology.worker_count = parse_u32(line, key, value)?,
            "topology.headnode_hosts_replicas" => {
                self.topology.headnode_hosts_replicas = parse_bool(line, key, value)?
            }
            "cluster.placement" => {
                self.cluster.placement = match value {
                    "worker_first" => PlacementPolicy::WorkerFirst,
                    "headnode_first" => PlacementPolicy::HeadnodeFirst,
                    _ => {
                        return Err(ScenarioError::InvalidValue {
                            line,
                            key: key.to_string(),
                            msg: format!("expected worker_first or headnode_first, got '{value}'"),
                        })
                    }
                }
            }
            "cluster.initial_replicas" => {
                self.cluster.initial_replicas = parse_u32(line, key, value)?
            }
            "cluster.ingress_cost_ms" => {
                self.cluster.ingress_cost_ms = parse_f64(line, key, value)?
            }
            "grid.delays_ms" => self.delay_grid_ms = parse_f64_list(line, key, value)?,
            "grid.processing_ms" => self.processing_grid_ms = parse_f64_list(line, key, value)?,
            "grid.users" => self.user_grid = parse_u32_list(line, key, value)?,
            "function.base_overhead_ms" => {
                self.function.base_overhead_ms = parse_f64(line, key, value)?
            }
            "function.cold_start_ms" => self.function.cold_start_ms = parse_f64(line, key, value)?,
            "function.exec_jitter_ms" => {
                self.function.exec_jitter_ms = parse_f64(line, key, value)?
            }
            "autoscaler.enabled" => self.autoscaler.enabled = parse_bool(line, key, value)?,
            "autoscaler.max_replicas" => self.autoscaler.max_replicas = parse_u32(line, key, value)?,
            "autoscaler.hard_concurrency_limit" => {
                self.autoscaler.hard_concurrency_limit = parse_u32(line, key, value)?
            }
            "autoscaler.concurrency_target" => {
                self.autoscaler.concurrency_target = parse_f64(line, key, value)?
            }
            "autoscaler.target_utilization_pct" => {
                self.autoscaler.target_utilization_pct = parse_f64(line, key, value)?
            }
            "autoscaler.stable_window_s" => {
                self.autoscaler.stable_window_s = parse_u64(line, key, value)?
            }
            "autoscaler.panic_window_pct" => {
                self.autoscaler.panic_window_pct = parse_f64(line, key, value)?
            }
            "autoscaler.panic_threshold_pct" => {
                self.autoscaler.panic_threshold_pct = parse_f64(line, key, value)?
            }
            "autoscaler.tick_interval_s" => {
                self.autoscaler.tick_interval_s = parse_u64(line, key, value)?
            }
            "autoscaler.scale_to_zero_grace_s" => {
                self.autoscaler.scale_to_zero_grace_s = parse_u64(line, key, value)?
            }
            "workload.duration_s" => self.workload.duration_s = parse_u64(line, key, value)?,
            "workload.request_timeout_ms" => {
                self.workload.request_timeout_ms = parse_u64(line, key, value)?
            }
            "network.jitter_ms" => self.network.jitter_ms = parse_f64(line, key, value)?,
            "network.loss_prob" => self.network.loss_prob = parse_f64(line, key, value)?,
            "run.seed" => self.seed = parse_u64(line, key, value)?,
            "run.repetitions" => self.repetitions = parse_u32(line, key, value)?,
            _ => return Err(ScenarioError::UnknownKey { line, key: key.to_string() }),
        }
        Ok(())
    }

    /// Check every invariant; error messages name the violated constraint.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation { msg });
        if self.topology.worker_count < 1 {
            return fail("worker_count must be >= 1".into());
        }
        if self.delay_grid_ms.is_empty() {
            return fail("grid.delays_ms must not be empty".into());
        }
        if self.processing_grid_ms.is_empty() {
            return fail("grid.processing_ms must not be empty".into());
        }
        if self.user_grid.is_empty() {
            return fail("grid.users must not be empty".into());
        }
        for &x in &self.delay_grid_ms {
            if x < 0.0 {
                return fail(format!("delay value must be >= 0, got {x}"));
            }
        }
        for &p in &self.processing_grid_ms {
            if p < 0.0 {
                return fail(format!("processing value must be >= 0, got {p}"));
            }
        }
        for &u in &self.user_grid {
            if u < 1 {
                return fail("user count must be >= 1".into());
            }
        }
        if !(self.function.base_overhead_ms > 0.0) {
            return fail(format!(
                "base_overhead_ms must be > 0, got {}",
                self.function.base_overhead_ms
            ));
        }
        if self.function.cold_start_ms < 0.0 {
            return fail("cold_start_ms must be >= 0".into());
        }
        if !(self.function.exec_jitter_ms >= 0.0) {
            return fail("exec_jitter_ms must be >= 0".into());
        }
        let a = &self.autoscaler;
        if a.max_replicas < 1 {
            return fail("max_replicas must be >= 1".into());
        }
        if !(a.concurrency_target > 0.0) {
            return fail("concurrency_target must be > 0".into());
        }
        if !(a.target_utilization_pct > 0.0 && a.target_utilization_pct <= 100.0) {
            return fail(format!(
                "target_utilization_pct must be in (0, 100], got {}",
                a.target_utilization_pct
            ));
        }
        if a.stable_window_s == 0 {
            return fail("stable_window_s must be > 0".into());
        }
        if !(a.panic_window_pct > 0.0 && a.panic_window_pct <= 100.0) {
            return fail(format!("panic_window_pct must be in (0, 100], got {}", a.panic_window_pct));
        }
        if a.panic_threshold_pct < 100.0 {
            return fail(format!(
                "panic_threshold_pct must be >= 100, got {}",
                a.panic_threshold_pct
            ));
        }
        if a.tick_interval_s == 0 {
            return fail("tick_interval_s must be > 0".into());
        }
        if self.workload.duration_s == 0 {
            return fail("duration_s must be > 0".into());
        }
        if self.workload.request_timeout_ms == 0 {
            return fail("request_timeout_ms must be > 0".into());
        }
        if self.network.jitter_ms < 0.0 {
            return fail("jitter_ms must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.network.loss_prob) {
            return fail(format!(
                "loss_prob out of range: {} (expected 0..=1)",
                self.network.loss_prob
            ));
        }
        if self.cluster.initial_replicas > a.max_replicas {
            return fail("initial_replicas must not exceed max_replicas".into());
        }
        if !(self.cluster.ingress_cost_ms >= 0.0) {
            return fail("ingress_cost_ms must be >= 0".into());
        }
        if self.repetitions < 1 {
            return fail("repetitions must be >= 1".into());
        }
        Ok(())
    }

    /// Topologies this scenario covers, in canonical order.
    pub fn topologies(&self) -> Vec<TopologyKind> {
        match self.topology.kind {
            Some(kind) => vec![kind],
            None => vec![TopologyKind::SingleSite, TopologyKind::MultiSite],
        }
    }

    /// Canonical re-serialization (used for the sweep manifest echo).
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        let list_f64 =
            |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let list_u32 =
            |xs: &[u32]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        if let Some(kind) = self.topology.kind {
            push("topology.kind", kind.as_str().to_string());
        }
        push("topology.worker_count", self.topology.worker_count.to_string());
        push(
            "topology.headnode_hosts_replicas",
            self.topology.headnode_hosts_replicas.to_string(),
        );
        push("cluster.placement", self.cluster.placement.as_str().to_string());
        push("cluster.initial_replicas", self.cluster.initial_replicas.to_string());
        push("cluster.ingress_cost_ms", self.cluster.ingress_cost_ms.to_string());
        push("grid.delays_ms", list_f64(&self.delay_grid_ms));
        push("grid.processing_ms", list_f64(&self.processing_grid_ms));
        push("grid.users", list_u32(&self.user_grid));
        push("function.base_overhead_ms", self.function.base_overhead_ms.to_string());
        push("function.cold_start_ms", self.function.cold_start_ms.to_string());
        push("function.exec_jitter_ms", self.function.exec_jitter_ms.to_string());
        push("autoscaler.enabled", self.autoscaler.enabled.to_string());
        push("autoscaler.max_replicas", self.autoscaler.max_replicas.to_string());
        push(
            "autoscaler.hard_concurrency_limit",
            self.autoscaler.hard_concurrency_limit.to_string(),
        );
        push("autoscaler.concurrency_target", self.autoscaler.concurrency_target.to_string());
        push(
            "autoscaler.target_utilization_pct",
            self.autoscaler.target_utilization_pct.to_string(),
        );
        push("autoscaler.stable_window_s", self.autoscaler.stable_window_s.to_string());
        push("autoscaler.panic_window_pct", self.autoscaler.panic_window_pct.to_string());
        push("autoscaler.panic_threshold_pct", self.autoscaler.panic_threshold_pct.to_string());
        push("autoscaler.tick_interval_s", self.autoscaler.tick_interval_s.to_string());
        push(
            "autoscaler.scale_to_zero_grace_s",
            self.autoscaler.scale_to_zero_grace_s.to_string(),
        );
        push("workload.duration_s", self.workload.duration_s.to_string());
        push("workload.request_timeout_ms", self.workload.request_timeout_ms.to_string());
        push("network.jitter_ms", self.network.jitter_ms.to_string());
        push("network.loss_prob", self.network.loss_prob.to_string());
        push("run.seed", self.seed.to_string());
        push("run.repetitions", self.repetitions.to_string());
        out
    }
}

/// One fully-resolved simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    /// Position in the expanded plan list of its topology.
    pub index: u32,
    pub topology: TopologyKind,
    pub delays: DelayProfile,
    pub users: u32,
    pub processing_ms: f64,
    /// Zero-based repetition number.
    pub repetition: u32,
    /// Per-run seed, mixed from the sweep seed and `index`.
    pub seed: u64,
    pub worker_count: u32,
    pub headnode_hosts_replicas: bool,
    pub function: FunctionSpec,
    pub autoscaler: AutoscalerConfig,
    pub workload: WorkloadSpec,
    pub placement: PlacementPolicy,
    pub initial_replicas: u32,
    pub ingress_cost_ms: f64,
}

/// Expand a scenario into the ordered run list for one topology.
///
/// Ordering is delay (outermost), then users, then processing time, then
/// repetition; indices and derived seeds follow that order, so expansion is a
/// pure function of the config.
pub fn expand_grid(config: &ScenarioConfig, kind: TopologyKind) -> Vec<RunPlan> {
    let mut plans = Vec::with_capacity(
        config.delay_grid_ms.len()
            * config.user_grid.len()
            * config.processing_grid_ms.len()
            * config.repetitions as usize,
    );
    let mut index: u32 = 0;
    for &x in &config.delay_grid_ms {
        let delays = derive_delays(x, kind)
            .expect("validated grid delay")
            .with_network(config.network.jitter_ms, config.network.loss_prob);
        for &users in &config.user_grid {
            for &processing_ms in &config.processing_grid_ms {
                for repetition in 0..config.repetitions {
                    plans.push(RunPlan {
                        index,
                        topology: kind,
                        delays,
                        users,
                        processing_ms,
                        repetition,
                        seed: mix_run_seed(config.seed, index as u64),
                        worker_count: config.topology.worker_count,
                        headnode_hosts_replicas: config.topology.headnode_hosts_replicas,
                        function: config.function,
                        autoscaler: config.autoscaler,
                        workload: config.workload,
                        placement: config.cluster.placement,
                        initial_replicas: config.cluster.initial_replicas,
                        ingress_cost_ms: config.cluster.ingress_cost_ms,
                    });
                    index += 1;
                }
            }
        }
    }
    plans
}
