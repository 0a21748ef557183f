//! Sweep execution and on-disk results.
//!
//! A sweep expands a scenario into run plans (single-site first, then
//! multi-site when both are requested), executes them across a thread pool,
//! and streams rows into `results.csv` in plan order regardless of which run
//! finishes first. A `manifest.json` with the canonical scenario echo and a
//! grid hash is written before the first run, so an interrupted sweep still
//! identifies itself and keeps every completed row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::RunResult;
use crate::scenario::{expand_grid, RunPlan, ScenarioConfig};
use crate::sim::{simulate, Simulation};

/// One line of `results.csv`. Field order is the column order; treat it as a
/// stable external format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub topology: String,
    pub x_total_ms: f64,
    pub access_delay_ms: f64,
    pub intra_delay_ms: f64,
    pub users: u32,
    pub processing_ms: f64,
    pub duration_s: u64,
    pub successes: u64,
    pub timeouts: u64,
    pub drops: u64,
    pub throughput_rps: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ready_replicas: u32,
    pub seed: u64,
}

/// The `results.csv` header, in order.
pub const RESULTS_HEADER: [&str; 16] = [
    "topology",
    "x_total_ms",
    "access_delay_ms",
    "intra_delay_ms",
    "users",
    "processing_ms",
    "duration_s",
    "successes",
    "timeouts",
    "drops",
    "throughput_rps",
    "p50_ms",
    "p95_ms",
    "p99_ms",
    "max_ready_replicas",
    "seed",
];

impl ResultRow {
    pub fn from_result(r: &RunResult) -> Self {
        ResultRow {
            topology: r.topology.as_str().to_string(),
            x_total_ms: r.x_total_ms,
            access_delay_ms: r.access_delay_ms,
            intra_delay_ms: r.intra_delay_ms,
            users: r.users,
            processing_ms: r.processing_ms,
            duration_s: r.duration_s,
            successes: r.successes,
            timeouts: r.timeouts,
            drops: r.drops,
            throughput_rps: r.throughput_rps,
            p50_ms: r.p50_ms,
            p95_ms: r.p95_ms,
            p99_ms: r.p99_ms,
            max_ready_replicas: r.max_ready_replicas,
            seed: r.seed,
        }
    }
}

/// One line of `aggregate.csv`: repetitions of a grid point folded together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub topology: String,
    pub x_total_ms: f64,
    pub users: u32,
    pub processing_ms: f64,
    pub repetitions: u32,
    pub throughput_rps_mean: f64,
    /// Sample standard deviation; 0 for a single repetition.
    pub throughput_rps_stddev: f64,
    pub p50_ms_mean: f64,
    pub p95_ms_mean: f64,
    pub p99_ms_mean: f64,
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Sweep invocation parameters beyond the scenario itself.
pub struct SweepOptions {
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    pub format: OutputFormat,
    /// Also write a per-run event trace. Forces sequential execution; only
    /// sensible for small scenarios (the trace grows with the event count).
    pub trace: bool,
}

pub struct SweepSummary {
    pub rows: Vec<ResultRow>,
    pub results_path: PathBuf,
    pub aggregate_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// 64-bit FNV-1a, used to fingerprint the expanded grid in the manifest.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

#[derive(Serialize)]
struct Manifest {
    tool_version: String,
    seed: u64,
    repetitions: u32,
    topologies: Vec<String>,
    total_runs: usize,
    /// FNV-1a of the canonical scenario echo plus topology list.
    grid_hash: String,
    created_unix: u64,
    scenario: String,
}

/// Expand a scenario into the full ordered plan list (single-site plans
/// before multi-site when the scenario covers both).
pub fn plans_for(config: &ScenarioConfig) -> Vec<RunPlan> {
    config
        .topologies()
        .into_iter()
        .flat_map(|kind| expand_grid(config, kind))
        .collect()
}

/// Run every plan and deliver results in plan order. Completed runs that
/// finish ahead of their turn wait in a small holdback buffer, so `deliver`
/// sees index 0, 1, 2, ... and can stream straight to disk.
pub fn execute_ordered(
    plans: &[RunPlan],
    jobs: Option<usize>,
    mut deliver: impl FnMut(usize, RunResult),
) {
    if plans.is_empty() {
        return;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .expect("thread pool");
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, RunResult)>();
        scope.spawn(move || {
            pool.install(|| {
                plans.par_iter().enumerate().for_each_with(tx, |tx, (i, plan)| {
                    // A dropped receiver just means the consumer failed;
                    // nothing useful to do with the error here.
                    let _ = tx.send((i, simulate(plan)));
                });
            });
        });
        let mut next = 0usize;
        let mut holdback: BTreeMap<usize, RunResult> = BTreeMap::new();
        for (i, result) in rx {
            holdback.insert(i, result);
            while let Some(result) = holdback.remove(&next) {
                deliver(next, result);
                next += 1;
            }
        }
    });
}

fn write_trace(path: &Path, trace: &[crate::kernel::TraceRecord]) -> Result<(), RunnerError> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "time_us\tkind\tpayload_id")?;
    for rec in trace {
        writeln!(f, "{}\t{}\t{}", rec.time_us, rec.kind, rec.payload_id)?;
    }
    Ok(())
}

/// Fold repetition rows into aggregates, keeping first-seen group order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, u64, u32, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64, u32, u64), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        let key = (
            row.topology.clone(),
            crate::kernel::ms_to_us(row.x_total_ms),
            row.users,
            crate::kernel::ms_to_us(row.processing_ms),
        );
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(row);
    }
    order
        .into_iter()
        .map(|key| {
            let members = &groups[&key];
            let n = members.len() as f64;
            let mean = |f: fn(&ResultRow) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n;
            let tp_mean = mean(|r| r.throughput_rps);
            let tp_stddev = if members.len() > 1 {
                let ss: f64 =
                    members.iter().map(|r| (r.throughput_rps - tp_mean).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let first = members[0];
            AggregateRow {
                topology: first.topology.clone(),
                x_total_ms: first.x_total_ms,
                users: first.users,
                processing_ms: first.processing_ms,
                repetitions: members.len() as u32,
                throughput_rps_mean: tp_mean,
                throughput_rps_stddev: tp_stddev,
                p50_ms_mean: mean(|r| r.p50_ms),
                p95_ms_mean: mean(|r| r.p95_ms),
                p99_ms_mean: mean(|r| r.p99_ms),
            }
        })
        .collect()
}

/// Execute a whole scenario and write `results.csv` (or `.json`),
/// `aggregate.csv` and `manifest.json` under `out_dir`.
pub fn run_sweep(
    config: &ScenarioConfig,
    options: &SweepOptions,
) -> Result<SweepSummary, RunnerError> {
    std::fs::create_dir_all(&options.out_dir)?;
    let plans = plans_for(config);

    let manifest_path = options.out_dir.join("manifest.json");
    let topologies: Vec<String> =
        config.topologies().iter().map(|k| k.as_str().to_string()).collect();
    let scenario_echo = config.to_file_string();
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        repetitions: config.repetitions,
        topologies: topologies.clone(),
        total_runs: plans.len(),
        grid_hash: format!(
            "{:016x}",
            fnv1a(format!("{}|{}", scenario_echo, topologies.join(",")).as_bytes())
        ),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        scenario: scenario_echo,
    };
    serde_json::to_writer_pretty(File::create(&manifest_path)?, &manifest)?;

    let results_path = options.out_dir.join(match options.format {
        OutputFormat::Csv => "results.csv",
        OutputFormat::Json => "results.json",
    });
    let mut rows: Vec<ResultRow> = Vec::with_capacity(plans.len());

    match options.format {
        OutputFormat::Csv => {
            // Stream rows as they come in (in plan order) so an interrupted
            // sweep keeps everything finished so far.
            let mut writer = csv::Writer::from_path(&results_path)?;
            let mut write_error: Option<csv::Error> = None;
            let mut deliver = |result: RunResult| {
                let row = ResultRow::from_result(&result);
                if write_error.is_none() {
                    if let Err(e) = writer.serialize(&row).and_then(|_| Ok(writer.flush()?)) {
                        write_error = Some(e);
                    }
                }
                rows.push(row);
            };
            if options.trace {
                for plan in &plans {
                    let mut sim = Simulation::new(plan.clone());
                    sim.enable_trace();
                    let (result, trace) = sim.run();
                    let trace_path = options.out_dir.join(format!(
                        "trace-{}-{:03}.tsv",
                        plan.topology.as_str(),
                        plan.index
                    ));
                    write_trace(&trace_path, &trace)?;
                    deliver(result);
                }
            } else {
                execute_ordered(&plans, options.jobs, |_, result| deliver(result));
            }
            drop(deliver);
            if let Some(e) = write_error {
                return Err(e.into());
            }
        }
        OutputFormat::Json => {
            execute_ordered(&plans, options.jobs, |_, result| {
                rows.push(ResultRow::from_result(&result));
            });
            serde_json::to_writer_pretty(File::create(&results_path)?, &rows)?;
        }
    }

    let aggregate_path = options.out_dir.join("aggregate.csv");
    let mut agg_writer = csv::Writer::from_path(&aggregate_path)?;
    for row in aggregate(&rows) {
        agg_writer.serialize(row)?;
    }
    agg_writer.flush()?;

    Ok(SweepSummary { rows, results_path, aggregate_path, manifest_path })
}
