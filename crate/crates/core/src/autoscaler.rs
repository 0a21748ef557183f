//! Concurrency-tracking autoscaler with stable/panic windows.
//!
//! Models the KPA-style loop: replicas report observed concurrency, the
//! scaler averages those reports over a long stable window and a short panic
//! window, and desired capacity is `ceil(average / effective_target)`. A
//! burst that exceeds the panic threshold flips the scaler into panic mode,
//! where capacity may only grow; the mode decays back to stable after a full
//! stable window without the burst condition. Scale to zero happens only
//! after the stable average has been zero for a grace period.

use std::collections::BTreeMap;

use crate::scenario::AutoscalerConfig;

/// One concurrency report from a replica (or the ingress buffer): the
/// time-averaged number of requests in flight over the measurement epoch,
/// the way a sidecar proxy reports average concurrency per period.
///
/// `measured_at_us` is the epoch the value describes; `observed_at_us` is
/// when the scaler received it. Reports from remote workers arrive late by
/// the intra-site delay, so the two differ and the window is keyed by the
/// measurement time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcurrencySample {
    pub replica: u32,
    pub measured_at_us: u64,
    pub observed_at_us: u64,
    pub concurrency: f64,
}

impl ConcurrencySample {
    pub fn new(replica: u32, measured_at_us: u64, observed_at_us: u64, concurrency: f64) -> Self {
        debug_assert!(
            observed_at_us >= measured_at_us,
            "sample observed before it was measured"
        );
        ConcurrencySample { replica, measured_at_us, observed_at_us, concurrency }
    }
}

/// Scaler operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Stable,
    Panic,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Stable => "stable",
            Mode::Panic => "panic",
        }
    }
}

/// One autoscaler evaluation, for post-run inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRow {
    pub at_us: u64,
    pub stable_avg: f64,
    pub panic_avg: f64,
    pub ready: u32,
    pub provisioning: u32,
    pub mode: Mode,
    pub desired: u32,
}

/// The autoscaler itself. Pure state machine: the simulation feeds it
/// samples and asks for a desired replica count at each tick.
#[derive(Debug)]
pub struct Autoscaler {
    cfg: AutoscalerConfig,
    /// Total reported concurrency per measurement epoch. Several replicas
    /// reporting the same epoch sum into one bucket.
    window: BTreeMap<u64, f64>,
    mode: Mode,
    /// Last time the panic-entry condition held.
    last_panic_trigger_us: u64,
    /// Last evaluation that saw a nonzero stable average.
    last_positive_eval_us: u64,
    decisions: Vec<DecisionRow>,
    log_decisions: bool,
}

impl Autoscaler {
    pub fn new(cfg: AutoscalerConfig) -> Self {
        Autoscaler {
            cfg,
            window: BTreeMap::new(),
            mode: Mode::Stable,
            last_panic_trigger_us: 0,
            last_positive_eval_us: 0,
            decisions: Vec::new(),
            log_decisions: false,
        }
    }

    pub fn enable_decision_log(&mut self) {
        self.log_decisions = true;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn decisions(&self) -> &[DecisionRow] {
        &self.decisions
    }

    pub fn take_decisions(&mut self) -> Vec<DecisionRow> {
        std::mem::take(&mut self.decisions)
    }

    pub fn record_sample(&mut self, sample: &ConcurrencySample) {
        self.record_concurrency(sample.measured_at_us, sample.concurrency);
    }

    pub fn record_concurrency(&mut self, measured_at_us: u64, concurrency: f64) {
        *self.window.entry(measured_at_us).or_insert(0.0) += concurrency;
    }

    /// Mean of the per-epoch totals measured in `(now - horizon, now]`.
    fn window_avg(&self, now_us: u64, horizon_us: u64) -> f64 {
        let lo = now_us.saturating_sub(horizon_us);
        let mut sum = 0.0;
        let mut epochs = 0u64;
        for (&epoch, &total) in self.window.range(..=now_us) {
            if epoch <= lo && now_us >= horizon_us {
                continue;
            }
            sum += total;
            epochs += 1;
        }
        if epochs == 0 {
            0.0
        } else {
            sum / epochs as f64
        }
    }

    /// Drop epochs that have aged out of the stable window.
    fn evict(&mut self, now_us: u64) {
        let stable_us = self.cfg.stable_window_s * 1_000_000;
        if now_us >= stable_us {
            let cutoff = now_us - stable_us;
            self.window = self.window.split_off(&(cutoff + 1));
        }
    }

    /// Evaluate one tick: returns the desired replica count.
    ///
    /// `ready` and `provisioning` describe current capacity; the result is
    /// clamped to `[0, max_replicas]`, and zero is only returned once the
    /// stable signal has been silent for the scale-to-zero grace period.
    pub fn evaluate(&mut self, now_us: u64, ready: u32, provisioning: u32) -> u32 {
        self.evict(now_us);
        let target = self.cfg.effective_target();
        let stable_avg = self.window_avg(now_us, self.cfg.stable_window_s * 1_000_000);
        let panic_horizon_us = (self.cfg.panic_window_s() * 1e6).round() as u64;
        let panic_avg = self.window_avg(now_us, panic_horizon_us);

        if stable_avg > 0.0 {
            self.last_positive_eval_us = now_us;
        }

        // Panic entry: the short-window average implies more than
        // panic_threshold_pct of current capacity.
        let capacity_target = (ready.max(1) as f64) * target;
        if panic_avg >= self.cfg.panic_threshold_pct / 100.0 * capacity_target {
            self.mode = Mode::Panic;
            self.last_panic_trigger_us = now_us;
        } else if self.mode == Mode::Panic
            && now_us.saturating_sub(self.last_panic_trigger_us)
                >= self.cfg.stable_window_s * 1_000_000
        {
            self.mode = Mode::Stable;
        }

        let current = ready + provisioning;
        let mut desired = match self.mode {
            Mode::Stable => (stable_avg / target).ceil() as u32,
            // While panicking, capacity may only grow.
            Mode::Panic => ((panic_avg / target).ceil() as u32).max(current),
        };

        if desired == 0 && current > 0 {
            let silent_us = now_us.saturating_sub(self.last_positive_eval_us);
            if silent_us < self.cfg.scale_to_zero_grace_s * 1_000_000 {
                desired = 1;
            }
        }

        desired = desired.min(self.cfg.max_replicas);

        if self.log_decisions {
            self.decisions.push(DecisionRow {
                at_us: now_us,
                stable_avg,
                panic_avg,
                ready,
                provisioning,
                mode: self.mode,
                desired,
            });
        }
        desired
    }
}
