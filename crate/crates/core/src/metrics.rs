//! Latency accounting and per-run results.

use std::collections::BTreeMap;

use crate::autoscaler::DecisionRow;
use crate::scenario::TopologyKind;

/// Exact latency distribution, stored as counts per observed microsecond
/// value. Simulated latencies cluster on a handful of distinct values (path
/// delay is deterministic unless jitter is on), so this stays tiny even for
/// runs with tens of millions of requests, and percentiles are exact rather
/// than bucket-approximated.
#[derive(Debug, Clone, Default)]
pub struct LatencyHistogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
    sum_us: u128,
}

impl LatencyHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, latency_us: u64) {
        *self.counts.entry(latency_us).or_insert(0) += 1;
        self.total += 1;
        self.sum_us += latency_us as u128;
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    pub fn distinct_values(&self) -> usize {
        self.counts.len()
    }

    pub fn mean_us(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.sum_us as f64 / self.total as f64
        }
    }

    pub fn min_us(&self) -> u64 {
        self.counts.keys().next().copied().unwrap_or(0)
    }

    pub fn max_us(&self) -> u64 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    /// Nearest-rank percentile: the smallest recorded value whose cumulative
    /// count reaches `ceil(p/100 * total)`. Exact, no interpolation.
    pub fn percentile_us(&self, p: f64) -> u64 {
        if self.total == 0 {
            return 0;
        }
        debug_assert!((0.0..=100.0).contains(&p));
        let rank = ((p / 100.0) * self.total as f64).ceil().max(1.0) as u64;
        let mut cumulative = 0;
        for (&value, &count) in &self.counts {
            cumulative += count;
            if cumulative >= rank {
                return value;
            }
        }
        self.max_us()
    }

    /// Counts folded into fixed-width buckets, for coarse export.
    pub fn bucketed_ms(&self, width_ms: u64) -> Vec<(u64, u64)> {
        let width_us = width_ms.max(1) * 1000;
        let mut out: BTreeMap<u64, u64> = BTreeMap::new();
        for (&value, &count) in &self.counts {
            *out.entry(value / width_us * width_ms.max(1)).or_insert(0) += count;
        }
        out.into_iter().collect()
    }
}

/// Everything measured in one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub topology: TopologyKind,
    pub x_total_ms: f64,
    pub access_delay_ms: f64,
    pub intra_delay_ms: f64,
    pub users: u32,
    pub processing_ms: f64,
    pub duration_s: u64,
    /// Responses received by their user within the measured window.
    pub successes: u64,
    pub timeouts: u64,
    /// Messages lost to link drops (the affected user recovers via timeout).
    pub drops: u64,
    pub throughput_rps: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub mean_latency_ms: f64,
    pub max_ready_replicas: u32,
    pub seed: u64,
    // Diagnostics beyond the results table.
    /// Time-averaged outstanding user requests over the measured window.
    pub mean_outstanding: f64,
    pub headnode_served: u64,
    pub worker_served: u64,
    /// Requests still in flight when the load window closed.
    pub stragglers: u64,
    /// Ready replicas remaining once the simulation fully drained.
    pub final_ready_replicas: u32,
    /// (time_us, ready_count) at every readiness change.
    pub replica_timeline: Vec<(u64, u32)>,
    pub autoscaler_decisions: Vec<DecisionRow>,
}

/// Expected steady-state throughput of a closed loop with `users` clients,
/// zero think time, and a fixed per-request response time, by Little's law:
/// each client completes one request every `rtt + processing + overhead`.
/// Holds whenever requests never queue (per-replica concurrency unlimited).
pub fn analytic_closed_loop_oracle(
    users: u32,
    rtt_ms: f64,
    processing_ms: f64,
    overhead_ms: f64,
) -> f64 {
    users as f64 * 1000.0 / (rtt_ms + processing_ms + overhead_ms)
}
