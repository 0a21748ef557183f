//! Helpers shared by the criterion benchmarks.

use edgesim_core::{expand_grid, RunPlan, ScenarioConfig, TopologyKind};

/// One short run at 50 ms total delay and 4 ms processing, sized by user
/// count and duration. Goes through the normal scenario expansion so the
/// benched configuration can't drift from what `run` would execute.
pub fn smoke_plan(kind: TopologyKind, users: u32, duration_s: u64) -> RunPlan {
    let mut cfg = ScenarioConfig::default();
    cfg.topology.kind = Some(kind);
    cfg.delay_grid_ms = vec![50.0];
    cfg.user_grid = vec![users];
    cfg.processing_grid_ms = vec![4.0];
    cfg.workload.duration_s = duration_s;
    expand_grid(&cfg, kind).remove(0)
}
