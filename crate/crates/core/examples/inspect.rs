//! Dump one run's scaling dynamics: decision rows, replica timeline and
//! path split. Handy when a grid cell behaves unexpectedly.
//!
//! Usage: inspect <single_site|multi_site> <x_total_ms> <users> <processing_ms> [duration_s]

use edgesim_core::{derive_delays, simulate, RunPlan, ScenarioConfig, TopologyKind};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = match args.get(1).map(String::as_str) {
        Some("multi_site") => TopologyKind::MultiSite,
        _ => TopologyKind::SingleSite,
    };
    let x: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100.0);
    let users: u32 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(500);
    let proc: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let duration: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(300);

    let cfg = ScenarioConfig::default();
    let mut plan = RunPlan {
        index: 0,
        topology: kind,
        delays: derive_delays(x, kind).unwrap(),
        users,
        processing_ms: proc,
        repetition: 0,
        seed: 7,
        worker_count: cfg.topology.worker_count,
        headnode_hosts_replicas: cfg.topology.headnode_hosts_replicas,
        function: cfg.function,
        autoscaler: cfg.autoscaler,
        workload: cfg.workload,
        placement: cfg.cluster.placement,
        initial_replicas: cfg.cluster.initial_replicas,
        ingress_cost_ms: cfg.cluster.ingress_cost_ms,
    };
    plan.workload.duration_s = duration;

    let r = simulate(&plan);
    println!(
        "{} x={} users={} proc={}: {:.1} rps, served head={} worker={}, max_ready={}",
        kind.as_str(),
        x,
        users,
        proc,
        r.throughput_rps,
        r.headnode_served,
        r.worker_served,
        r.max_ready_replicas
    );
    println!("\nreplica timeline (s -> ready):");
    for (t, n) in &r.replica_timeline {
        println!("  {:8.2} {}", *t as f64 / 1e6, n);
    }
    println!("\ndecisions (s mode stable panic ready prov -> desired):");
    for d in &r.autoscaler_decisions {
        println!(
            "  {:8.2} {:6} {:8.2} {:8.2} {:3} {:3} -> {}",
            d.at_us as f64 / 1e6,
            d.mode.as_str(),
            d.stable_avg,
            d.panic_avg,
            d.ready,
            d.provisioning,
            d.desired
        );
    }
}
