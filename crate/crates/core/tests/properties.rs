//! Property tests for the invariants the simulator is built on: delay
//! splitting, queue ordering, percentile math, link bounds, grid expansion
//! and whole-run determinism/conservation on small randomized plans.

use proptest::prelude::*;

use edgesim_core::{
    derive_delays, expand_grid, mix_run_seed, simulate, stream_rng, EventKind, Kernel,
    LatencyHistogram, Link, ScenarioConfig, StreamId, TopologyKind, Traversal,
};

fn kinds() -> impl Strategy<Value = TopologyKind> {
    prop_oneof![Just(TopologyKind::SingleSite), Just(TopologyKind::MultiSite)]
}

proptest! {
    #[test]
    fn delay_split_reconstructs_the_total(x in 0.0f64..2000.0, kind in kinds()) {
        let d = derive_delays(x, kind).unwrap();
        prop_assert!((d.access_delay_ms + d.intra_delay_ms - x).abs() < 1e-9);
        match kind {
            TopologyKind::SingleSite => prop_assert_eq!(d.intra_delay_ms, 0.0),
            TopologyKind::MultiSite => {
                prop_assert!((d.access_delay_ms - d.intra_delay_ms).abs() < 1e-9)
            }
        }
    }

    #[test]
    fn kernel_pops_in_time_order_with_fifo_ties(
        times in prop::collection::vec(0u64..10_000, 1..200),
        cancel_mask in prop::collection::vec(any::<bool>(), 1..200),
    ) {
        let mut kernel = Kernel::new();
        let mut handles = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            handles.push((i, t, kernel.schedule(t, EventKind::UserIssue { user: i as u32 })));
        }
        let mut cancelled = 0usize;
        for (&(_, _, handle), &kill) in handles.iter().zip(cancel_mask.iter()) {
            if kill {
                kernel.cancel(handle);
                cancelled += 1;
            }
        }
        let mut popped: Vec<(u64, u32)> = Vec::new();
        kernel.drain(|k, ev| {
            let user = match ev.kind {
                EventKind::UserIssue { user } => user,
                _ => unreachable!(),
            };
            popped.push((k.now_us(), user));
        });
        prop_assert_eq!(popped.len(), times.len() - cancelled.min(times.len()));
        // Nondecreasing times; insertion order breaks ties.
        for w in popped.windows(2) {
            prop_assert!(w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1));
        }
    }

    #[test]
    fn percentiles_match_the_nearest_rank_oracle(
        values in prop::collection::vec(0u64..10_000_000, 1..300),
        p in 0.0001f64..100.0,
    ) {
        let mut hist = LatencyHistogram::new();
        for &v in &values {
            hist.record(v);
        }
        let mut sorted = values.clone();
        sorted.sort_unstable();
        let rank = ((p / 100.0 * sorted.len() as f64).ceil() as usize).max(1);
        prop_assert_eq!(hist.percentile_us(p), sorted[rank - 1]);
        prop_assert_eq!(hist.count(), values.len() as u64);
        let naive_mean = values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64;
        prop_assert!((hist.mean_us() - naive_mean).abs() < 1e-6 * naive_mean.max(1.0));
    }

    #[test]
    fn jittered_links_stay_inside_their_band(
        delay in 1u64..200_000,
        jitter in 0u64..50_000,
        seed in any::<u64>(),
    ) {
        let link = Link::new(delay, jitter, 0.0);
        let mut rng = stream_rng(seed, StreamId::AccessLink);
        for _ in 0..200 {
            match link.sample(&mut rng) {
                Traversal::Delivered { delay_us } => {
                    prop_assert!(delay_us >= delay.saturating_sub(jitter));
                    prop_assert!(delay_us <= delay + jitter);
                }
                Traversal::Dropped => prop_assert!(false, "lossless link dropped"),
            }
        }
    }

    #[test]
    fn total_loss_drops_everything(seed in any::<u64>()) {
        let link = Link::new(1000, 0, 1.0);
        let mut rng = stream_rng(seed, StreamId::IntraLink);
        for _ in 0..50 {
            prop_assert_eq!(link.sample(&mut rng), Traversal::Dropped);
        }
    }

    #[test]
    fn grid_expansion_is_complete_ordered_and_uniquely_seeded(
        delays in prop::collection::vec(0.0f64..500.0, 1..5),
        users in prop::collection::vec(1u32..100, 1..4),
        procs in prop::collection::vec(0.0f64..64.0, 1..5),
        reps in 1u32..4,
        seed in any::<u64>(),
        kind in kinds(),
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.delay_grid_ms = delays.clone();
        cfg.user_grid = users.clone();
        cfg.processing_grid_ms = procs.clone();
        cfg.repetitions = reps;
        cfg.seed = seed;
        let plans = expand_grid(&cfg, kind);
        prop_assert_eq!(
            plans.len(),
            delays.len() * users.len() * procs.len() * reps as usize
        );
        // Delay is the outermost axis, repetition the innermost.
        let mut expect = Vec::new();
        for &d in &delays {
            for &u in &users {
                for &p in &procs {
                    for rep in 0..reps {
                        expect.push((d, u, p, rep));
                    }
                }
            }
        }
        for (plan, want) in plans.iter().zip(expect.iter()) {
            prop_assert_eq!(plan.delays.x_total_ms, want.0);
            prop_assert_eq!(plan.users, want.1);
            prop_assert_eq!(plan.processing_ms, want.2);
            prop_assert_eq!(plan.repetition, want.3);
        }
        let mut seeds: Vec<u64> = plans.iter().map(|p| p.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        prop_assert_eq!(seeds.len(), plans.len());
        // Same config expands identically.
        prop_assert_eq!(&plans, &expand_grid(&cfg, kind));
    }

    #[test]
    fn run_seeds_differ_across_base_seeds(base_a in any::<u64>(), base_b in any::<u64>()) {
        prop_assume!(base_a != base_b);
        prop_assert_ne!(mix_run_seed(base_a, 0), mix_run_seed(base_b, 0));
    }
}

/// Small randomized end-to-end runs. Kept to a few cases: each one is a full
/// simulation, and the debug assertions inside `finish` already check slot
/// conservation and user-resolution on every run.
fn small_plan_strategy() -> impl Strategy<Value = (TopologyKind, f64, u32, f64, f64, f64, u64)> {
    (
        kinds(),
        prop_oneof![Just(0.0), Just(5.0), Just(12.5), Just(40.0)],
        1u32..=4,
        prop_oneof![Just(0.0), Just(1.0), Just(4.0)],
        prop_oneof![Just(0.0), Just(2.0)],
        prop_oneof![Just(0.0), Just(0.05)],
        3u64..=6,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn randomized_small_runs_are_deterministic_and_conserve_requests(
        (kind, x, users, proc, jitter, loss, duration) in small_plan_strategy(),
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.topology.kind = Some(kind);
        cfg.delay_grid_ms = vec![x];
        cfg.user_grid = vec![users];
        cfg.processing_grid_ms = vec![proc];
        cfg.network.jitter_ms = jitter;
        cfg.network.loss_prob = loss;
        cfg.workload.duration_s = duration;
        cfg.workload.request_timeout_ms = 2_000;
        let plan = &expand_grid(&cfg, kind)[0];
        let a = simulate(plan);
        let b = simulate(plan);
        prop_assert_eq!(&a, &b);

        // Closed loop: at most one outstanding request per user, so the
        // per-user count is bounded by the shortest possible cycle (the
        // service time itself; wire time and the wobble only add to it).
        let min_cycle_us = ((proc + cfg.function.base_overhead_ms) * 1000.0) as u64;
        prop_assert!(a.successes <= users as u64 * (duration * 1_000_000 / min_cycle_us + 1));
        prop_assert_eq!(a.throughput_rps, a.successes as f64 / duration as f64);
        if loss == 0.0 && jitter == 0.0 {
            prop_assert_eq!(a.drops, 0);
        }
    }
}
