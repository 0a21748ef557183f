use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use edgesim_bench::smoke_plan;
use edgesim_core::{simulate, EventKind, Kernel, TopologyKind};

/// Raw event queue cost: schedule 100k events with scattered fire times,
/// then drain them all.
fn kernel_schedule_drain(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel");
    group.throughput(Throughput::Elements(100_000));
    group.bench_function("schedule_drain_100k", |b| {
        b.iter(|| {
            let mut kernel = Kernel::new();
            for i in 0..100_000u64 {
                kernel.schedule((i * 7919) % 1_000_003, EventKind::RunEnd);
            }
            let mut popped = 0u64;
            kernel.drain(|_, _| popped += 1);
            popped
        })
    });
    group.finish();
}

/// Whole-run cost for short sweeps at the two interesting load levels.
fn end_to_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for users in [1u32, 50] {
        group.bench_with_input(
            BenchmarkId::new("multi_site_x50_20s", users),
            &users,
            |b, &users| {
                let plan = smoke_plan(TopologyKind::MultiSite, users, 20);
                b.iter(|| simulate(&plan));
            },
        );
    }
    group.finish();
}

criterion_group!(benches, kernel_schedule_drain, end_to_end);
criterion_main!(benches);
