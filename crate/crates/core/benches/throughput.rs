//! Event throughput with one worker versus all available cores.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use tcs_core::config::RunConfig;
use tcs_core::pair::PairMode;
use tcs_core::pipeline::simulate_and_accumulate;

const EVENTS: u64 = 20_000;

fn throughput(c: &mut Criterion) {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get()).max(2);
    let mut group = c.benchmark_group("simulate_and_accumulate");
    group.sample_size(10);
    group.throughput(Throughput::Elements(EVENTS));
    for preset in ["back2back", "perfect_sphere"] {
        for (label, workers) in [("sequential", 1), ("parallel", cores)] {
            let mut cfg = RunConfig::new(PairMode::Ent, preset, EVENTS, 5);
            cfg.workers = workers;
            let run = cfg.resolve().expect("valid benchmark config");
            group.bench_with_input(BenchmarkId::new(label, preset), &run, |b, run| {
                b.iter(|| simulate_and_accumulate(run).expect("simulation"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, throughput);
criterion_main!(benches);
