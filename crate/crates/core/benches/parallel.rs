use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qkdbench_core::par::Exec;
use qkdbench_core::photonsim;
use qkdbench_core::runner::{preset, run_sweep};

fn simulate(c: &mut Criterion) {
    let mut cfg = preset("fig2").unwrap();
    cfg.channel.loss_db = 10.0;
    cfg.sim.n_pulses = 1_000_000;
    let sim = cfg.sim_config(1);
    let mut group = c.benchmark_group("simulate_1e6_pulses");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| photonsim::simulate(&sim, exec).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut cfg = preset("fig2").unwrap();
    cfg.sim.n_pulses = 100_000;
    cfg.sweeps[0].values.truncate(8);
    let mut group = c.benchmark_group("fig2_sweep_8_points");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_sweep(&cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, simulate, sweep);
criterion_main!(benches);
