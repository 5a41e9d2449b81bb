//! Benchmarks comparing the rayon data-parallel kernels against their
//! sequential fallbacks, plus one end-to-end scenario run.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use d2dsim::channel;
use d2dsim::config::{RunConfig, RunLabel};
use d2dsim::energy;
use d2dsim::geometry;
use d2dsim::runner;

fn scenario(device_count: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.device_count = device_count;
    cfg.seed = 5;
    cfg
}

fn bench_cellular_links(c: &mut Criterion) {
    let mut group = c.benchmark_group("cellular_links");
    for &n in &[2_000usize, 20_000] {
        let cfg = scenario(n);
        let env = geometry::build_environment(
            &cfg.geometry.grid,
            cfg.geometry.cell_radius_m,
            cfg.geometry.bs_height_m,
            cfg.seed,
        )
        .unwrap();
        let devices = geometry::deploy_devices(
            &env,
            n,
            cfg.seed,
            cfg.traffic.profile(),
            cfg.power.capacity_j,
            cfg.device.max_tx_power_dbm,
        )
        .unwrap();
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| channel::cellular_links(&env, black_box(&devices), &cfg.channel, None))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| channel::cellular_links_seq(&env, black_box(&devices), &cfg.channel, None))
        });
    }
    group.finish();
}

fn bench_energy(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy_of_trace");
    let cfg = scenario(5_000);
    let prepared = runner::prepare(&cfg).unwrap();
    let output = runner::execute(&prepared, &cfg, RunLabel::Baseline).unwrap();
    let staged = prepared.devices.clone();
    group.bench_function("parallel", |b| {
        b.iter(|| energy::energy_of_trace(black_box(&output.trace), &staged, &cfg.power).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| energy::energy_of_trace_seq(black_box(&output.trace), &staged, &cfg.power).unwrap())
    });
    group.finish();
}

fn bench_full_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_scenario");
    group.sample_size(10);
    let cfg = scenario(5_000);
    let prepared = runner::prepare(&cfg).unwrap();
    group.bench_function("distance_5k_devices", |b| {
        b.iter(|| runner::execute(&prepared, &cfg, black_box(RunLabel::Distance)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_cellular_links, bench_energy, bench_full_run);
criterion_main!(benches);
