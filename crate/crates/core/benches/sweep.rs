use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use novikov_atlas::dispersion::DispersionModel;
use novikov_atlas::par::Exec;
use novikov_atlas::scanner::{sweep, SweepConfig, SweepControl};
use novikov_atlas::section::PlaneDirection;

fn coarse_sweep(c: &mut Criterion) {
    let model = DispersionModel::builtin("cos-sum").unwrap();
    let config = SweepConfig::fixed(-0.5, 8, 0);
    let mut group = c.benchmark_group("sweep_cos_sum_res8");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| {
                let control = SweepControl {
                    exec,
                    ..SweepControl::default()
                };
                sweep(&model, &config, control).unwrap()
            });
        });
    }
    group.finish();
}

fn interval(c: &mut Criterion) {
    let model = DispersionModel::builtin("cos-sum").unwrap();
    let dir = PlaneDirection::Field(vec![0.0, 0.0, 1.0]);
    let params = novikov_atlas::scanner::ScanParams::default();
    let mut group = c.benchmark_group("energy_interval_cos_sum_z");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| novikov_atlas::scanner::energy_interval(&model, &dir, &params, exec, false).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, coarse_sweep, interval);
criterion_main!(benches);
