use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stab_core::analysis::{sweep_region, Axis, AxisSpec, EmpiricalSettings, SweepBase, SweepOptions};
use stab_core::exec::Execution;

fn base() -> SweepBase {
    SweepBase { a: 2.0, b: 1.0, k: 3.0, sigma: 1.0, g: 1.0, alpha: 1.0, closed_loop: Some(-1.0) }
}

fn empirical_sweep(c: &mut Criterion) {
    let axis1 = AxisSpec { axis: Axis::A, min: 0.5, max: 4.0, steps: 8 };
    let axis2 = AxisSpec { axis: Axis::KPrime, min: 0.5, max: 8.0, steps: 8 };
    let settings = EmpiricalSettings { horizon: 5.0, ..EmpiricalSettings::default() };

    let mut group = c.benchmark_group("empirical_sweep_8x8");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::default())] {
        let options = SweepOptions { empirical: Some(settings.clone()), exec };
        group.bench_with_input(BenchmarkId::from_parameter(name), &options, |bench, options| {
            bench.iter(|| sweep_region(&base(), &axis1, &axis2, options).unwrap())
        });
    }
    group.finish();
}

fn analytic_sweep(c: &mut Criterion) {
    let axis1 = AxisSpec { axis: Axis::A, min: 0.5, max: 4.0, steps: 200 };
    let axis2 = AxisSpec { axis: Axis::KPrime, min: 0.5, max: 8.0, steps: 200 };

    let mut group = c.benchmark_group("analytic_sweep_200x200");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::default())] {
        let options = SweepOptions { empirical: None, exec };
        group.bench_with_input(BenchmarkId::from_parameter(name), &options, |bench, options| {
            bench.iter(|| sweep_region(&base(), &axis1, &axis2, options).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, empirical_sweep, analytic_sweep);
criterion_main!(benches);
