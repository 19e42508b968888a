use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dampopt::bench::{test_grid, BenchmarkSpec, Family};
use dampopt::model::{modal_transform, DampingParameter};
use dampopt::rbm::{position_factor, sweep, sweep_sequential, ErrorModel, Estimator, ReducedBasis, ORTH_TOL};
use dampopt::response::ResponseOptions;

fn error_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("error_sweep");
    group.sample_size(10);
    for n in [60, 120] {
        let spec = BenchmarkSpec::new(Family::Example1, n);
        let modal = modal_transform(&spec.system().unwrap()).unwrap();
        let test = test_grid(&modal.bounds, spec.test_points());
        let opts = ResponseOptions {
            factor_tol: 1e-6,
            ..ResponseOptions::default()
        };
        let g_lo = &test[0];
        let g_hi = &test[test.len() - 1];
        let basis = ReducedBasis::seed(
            None,
            &position_factor(&modal, g_lo, &opts).unwrap(),
            &g_lo.0,
            &position_factor(&modal, g_hi, &opts).unwrap(),
            &g_hi.0,
            ORTH_TOL,
        );
        let em = ErrorModel::new(&modal, &basis.v1, &basis.v1_err).unwrap();
        let params: Vec<DampingParameter> = test.clone();

        group.bench_with_input(BenchmarkId::new("parallel", n), &params, |b, p| {
            b.iter(|| sweep(&em, p, Estimator::Trace))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &params, |b, p| {
            b.iter(|| sweep_sequential(&em, p, Estimator::Trace))
        });
    }
    group.finish();
}

criterion_group!(benches, error_sweep);
criterion_main!(benches);
