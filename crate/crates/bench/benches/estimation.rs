use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use polyscale_bench::responses;
use polyscale_core::estimate::{fit_em, make_grid, marginal_loglik, FitOptions};
use polyscale_core::ModelKind;

fn em_fit(c: &mut Criterion) {
    let grid = make_grid(61, 6.0).unwrap();
    let mut group = c.benchmark_group("em_fit");
    group.sample_size(10);
    for model in ModelKind::ALL {
        let m = responses(model, 1000);
        group.bench_with_input(BenchmarkId::from_parameter(model), &m, |b, m| {
            b.iter(|| fit_em(m, model, &grid, &FitOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn e_step_likelihood(c: &mut Criterion) {
    let grid = make_grid(61, 6.0).unwrap();
    let m = responses(ModelKind::Grm, 5000);
    let fit = fit_em(&m, ModelKind::Grm, &grid, &FitOptions::default()).unwrap();
    c.bench_function("marginal_loglik/grm_5000", |b| {
        b.iter(|| marginal_loglik(&fit.items, &m, &grid).unwrap())
    });
}

criterion_group!(benches, em_fit, e_step_likelihood);
criterion_main!(benches);
