use std::hint::black_box;

use bregfw::diagnostics::check_descent_lemma_with;
use bregfw::experiment::{generate_dataset, parse_config, run_experiment, RecipeParams};
use bregfw::kernels::estimate_nu_with;
use bregfw::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn descent_lemma(c: &mut Criterion) {
    let p = RecipeParams {
        m: Some(100),
        n: Some(200),
        ..Default::default()
    };
    let ds = generate_dataset("kl_inverse", &p, 1).unwrap();
    let l = ds.constants.smad_l.unwrap();
    let mut g = c.benchmark_group("descent_lemma_2000_pairs");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                check_descent_lemma_with(
                    &ds.objective,
                    &ds.kernel,
                    l,
                    &ds.region,
                    2000,
                    1,
                    black_box(exec),
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn nu_estimation(c: &mut Criterion) {
    let region = bregfw::Region::SimplexLeqOne { n: 200 };
    let gammas: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let mut g = c.benchmark_group("estimate_nu_entropy_1000_pairs");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                estimate_nu_with(
                    &bregfw::Kernel::Entropy,
                    &region,
                    1000,
                    &gammas,
                    1,
                    black_box(exec),
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn experiment_batch(c: &mut Criterion) {
    let base = parse_config(
        r#"
repetitions = 8
max_iters = 300
[problem]
recipe = "kl_inverse"
m = 20
n = 50
[[solver]]
id = "BregFW"
[[solver]]
id = "EucFW"
[[solver]]
id = "MD"
"#,
    )
    .unwrap();
    let mut g = c.benchmark_group("experiment_8_reps_3_solvers");
    g.sample_size(10);
    for (name, parallel) in [("sequential", false), ("parallel", true)] {
        let mut cfg = base.clone();
        cfg.parallel = parallel;
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_experiment(black_box(&cfg)))
        });
    }
    g.finish();
}

criterion_group!(benches, descent_lemma, nu_estimation, experiment_batch);
criterion_main!(benches);
