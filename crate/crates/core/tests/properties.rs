use bregfw::experiment::{generate_dataset, RecipeParams};
use bregfw::point::DensePoint;
use bregfw::solvers::afw_run_observed;
use bregfw::{make_problem, AdaptiveParams, Region, SolveConfig, StepRule};
use proptest::prelude::*;

fn region_strategy() -> impl Strategy<Value = Region> {
    prop_oneof![
        (1usize..10).prop_map(|n| Region::SimplexLeqOne { n }),
        prop::collection::vec((-3.0f64..0.0, 0.01f64..3.0), 1..8).prop_map(|b| Region::Box {
            lower: b.iter().map(|p| p.0).collect(),
            upper: b.iter().map(|p| p.0 + p.1).collect(),
        }),
        (1usize..10, 0.1f64..4.0).prop_map(|(n, b_max)| Region::L2Ball { n, b_max }),
        (1usize..10, 1usize..10)
            .prop_filter("k <= n", |(n, k)| k <= n)
            .prop_map(|(n, k)| Region::KSparse { n, k }),
    ]
}

fn with_direction() -> impl Strategy<Value = (Region, Vec<f64>)> {
    region_strategy().prop_flat_map(|r| {
        let n = r.shape()[0];
        (Just(r), prop::collection::vec(-5.0f64..5.0, n))
    })
}

proptest! {
    #[test]
    fn lmo_is_feasible((region, a) in with_direction()) {
        let v = region.lmo(&DensePoint::vector(a)).unwrap();
        prop_assert!(region.contains(&v, 1e-12));
    }

    #[test]
    fn lmo_is_scale_equivariant((region, a) in with_direction(), c in 0.01f64..100.0) {
        let a = DensePoint::vector(a);
        let v = region.lmo(&a).unwrap();
        let w = region.lmo(&a.scaled(c)).unwrap();
        // Ties may pick different vertices; the attained value must agree.
        prop_assert!((a.dot(&v) - a.dot(&w)).abs() <= 1e-12 * (1.0 + a.dot(&v).abs()));
    }

    #[test]
    fn lmo_beats_sampled_points((region, a) in with_direction(), seed in 0u64..1000) {
        let a = DensePoint::vector(a);
        let best = a.dot(&region.lmo(&a).unwrap());
        let mut rng = bregfw::par::stream_rng(seed, 0);
        for _ in 0..20 {
            let x = region.sample_interior(&mut rng);
            prop_assert!(best <= a.dot(&x) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn active_set_laws_hold(seed in 0u64..10_000, n in 2usize..8, simplex in any::<bool>()) {
        let p = RecipeParams { n: Some(n), interior: Some(false), ..Default::default() };
        let mut ds = generate_dataset("quadratic", &p, seed).unwrap();
        if simplex {
            ds = ds.with_region(Region::SimplexLeqOne { n }).unwrap();
        }
        let problem = make_problem(ds.objective.clone(), ds.kernel.clone(), ds.region.clone(), ds.constants).unwrap();
        let v0 = problem.region.lmo(&problem.objective.gradient(&ds.x0).unwrap()).unwrap();
        let config = SolveConfig::new(StepRule::AdaptiveBregman(AdaptiveParams::default())).with_max_iters(100);
        let mut ok = true;
        let mut last_primal = f64::INFINITY;
        let (run, counters) = afw_run_observed(&problem, &config, &v0, |e| {
            let atoms = e.active.atoms();
            ok &= (e.active.weight_sum() - 1.0).abs() <= 1e-12;
            ok &= atoms.iter().all(|(_, w)| *w > 0.0);
            ok &= e.active.combination().max_abs_diff(e.x) <= 1e-10 * (1.0 + e.x.max_abs());
            ok &= e.drops <= e.adds;
            ok &= problem.region.contains(e.x, 1e-9);
        })
        .unwrap();
        prop_assert!(ok);
        prop_assert!(counters.drops <= counters.adds);
        for r in &run.records {
            prop_assert!(r.primal <= last_primal + 1e-12 * (1.0 + last_primal.abs()));
            last_primal = r.primal;
        }
    }
}
