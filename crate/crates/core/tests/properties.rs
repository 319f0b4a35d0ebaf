use mdim::group::{boundary_ratio, window_product};
use mdim::hausdorff::{
    ball_dim_at_scale, dim_at_scale, hausdorff_measure_at_scale, HausdorffQuery,
};
use mdim::metric::{
    avoid_ties, bowen_commutes_with_transform, exponent_range, geometric_grid, random_metric,
};
use mdim::packing::{
    count_chain, greedy_separated, katok_spanning, max_separated, min_cover, min_spanning,
    separated_upper_bound, CountQuery,
};
use mdim::systems::{system_metric, FiniteSystem};
use mdim::{CountMode, DistanceMatrix, Element, FiniteWindow, GSystem, MetricTransform};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn metric(seed: u64, n: usize) -> DistanceMatrix {
    random_metric(n, 0.05, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn system(seed: u64, n: usize) -> FiniteSystem {
    FiniteSystem::random(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn bowen(seed: u64, n: usize, k: usize) -> DistanceMatrix {
    let s = system(seed, n);
    s.bowen_matrix(&s.points(), &FiniteWindow::cube(1, k).unwrap())
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn sandwich_chain(seed in any::<u64>(), n in 1usize..=12, k in 1usize..=3, eps in 0.05f64..0.9) {
        let rep = count_chain(&bowen(seed, n, k), eps, 10_000_000).unwrap();
        prop_assert!(rep.holds(), "{:?}", rep);
    }

    #[test]
    fn counts_monotone_in_scale(seed in any::<u64>(), n in 1usize..=10, e1 in 0.05f64..0.9, e2 in 0.05f64..0.9) {
        let d = metric(seed, n);
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let count = |e: f64| {
            let q = CountQuery::exact(e);
            (max_separated(&d, &q).unwrap().value, min_spanning(&d, &q).unwrap().value, min_cover(&d, &q).unwrap().value)
        };
        let (a, b) = (count(lo), count(hi));
        prop_assert!(a.0 >= b.0 && a.1 >= b.1 && a.2 >= b.2);
    }

    #[test]
    fn bowen_monotone_in_window(seed in any::<u64>(), n in 2usize..=8, k in 1usize..=3) {
        let small = bowen(seed, n, k);
        let large = bowen(seed, n, k + 1);
        for i in 0..n {
            for j in 0..n {
                prop_assert!(small.get(i, j) <= large.get(i, j));
            }
        }
    }

    #[test]
    fn greedy_brackets_exact(seed in any::<u64>(), n in 1usize..=12, eps in 0.05f64..0.9) {
        let d = metric(seed, n);
        let e = avoid_ties(eps, &[&d]);
        let exact = max_separated(&d, &CountQuery::exact(e)).unwrap().value;
        prop_assert!(greedy_separated(&d, e).len() <= exact);
        prop_assert!(exact <= separated_upper_bound(&d, e));
        prop_assert!(max_separated(&d, &CountQuery::greedy(e)).unwrap().value <= exact);
        let r = min_spanning(&d, &CountQuery::exact(e)).unwrap().value;
        prop_assert!(min_spanning(&d, &CountQuery::greedy(e)).unwrap().value >= r);
        let c = min_cover(&d, &CountQuery::exact(e)).unwrap().value;
        prop_assert!(min_cover(&d, &CountQuery::greedy(e)).unwrap().value >= c);
    }

    #[test]
    fn katok_below_spanning(seed in any::<u64>(), n in 1usize..=10, eps in 0.05f64..0.9, delta in 0.01f64..0.99) {
        let d = metric(seed, n);
        let masses = vec![1.0 / n as f64; n];
        let q = CountQuery::exact(eps);
        prop_assert!(katok_spanning(&d, &masses, delta, &q).unwrap().value <= min_spanning(&d, &q).unwrap().value);
    }

    #[test]
    fn bowen_commutes_with_transforms(seed in any::<u64>(), n in 2usize..=8, k in 1usize..=4, a in 0.05f64..0.99) {
        let sys = Arc::new(system(seed, n));
        let d = system_metric(sys.clone());
        let w = FiniteWindow::cube(1, k).unwrap();
        let act = |g: &Element, x: &usize| sys.act(g, x);
        for t in [MetricTransform::Power { a }, MetricTransform::LogPower { a }] {
            for x in 0..n {
                for y in 0..n {
                    let (lhs, rhs) = bowen_commutes_with_transform(&t, &d, act, &w, &x, &y).unwrap();
                    prop_assert!((lhs - rhs).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn snowflake_identity(seed in any::<u64>(), n in 1usize..=8, a in 0.1f64..1.0, s in 0.0f64..3.0, eta in 0.05f64..0.9) {
        let d = metric(seed, n);
        let e = avoid_ties(eta, &[&d]);
        let da = d.map(|v| v.powf(a));
        prop_assume!(!da.has_tie(e.powf(a), 1e-12));
        let lhs = hausdorff_measure_at_scale(&da, &HausdorffQuery::new(s, e.powf(a), 0.0)).unwrap().value;
        let rhs = hausdorff_measure_at_scale(&d, &HausdorffQuery::new(a * s, e, 0.0)).unwrap().value;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1e-300));
    }

    #[test]
    fn power_counts_equal(seed in any::<u64>(), n in 1usize..=10, eps in 0.05f64..0.9, ai in 0usize..3) {
        let a = [0.3, 0.5, 0.9][ai];
        let d = metric(seed, n);
        let da = d.map(|v| v.powf(a));
        let e = avoid_ties(eps, &[&d]);
        prop_assume!(!da.has_tie(e.powf(a), 1e-12));
        let (q, qa) = (CountQuery::exact(e), CountQuery::exact(e.powf(a)));
        prop_assert_eq!(max_separated(&d, &q).unwrap().value, max_separated(&da, &qa).unwrap().value);
        prop_assert_eq!(min_spanning(&d, &q).unwrap().value, min_spanning(&da, &qa).unwrap().value);
        prop_assert_eq!(min_cover(&d, &q).unwrap().value, min_cover(&da, &qa).unwrap().value);
    }

    #[test]
    fn ball_dimension_dominates(seed in any::<u64>(), n in 1usize..=8, eps in 0.05f64..1.0, floor in 0.0f64..0.04) {
        let d = metric(seed, n);
        let sub = dim_at_scale(&d, eps, 1.0, floor, CountMode::Exact).unwrap();
        let ball = ball_dim_at_scale(&d, eps, 1.0, floor, CountMode::Exact).unwrap();
        prop_assert!(ball.value >= sub.value - 2e-6);
    }

    #[test]
    fn sumset_commutes(a in prop::collection::vec(-5i64..5, 1..6), b in prop::collection::vec(-5i64..5, 1..6)) {
        let w = |v: &[i64]| FiniteWindow::new(v.iter().map(|&x| Element::new(vec![x]))).unwrap();
        let (s, f) = (w(&a), w(&b));
        let sf = window_product(&s, &f);
        prop_assert_eq!(&sf, &window_product(&f, &s));
        prop_assert!(sf.len() <= s.len() * f.len());
    }

    #[test]
    fn box_boundary_bound(n in 1usize..20, rank in 1usize..=3, g in prop::collection::vec(-4i64..=4, 3)) {
        prop_assume!(n.pow(rank as u32) <= 4000);
        let f = FiniteWindow::cube(rank, n).unwrap();
        let g = Element::new(g[..rank].to_vec());
        prop_assert!(boundary_ratio(&f, &g) <= rank as f64 * g.norm_inf() as f64 / n as f64 + 1e-12);
    }

    #[test]
    fn transform_exponents_ordered(a in 0.05f64..0.95) {
        let grid = geometric_grid(0.1, 1e-10, 16);
        for t in [MetricTransform::Power { a }, MetricTransform::LogPower { a }, MetricTransform::Hybrid { alpha: a, eps: 0.5 }] {
            t.validate(0.99, 10_000).unwrap();
            let k = exponent_range(&t, &grid).unwrap();
            prop_assert!(k.k_min <= k.k_max && k.k_max <= 1.0 + 1e-12);
        }
    }
}
