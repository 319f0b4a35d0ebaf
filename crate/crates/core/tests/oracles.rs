//! Solver values against brute-force subset enumeration.

use mdim::hausdorff::{cell_cost, dim_at_scale, hausdorff_measure_at_scale, HausdorffQuery};
use mdim::metric::{avoid_ties, random_metric};
use mdim::packing::{katok_spanning, max_separated, min_cover, min_spanning, CountQuery};
use mdim::{CountMode, DistanceMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn members(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

fn diam(d: &DistanceMatrix, set: &[usize]) -> f64 {
    let mut m = 0.0_f64;
    for &i in set {
        for &j in set {
            m = m.max(d.get(i, j));
        }
    }
    m
}

fn brute_separated(d: &DistanceMatrix, eps: f64) -> usize {
    let n = d.len();
    (0..1usize << n)
        .filter(|&m| {
            let s = members(m, n);
            s.iter()
                .all(|&i| s.iter().all(|&j| i == j || d.get(i, j) > eps))
        })
        .map(|m| m.count_ones() as usize)
        .max()
        .unwrap()
}

fn brute_spanning(d: &DistanceMatrix, eps: f64) -> usize {
    let n = d.len();
    (1..1usize << n)
        .filter(|&m| {
            let c = members(m, n);
            (0..n).all(|x| c.iter().any(|&y| d.get(x, y) <= eps))
        })
        .map(|m| m.count_ones() as usize)
        .min()
        .unwrap()
}

/// Cheapest partition into cells of diameter `< eps`, under `cost`.
fn brute_partition(d: &DistanceMatrix, eps: f64, cost: impl Fn(f64) -> f64) -> f64 {
    let n = d.len();
    let full = (1usize << n) - 1;
    let mut best = vec![f64::INFINITY; full + 1];
    best[0] = 0.0;
    for m in 1..=full {
        let low = m & m.wrapping_neg();
        // enumerate submasks containing the lowest element
        let rest = m ^ low;
        let mut sub = rest;
        loop {
            let cell = sub | low;
            let dm = diam(d, &members(cell, n));
            if dm < eps {
                best[m] = best[m].min(cost(dm) + best[m ^ cell]);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    best[full]
}

fn instances(seed: u64, count: usize) -> Vec<(DistanceMatrix, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=8);
            let d = random_metric(n, 0.05, 1.0, &mut rng);
            let eps = avoid_ties(rng.gen_range(0.05..0.9), &[&d, &d.map(|v| v / 2.0)]);
            (d, eps)
        })
        .collect()
}

#[test]
fn counts_match_enumeration() {
    for (d, eps) in instances(11, 150) {
        let q = CountQuery::exact(eps);
        assert_eq!(
            max_separated(&d, &q).unwrap().value,
            brute_separated(&d, eps),
            "{d:?} ε={eps}"
        );
        assert_eq!(
            min_spanning(&d, &q).unwrap().value,
            brute_spanning(&d, eps),
            "{d:?} ε={eps}"
        );
        let cover = brute_partition(&d, eps, |_| 1.0);
        assert_eq!(
            min_cover(&d, &q).unwrap().value as f64,
            cover,
            "{d:?} ε={eps}"
        );
    }
}

#[test]
fn hausdorff_matches_partition_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (d, eps) in instances(13, 80) {
        if eps > 1.0 {
            continue;
        }
        let s = rng.gen_range(0.0..3.0);
        let floor = if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.001..0.05)
        };
        let expect = brute_partition(&d, eps, |dm| cell_cost(dm, floor, s));
        let got = hausdorff_measure_at_scale(&d, &HausdorffQuery::new(s, eps, floor))
            .unwrap()
            .value;
        assert!(
            (got - expect).abs() <= 1e-12 * expect.max(1.0),
            "{got} vs {expect}"
        );
    }
}

#[test]
fn katok_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for (d, eps) in instances(15, 80) {
        let n = d.len();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let masses: Vec<f64> = raw.iter().map(|m| m / total).collect();
        let delta = rng.gen_range(0.05..0.7);
        let expect = (1..1usize << n)
            .filter(|&m| {
                let c = members(m, n);
                let mass: f64 = (0..n)
                    .filter(|&x| c.iter().any(|&y| d.get(x, y) <= eps))
                    .map(|x| masses[x])
                    .sum();
                mass > 1.0 - delta + 1e-12
            })
            .map(|m| m.count_ones() as usize)
            .min()
            .unwrap();
        let got = katok_spanning(&d, &masses, delta, &CountQuery::exact(eps))
            .unwrap()
            .value;
        assert_eq!(got, expect);
    }
}

#[test]
fn grid_dimension_at_scale() {
    // cells are singletons or adjacent pairs; H = min(4·0.1^s, 2·0.25^s)
    let d = DistanceMatrix::from_line(&[0.0, 0.25, 0.5, 0.75]);
    let h = |s: f64| (4.0 * 0.1f64.powf(s)).min(2.0 * 0.25f64.powf(s));
    let mut lo = 0.0;
    let mut hi = 64.0;
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if h(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let got = dim_at_scale(&d, 0.3, 1.0, 0.1, CountMode::Exact).unwrap();
    assert!((got.value - lo).abs() <= 2e-6, "{} vs {lo}", got.value);
}
