//! Distances: base metrics, Bowen sup-metrics, product max-metrics, metric
//! transforms `ζ∘d`, the uniform distance between metrics, and transform
//! exponents.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Element, FiniteWindow};

/// Tolerance for identities that hold exactly in real arithmetic.
pub const EXACT_TOL: f64 = 1e-12;

/// Default number of `(x, y)` pairs used to validate subadditivity.
pub const DEFAULT_VALIDATION_PAIRS: usize = 10_000;

type Evaluator<P> = dyn Fn(&P, &P) -> f64 + Send + Sync;

/// A metric given by a pure evaluator and a bound on its diameter.
pub struct MetricSpec<P> {
    label: String,
    diameter: f64,
    eval: Arc<Evaluator<P>>,
}

impl<P> Clone for MetricSpec<P> {
    fn clone(&self) -> Self {
        Self {
            label: self.label.clone(),
            diameter: self.diameter,
            eval: Arc::clone(&self.eval),
        }
    }
}

impl<P> fmt::Debug for MetricSpec<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricSpec")
            .field("label", &self.label)
            .field("diameter", &self.diameter)
            .finish()
    }
}

impl<P: 'static> MetricSpec<P> {
    pub fn new(
        label: impl Into<String>,
        diameter: f64,
        eval: impl Fn(&P, &P) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            diameter,
            eval: Arc::new(eval),
        }
    }

    pub fn distance(&self, x: &P, y: &P) -> f64 {
        (self.eval)(x, y)
    }

    pub fn diameter_bound(&self) -> f64 {
        self.diameter
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `c·d`.
    pub fn scaled(&self, c: f64) -> MetricSpec<P> {
        let inner = self.clone();
        MetricSpec::new(
            format!("{}*{c}", self.label),
            self.diameter * c,
            move |x, y| c * inner.distance(x, y),
        )
    }

    /// Checks the metric axioms and the diameter bound on all sampled pairs and triples.
    pub fn validate(&self, samples: &[P], tol: f64) -> Result<()> {
        let n = samples.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = self.distance(&samples[i], &samples[j]);
            }
        }
        for i in 0..n {
            if d[i * n + i].abs() > tol {
                return Err(Error::Config(format!(
                    "{}: d(x,x) ≠ 0 at sample {i}",
                    self.label
                )));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !(v >= 0.0) || (v - d[j * n + i]).abs() > tol {
                    return Err(Error::Config(format!(
                        "{}: asymmetric or negative distance at ({i},{j})",
                        self.label
                    )));
                }
                if v > self.diameter + tol {
                    return Err(Error::Config(format!(
                        "{}: distance {v} exceeds diameter bound {}",
                        self.label, self.diameter
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if d[i * n + k] > d[i * n + j] + d[j * n + k] + tol {
                        return Err(Error::Config(format!(
                            "{}: triangle inequality fails on ({i},{j},{k})",
                            self.label
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `d_F(x, y) = max_{g∈F} d(gx, gy)`, evaluated through the action oracle.
pub fn bowen_distance<P: 'static>(
    act: impl Fn(&Element, &P) -> Result<P>,
    window: &FiniteWindow,
    d: &MetricSpec<P>,
    x: &P,
    y: &P,
) -> Result<f64> {
    let mut best = 0.0_f64;
    for g in window.iter() {
        let gx = act(g, x)?;
        let gy = act(g, y)?;
        best = best.max(d.distance(&gx, &gy));
    }
    Ok(best)
}

/// `(d×d′)((x₁,y₁),(x₂,y₂)) = max{d(x₁,x₂), d′(y₁,y₂)}`.
pub fn product_metric<P: 'static, Q: 'static>(
    d: &MetricSpec<P>,
    d2: &MetricSpec<Q>,
) -> MetricSpec<(P, Q)> {
    let (a, b) = (d.clone(), d2.clone());
    MetricSpec::new(
        format!("({})x({})", d.label, d2.label),
        d.diameter.max(d2.diameter),
        move |p: &(P, Q), q: &(P, Q)| a.distance(&p.0, &q.0).max(b.distance(&p.1, &q.1)),
    )
}

/// `ζ_d = ζ∘d`, after validating `ζ` on `[0, diam d]`.
pub fn apply_transform<P: 'static>(
    t: &MetricTransform,
    d: &MetricSpec<P>,
) -> Result<MetricSpec<P>> {
    t.validate(d.diameter_bound(), DEFAULT_VALIDATION_PAIRS)?;
    let inner = d.clone();
    let zeta = t.clone();
    Ok(MetricSpec::new(
        format!("{}∘{}", t.label(), d.label),
        t.eval(d.diameter_bound()),
        move |x, y| zeta.eval(inner.distance(x, y)),
    ))
}

/// Evaluates `(ζ_d)_F(x,y)` by definition and `ζ(d_F(x,y))`; the two agree for increasing `ζ`.
pub fn bowen_commutes_with_transform<P: 'static>(
    t: &MetricTransform,
    d: &MetricSpec<P>,
    act: impl Fn(&Element, &P) -> Result<P> + Copy,
    window: &FiniteWindow,
    x: &P,
    y: &P,
) -> Result<(f64, f64)> {
    let zd = apply_transform(t, d)?;
    let lhs = bowen_distance(act, window, &zd, x, y)?;
    let rhs = t.eval(bowen_distance(act, window, d, x, y)?);
    Ok((lhs, rhs))
}

/// `max_{x,y∈pts} |d₁(x,y) − d₂(x,y)|`: a lower bound of the uniform distance between metrics.
pub fn uniform_distance<P: 'static>(d1: &MetricSpec<P>, d2: &MetricSpec<P>, pts: &[P]) -> f64 {
    let mut best = 0.0_f64;
    for (i, x) in pts.iter().enumerate() {
        for y in &pts[i + 1..] {
            best = best.max((d1.distance(x, y) - d2.distance(x, y)).abs());
        }
    }
    best
}

/// Rescales `d` by `1/(ρ + 1e-9)` when its diameter bound `ρ` is at least 1.
///
/// Returns the metric actually used and the factor applied (1 when untouched).
pub fn rescale_below_one<P: 'static>(d: &MetricSpec<P>) -> (MetricSpec<P>, f64) {
    let rho = d.diameter_bound();
    if rho < 1.0 {
        (d.clone(), 1.0)
    } else {
        let c = 1.0 / (rho + 1e-9);
        (d.scaled(c), c)
    }
}

/// Pairwise distances of a finite point set, stored densely.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DistanceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks(self.n.max(1)).collect();
        f.debug_struct("DistanceMatrix")
            .field("rows", &rows)
            .finish()
    }
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    /// Builds from full rows; the input must be square and symmetric with zero diagonal.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Config("distance matrix must be square".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = Self { n, data };
        m.check_metric(EXACT_TOL)?;
        Ok(m)
    }

    /// Points on the real line with `|x − y|`.
    pub fn from_line(points: &[f64]) -> Self {
        Self::from_fn(points.len(), |i, j| (points[i] - points[j]).abs())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diameter(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_positive(&self) -> Option<f64> {
        self.data
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .min_by(f64::total_cmp)
    }

    /// Applies `f` entrywise off the diagonal.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(self.n, |i, j| f(self.get(i, j)))
    }

    /// Entrywise maximum of two matrices over the same points.
    pub fn max_with(&self, other: &DistanceMatrix) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_fn(self.n, |i, j| self.get(i, j).max(other.get(i, j)))
    }

    pub fn submatrix(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    /// Max metric on the product set, indexing `(i, j)` as `i·|other| + j`.
    pub fn product(&self, other: &DistanceMatrix) -> Self {
        let m = other.n;
        Self::from_fn(self.n * m, |a, b| {
            self.get(a / m, b / m).max(other.get(a % m, b % m))
        })
    }

    /// `max |d₁ − d₂|` over all pairs.
    pub fn uniform_distance(&self, other: &DistanceMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Symmetry, zero diagonal, positivity off the diagonal and the triangle inequality.
    pub fn check_metric(&self, tol: f64) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.get(i, i).abs() > tol {
                return Err(Error::Config(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if (v - self.get(j, i)).abs() > tol || !(v >= 0.0) || (i != j && v == 0.0) {
                    return Err(Error::Config(format!("invalid entry at ({i},{j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.get(i, k) > self.get(i, j) + self.get(j, k) + tol {
                        return Err(Error::Config(format!(
                            "triangle inequality fails on ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether some off-diagonal entry lies within relative distance `rel` of `eps`.
    pub fn has_tie(&self, eps: f64, rel: f64) -> bool {
        let tol = rel * eps.abs().max(f64::MIN_POSITIVE);
        self.data.iter().any(|&v| (v - eps).abs() <= tol)
    }
}

/// A random metric on `n` points: symmetric entries drawn from `[lo, hi)` and
/// repaired into a metric by shortest-path closure.
pub fn random_metric<R: rand::Rng + ?Sized>(
    n: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> DistanceMatrix {
    assert!(0.0 < lo && lo < hi);
    let mut d = DistanceMatrix::from_fn(n, |_, _| rng.gen_range(lo..hi));
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d.data[i * n + k] + d.data[k * n + j];
                if via < d.data[i * n + j] {
                    d.data[i * n + j] = via;
                }
            }
        }
    }
    d
}

/// Relative window in which a distance counts as tied with a scale.
pub const TIE_TOL: f64 = 1e-12;
/// Relative downward jitter applied to a tied scale.
pub const TIE_JITTER: f64 = 1e-9;

/// Moves `eps` down by relative steps of `1e-9` until no distance in any of the
/// given matrices is tied with it.
pub fn avoid_ties(eps: f64, matrices: &[&DistanceMatrix]) -> f64 {
    let mut e = eps;
    for _ in 0..64 {
        if !matrices.iter().any(|m| m.has_tie(e, TIE_TOL)) {
            return e;
        }
        e *= 1.0 - TIE_JITTER;
    }
    e
}

/// A transform `ζ` from the subadditive class composed with a metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricTransform {
    /// `x^a`, `a ∈ (0, 1]`.
    Power { a: f64 },
    /// `x` for `x ≥ eps`, `eps^{1−α} x^α` below.
    Hybrid { alpha: f64, eps: f64 },
    /// `log(1 + x^a)`, `a ∈ (0, 1)`.
    LogPower { a: f64 },
    /// Piecewise-linear through `(x, ζ(x))` knots starting at `(0, 0)`.
    Sampled { table: Vec<[f64; 2]> },
}

impl MetricTransform {
    pub fn identity() -> Self {
        MetricTransform::Power { a: 1.0 }
    }

    pub fn label(&self) -> String {
        match self {
            MetricTransform::Power { a } => format!("power({a})"),
            MetricTransform::Hybrid { alpha, eps } => format!("hybrid({alpha},{eps})"),
            MetricTransform::LogPower { a } => format!("log_power({a})"),
            MetricTransform::Sampled { table } => format!("sampled({} knots)", table.len()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            MetricTransform::Power { a } => x.powf(*a),
            MetricTransform::Hybrid { alpha, eps } => {
                if x >= *eps {
                    x
                } else {
                    eps.powf(1.0 - alpha) * x.powf(*alpha)
                }
            }
            MetricTransform::LogPower { a } => x.powf(*a).ln_1p(),
            MetricTransform::Sampled { table } => {
                let k = table.partition_point(|p| p[0] < x);
                if k == 0 {
                    return table[0][1];
                }
                let (lo, hi) = if k < table.len() {
                    (table[k - 1], table[k])
                } else {
                    (table[table.len() - 2], table[table.len() - 1])
                };
                lo[1] + (x - lo[0]) * (hi[1] - lo[1]) / (hi[0] - lo[0])
            }
        }
    }

    /// `k(ζ)` when known in closed form.
    pub fn closed_form_exponent(&self) -> Option<f64> {
        match self {
            MetricTransform::Power { a } | MetricTransform::LogPower { a } => Some(*a),
            MetricTransform::Hybrid { alpha, .. } => Some(*alpha),
            MetricTransform::Sampled { .. } => None,
        }
    }

    fn check_parameters(&self, rho: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTransform(msg));
        match self {
            MetricTransform::Power { a } if !(*a > 0.0 && *a <= 1.0) => {
                bad(format!("power exponent {a} outside (0, 1]"))
            }
            MetricTransform::LogPower { a } if !(*a > 0.0 && *a < 1.0) => {
                bad(format!("log_power exponent {a} outside (0, 1)"))
            }
            MetricTransform::Hybrid { alpha, eps }
                if !(*alpha > 0.0 && *alpha < 1.0 && *eps > 0.0 && *eps < 1.0) =>
            {
                bad(format!("hybrid parameters ({alpha}, {eps}) outside (0,1)²"))
            }
            MetricTransform::Sampled { table } => {
                if table.len() < 2 || table[0] != [0.0, 0.0] {
                    return bad("sampled table needs ≥ 2 knots starting at (0, 0)".into());
                }
                if table.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return bad("sampled knots must have strictly increasing x".into());
                }
                if table[table.len() - 1][0] < rho {
                    return bad(format!("sampled table does not cover [0, {rho}]"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Checks `ζ(0) = 0`, positivity, strict increase, and subadditivity on a grid of at
    /// least `pairs` pairs `(x, y)` with `x + y ≤ ρ`.
    pub fn validate(&self, rho: f64, pairs: usize) -> Result<()> {
        if !(rho > 0.0) {
            return Err(Error::InvalidTransform(format!(
                "diameter {rho} must be positive"
            )));
        }
        self.check_parameters(rho)?;
        if self.eval(0.0) != 0.0 {
            return Err(Error::InvalidTransform("ζ(0) ≠ 0".into()));
        }
        // linear grid plus a geometric tail toward 0
        let mut xs: Vec<f64> = (1..=4096).map(|i| rho * i as f64 / 4096.0).collect();
        xs.extend((1..=60).map(|k| rho * 2f64.powi(-k - 12)));
        xs.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for &x in &xs {
            let v = self.eval(x);
            if !(v > prev) {
                return Err(Error::InvalidTransform(format!(
                    "{} is not strictly increasing near x = {x}",
                    self.label()
                )));
            }
            prev = v;
        }
        let m = (1..)
            .find(|&m: &usize| m * (m - 1) / 2 >= pairs)
            .unwrap_or(2);
        for i in 1..m {
            for j in 1..=(m - i) {
                let (x, y) = (rho * i as f64 / m as f64, rho * j as f64 / m as f64);
                let lhs = self.eval(x + y);
                let rhs = self.eval(x) + self.eval(y);
                if lhs > rhs + EXACT_TOL {
                    return Err(Error::InvalidTransform(format!(
                        "{} fails subadditivity at ({x}, {y}): {lhs} > {rhs}",
                        self.label()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Finite-grid surrogate of `k_m(ζ)` and `k_M(ζ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub k_min: f64,
    pub k_max: f64,
    pub grid: Vec<f64>,
    /// `log ζ(ε) / log ε` for every grid value.
    pub slopes: Vec<f64>,
    pub closed_form: Option<f64>,
    /// `max(|k_min − k|, |k_max − k|)` against the closed form.
    pub gap: Option<f64>,
}

/// Reports the min and max of `log ζ(ε)/log ε` over the tail half of a decreasing grid.
pub fn exponent_range(t: &MetricTransform, grid: &[f64]) -> Result<ExponentEstimate> {
    if grid.len() < 8 {
        return Err(Error::Config(format!(
            "exponent grid needs ≥ 8 values, got {}",
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) || grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::Config(
            "exponent grid must be strictly decreasing in (0, 1)".into(),
        ));
    }
    let slopes: Vec<f64> = grid.iter().map(|&e| t.eval(e).ln() / e.ln()).collect();
    let tail = &slopes[slopes.len() / 2..];
    let k_min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let k_max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let closed_form = t.closed_form_exponent();
    let gap = closed_form.map(|k| (k_min - k).abs().max((k_max - k).abs()));
    Ok(ExponentEstimate {
        k_min,
        k_max,
        grid: grid.to_vec(),
        slopes,
        closed_form,
        gap,
    })
}

/// `count` values geometrically spaced from `hi` down to `lo`.
pub fn geometric_grid(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && hi > lo && lo > 0.0);
    let ratio = (lo / hi).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i == count - 1 {
                lo
            } else {
                hi * (ratio * i as f64).exp()
            }
        })
        .collect()
}
