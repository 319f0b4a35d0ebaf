//! Concrete G-systems: full shifts and forbidden-pattern subshifts over finite
//! alphabets, finite permutation systems, and products.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Element, FiniteWindow};
use crate::metric::{DistanceMatrix, MetricSpec};

/// A `Z^rank` action on a metric space.
pub trait GSystem: Send + Sync {
    type Point: Clone + fmt::Debug + Send + Sync + 'static;

    fn rank(&self) -> usize;

    fn act(&self, h: &Element, x: &Self::Point) -> Result<Self::Point>;

    fn distance(&self, x: &Self::Point, y: &Self::Point) -> f64;

    fn diameter_bound(&self) -> f64;

    /// `d_F(x, y)`; implementors may override with a faster equivalent.
    fn bowen(&self, window: &FiniteWindow, x: &Self::Point, y: &Self::Point) -> Result<f64> {
        let mut best = 0.0_f64;
        for g in window.iter() {
            best = best.max(self.distance(&self.act(g, x)?, &self.act(g, y)?));
        }
        Ok(best)
    }

    /// Pairwise `d_F` over a point list, rows evaluated in parallel.
    fn bowen_matrix(
        &self,
        points: &[Self::Point],
        window: &FiniteWindow,
    ) -> Result<DistanceMatrix> {
        let n = points.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| self.bowen(window, &points[i], &points[j]))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok(DistanceMatrix::from_fn(n, |i, j| rows[i][j - i - 1]))
    }
}

impl<S: GSystem + ?Sized> GSystem for &S {
    type Point = S::Point;

    fn rank(&self) -> usize {
        (**self).rank()
    }

    fn act(&self, h: &Element, x: &Self::Point) -> Result<Self::Point> {
        (**self).act(h, x)
    }

    fn distance(&self, x: &Self::Point, y: &Self::Point) -> f64 {
        (**self).distance(x, y)
    }

    fn diameter_bound(&self) -> f64 {
        (**self).diameter_bound()
    }

    fn bowen(&self, window: &FiniteWindow, x: &Self::Point, y: &Self::Point) -> Result<f64> {
        (**self).bowen(window, x, y)
    }

    fn bowen_matrix(
        &self,
        points: &[Self::Point],
        window: &FiniteWindow,
    ) -> Result<DistanceMatrix> {
        (**self).bowen_matrix(points, window)
    }
}

/// The system's base metric as a standalone [`MetricSpec`].
pub fn system_metric<S: GSystem + 'static>(sys: Arc<S>) -> MetricSpec<S::Point> {
    let rho = sys.diameter_bound();
    MetricSpec::new("system", rho, move |x, y| sys.distance(x, y))
}

/// Finite alphabet description as it appears in configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphabetSpec {
    /// `{0, δ, 2δ, …} ∩ [0, 1]` with `|x − y|`.
    UnitInterval { step: f64 },
    /// `{0, δ, 2δ, …}` on `R/Z` with `min_n |x − y − n|`.
    Circle { step: f64 },
    /// Explicit finite metric space.
    Matrix { matrix: Vec<Vec<f64>> },
    /// Explicit points of the real line with `|x − y|`.
    Points { values: Vec<f64> },
}

/// A validated finite alphabet.
#[derive(Clone, Debug)]
pub struct Alphabet {
    spec: AlphabetSpec,
    values: Option<Vec<f64>>,
    dist: DistanceMatrix,
}

fn grid_count(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!(
            "alphabet step {step} outside (0, 1]"
        )));
    }
    let inv = 1.0 / step;
    let k = if (inv - inv.round()).abs() < 1e-9 {
        inv.round() as usize
    } else {
        inv.floor() as usize
    };
    if k > u16::MAX as usize - 1 {
        return Err(Error::Config(format!(
            "alphabet step {step} gives too many symbols"
        )));
    }
    Ok(k)
}

impl Alphabet {
    pub fn new(spec: AlphabetSpec) -> Result<Self> {
        let (values, dist) = match &spec {
            AlphabetSpec::UnitInterval { step } => {
                let k = grid_count(*step)?;
                let vals: Vec<f64> = (0..=k).map(|i| (i as f64 * step).min(1.0)).collect();
                let d = DistanceMatrix::from_line(&vals);
                (Some(vals), d)
            }
            AlphabetSpec::Circle { step } => {
                let k = grid_count(*step)?.max(1);
                let vals: Vec<f64> = (0..k).map(|i| i as f64 * step).collect();
                let d = DistanceMatrix::from_fn(k, |i, j| {
                    let t = (vals[i] - vals[j]).abs().fract();
                    t.min(1.0 - t)
                });
                (Some(vals), d)
            }
            AlphabetSpec::Matrix { matrix } => (None, DistanceMatrix::from_rows(matrix)?),
            AlphabetSpec::Points { values } => {
                let d = DistanceMatrix::from_line(values);
                (Some(values.clone()), d)
            }
        };
        if dist.is_empty() {
            return Err(Error::Config("alphabet must be nonempty".into()));
        }
        if dist.len() > u16::MAX as usize {
            return Err(Error::Config("alphabet exceeds 65535 symbols".into()));
        }
        match &values {
            None => dist.check_metric(1e-12)?,
            Some(v) => {
                let mut sorted = v.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.iter().any(|x| !x.is_finite()) || sorted.windows(2).any(|w| w[0] == w[1])
                {
                    return Err(Error::Config(
                        "alphabet values must be finite and distinct".into(),
                    ));
                }
            }
        }
        Ok(Self { spec, values, dist })
    }

    /// Two symbols at distance `gap`.
    pub fn two_point(gap: f64) -> Result<Self> {
        Self::new(AlphabetSpec::Points {
            values: vec![0.0, gap],
        })
    }

    pub fn spec(&self) -> &AlphabetSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    #[inline]
    pub fn distance(&self, a: u16, b: u16) -> f64 {
        self.dist.get(a as usize, b as usize)
    }

    pub fn matrix(&self) -> &DistanceMatrix {
        &self.dist
    }

    pub fn diameter(&self) -> f64 {
        self.dist.diameter()
    }

    /// Quantization step `δ_a` for grid alphabets.
    pub fn step(&self) -> Option<f64> {
        match self.spec {
            AlphabetSpec::UnitInterval { step } | AlphabetSpec::Circle { step } => Some(step),
            _ => None,
        }
    }
}

/// Default tail tolerance for weight truncation.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

/// Weights `α_g = λ^{|g|₁}` truncated to `|g|₁ ≤ R`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightFamily {
    rank: usize,
    lambda: f64,
    radius: usize,
    /// Metric tail `Σ_{|g|₁>R} α_g · diam` left out by truncation.
    tail: f64,
    total: f64,
    #[serde(skip)]
    offsets: Vec<(Element, f64)>,
}

/// `#{g ∈ Z^d : |g|₁ = k}`.
fn sphere_size(d: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let binom = |n: usize, r: usize| -> f64 {
        if r > n {
            return 0.0;
        }
        (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    (1..=d.min(k))
        .map(|j| 2f64.powi(j as i32) * binom(d, j) * binom(k - 1, j - 1))
        .sum()
}

fn tail_sum(rank: usize, lambda: f64, radius: usize) -> f64 {
    let mut tail = 0.0;
    let mut k = radius + 1;
    loop {
        let term = sphere_size(rank, k) * lambda.powi(k as i32);
        tail += term;
        if term < 1e-20 * tail.max(1e-300) || k > radius + 100_000 {
            return tail;
        }
        k += 1;
    }
}

impl WeightFamily {
    /// Chooses the smallest radius whose metric tail is below `tail_tol` unless `radius`
    /// is given, in which case it must meet the tolerance.
    pub fn new(
        rank: usize,
        lambda: f64,
        radius: Option<usize>,
        tail_tol: f64,
        alphabet_diameter: f64,
    ) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Config("weights.rank must be positive".into()));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!(
                "weights.lambda {lambda} outside (0, 1)"
            )));
        }
        let diam = alphabet_diameter.max(0.0);
        let radius = match radius {
            Some(r) => {
                let tail = tail_sum(rank, lambda, r) * diam;
                if tail >= tail_tol {
                    return Err(Error::Config(format!(
                        "weights.radius {r} leaves tail {tail:e} ≥ tolerance {tail_tol:e}"
                    )));
                }
                r
            }
            None => (0..10_000)
                .find(|&r| tail_sum(rank, lambda, r) * diam < tail_tol)
                .ok_or_else(|| Error::Config("no weight radius meets the tail tolerance".into()))?,
        };
        let mut offsets = Vec::new();
        let mut stack = vec![Vec::<i64>::new()];
        while let Some(prefix) = stack.pop() {
            let used: u64 = prefix.iter().map(|c| c.unsigned_abs()).sum();
            if prefix.len() == rank {
                offsets.push((Element::new(prefix), lambda.powi(used as i32)));
                continue;
            }
            let room = radius as i64 - used as i64;
            for c in -room..=room {
                let mut v = prefix.clone();
                v.push(c);
                stack.push(v);
            }
        }
        offsets.sort_by(|a, b| a.0.cmp(&b.0));
        let total = offsets.iter().map(|(_, w)| w).sum();
        Ok(Self {
            rank,
            lambda,
            radius,
            tail: tail_sum(rank, lambda, radius) * diam,
            total,
            offsets,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `l = Σ_{|g|₁≤R} α_g`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn offsets(&self) -> &[(Element, f64)] {
        &self.offsets
    }

    pub fn weight(&self, g: &Element) -> f64 {
        if g.norm1() as usize > self.radius {
            0.0
        } else {
            self.lambda.powi(g.norm1() as i32)
        }
    }

    /// `Σ_{g∉S} α_g` over the truncated family.
    pub fn mass_outside(&self, s: &FiniteWindow) -> f64 {
        self.offsets
            .iter()
            .filter(|(g, _)| !s.contains(g))
            .map(|(_, w)| w)
            .sum()
    }
}

/// How translations treat coordinates that leave the domain window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Indices wrap modulo the domain box.
    #[default]
    Periodic,
    /// Configurations are padded by a common background outside the domain.
    Strict,
}

/// A finite pattern: symbol indices at offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub offsets: Vec<Element>,
    pub symbols: Vec<u16>,
}

impl Pattern {
    pub fn new(offsets: Vec<Element>, symbols: Vec<u16>) -> Result<Self> {
        if offsets.is_empty() || offsets.len() != symbols.len() {
            return Err(Error::Config(
                "pattern needs matching nonempty offsets and symbols".into(),
            ));
        }
        Ok(Self { offsets, symbols })
    }
}

/// A configuration: symbol indices in the domain window's element order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Config(pub Vec<u16>);

impl fmt::Debug for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Points drawn by [`ShiftSystem::sample_points`].
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub points: Vec<Config>,
    /// Draws that repeated an earlier configuration.
    pub duplicates: usize,
}

impl SampleSet {
    /// Distinct points, first occurrences kept in draw order.
    pub fn unique(&self) -> Vec<Config> {
        let mut seen = HashSet::new();
        self.points
            .iter()
            .filter(|p| seen.insert(*p))
            .cloned()
            .collect()
    }
}

/// Shift action on configurations `W → alphabet` with the weighted summed metric.
#[derive(Clone, Debug)]
pub struct ShiftSystem {
    alphabet: Alphabet,
    weights: WeightFamily,
    domain: FiniteWindow,
    boundary: Boundary,
    forbidden: Vec<Pattern>,
    sides: Option<Vec<usize>>,
    /// Per-coordinate weights of the one-step metric.
    coord_weights: Vec<f64>,
}

impl ShiftSystem {
    pub fn make_full_shift(
        alphabet: Alphabet,
        weights: WeightFamily,
        domain: FiniteWindow,
        boundary: Boundary,
    ) -> Result<Self> {
        if weights.rank() != domain.rank() {
            return Err(Error::Config(format!(
                "weights rank {} differs from domain rank {}",
                weights.rank(),
                domain.rank()
            )));
        }
        let sides = domain.box_sides();
        if boundary == Boundary::Periodic && sides.is_none() {
            return Err(Error::Config(
                "periodic boundary needs a box domain [0, s_1) × … × [0, s_d)".into(),
            ));
        }
        let mut sys = Self {
            alphabet,
            weights,
            domain,
            boundary,
            forbidden: Vec::new(),
            sides,
            coord_weights: Vec::new(),
        };
        sys.coord_weights = sys.window_weights(&Element::identity(sys.rank()));
        Ok(sys)
    }

    /// Restricts to configurations avoiding every pattern at every admissible translate.
    pub fn with_forbidden(mut self, patterns: Vec<Pattern>) -> Result<Self> {
        for p in &patterns {
            if p.offsets.iter().any(|o| o.rank() != self.rank()) {
                return Err(Error::Config(
                    "pattern offsets must match the group rank".into(),
                ));
            }
            if p.symbols.iter().any(|&s| s as usize >= self.alphabet.len()) {
                return Err(Error::Config("pattern symbol outside the alphabet".into()));
            }
        }
        self.forbidden = patterns;
        Ok(self)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn weights(&self) -> &WeightFamily {
        &self.weights
    }

    pub fn domain(&self) -> &FiniteWindow {
        &self.domain
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn forbidden(&self) -> &[Pattern] {
        &self.forbidden
    }

    pub fn is_full_shift(&self) -> bool {
        self.forbidden.is_empty()
    }

    /// `|alphabet|^{|W|}`, saturating.
    pub fn full_count(&self) -> u128 {
        (self.alphabet.len() as u128)
            .checked_pow(self.domain.len() as u32)
            .unwrap_or(u128::MAX)
    }

    /// Domain index of `c` reduced modulo the box (periodic) or as is (strict).
    fn index_of(&self, c: &Element) -> Option<usize> {
        match (&self.sides, self.boundary) {
            (Some(sides), Boundary::Periodic) => {
                let mut idx = 0usize;
                for (axis, &side) in sides.iter().enumerate() {
                    idx = idx * side + c.coords()[axis].rem_euclid(side as i64) as usize;
                }
                Some(idx)
            }
            _ => self.domain.index_of(c),
        }
    }

    /// Coordinate weights of `d(σ^h x, σ^h y)` as a function of `ρ(x_c, y_c)`.
    ///
    /// Periodic: `Σ_{g ≡ c − h} α_g`. Strict: `α_{c − h}` with a common background outside `W`.
    fn window_weights(&self, h: &Element) -> Vec<f64> {
        let mut w = vec![0.0; self.domain.len()];
        match self.boundary {
            Boundary::Periodic => {
                for (g, a) in self.weights.offsets() {
                    if let Some(i) = self.index_of(&g.add(h)) {
                        w[i] += a;
                    }
                }
            }
            Boundary::Strict => {
                for (i, c) in self.domain.iter().enumerate() {
                    w[i] = self.weights.weight(&c.add(&h.inverse()));
                }
            }
        }
        w
    }

    fn weighted(&self, w: &[f64], x: &Config, y: &Config) -> f64 {
        w.iter()
            .zip(x.0.iter().zip(&y.0))
            .map(|(a, (&p, &q))| {
                if p == q {
                    0.0
                } else {
                    a * self.alphabet.distance(p, q)
                }
            })
            .sum()
    }

    /// Whether `x` contains no forbidden pattern at any admissible translate.
    pub fn is_admissible(&self, x: &Config) -> bool {
        let coords: Vec<Element> = self.domain.iter().cloned().collect();
        for p in &self.forbidden {
            'shift: for h in &coords {
                for (o, &s) in p.offsets.iter().zip(&p.symbols) {
                    match self.index_of(&o.add(h)) {
                        Some(i) if x.0[i] == s => {}
                        _ => continue 'shift,
                    }
                }
                return false;
            }
        }
        true
    }

    /// All admissible configurations, or a resource error past `budget`.
    pub fn enumerate(&self, budget: u128) -> Result<Vec<Config>> {
        let total = self.full_count();
        if total > budget {
            return Err(Error::Resource(format!(
                "{total} configurations exceed the enumeration budget {budget}; use sampled mode"
            )));
        }
        let k = self.alphabet.len() as u16;
        let len = self.domain.len();
        let mut out = Vec::new();
        let mut cur = vec![0u16; len];
        loop {
            let c = Config(cur.clone());
            if self.is_admissible(&c) {
                out.push(c);
            }
            let mut i = len;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                cur[i] += 1;
                if cur[i] < k {
                    break;
                }
                cur[i] = 0;
            }
        }
    }

    /// `N` i.i.d. uniform configurations (rejection-sampled for subshifts).
    pub fn sample_points(&self, n: usize, seed: u64) -> Result<SampleSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.alphabet.len() as u16;
        let mut points = Vec::with_capacity(n);
        let mut seen = HashSet::with_capacity(n);
        let mut duplicates = 0;
        let max_tries = 1000 * n.max(1);
        let mut tries = 0;
        while points.len() < n {
            tries += 1;
            if tries > max_tries {
                return Err(Error::Resource(format!(
                    "rejection sampling found only {} admissible configurations in {max_tries} draws",
                    points.len()
                )));
            }
            let c = Config(
                (0..self.domain.len())
                    .map(|_| rng.gen_range(0..k))
                    .collect(),
            );
            if !self.is_admissible(&c) {
                continue;
            }
            if !seen.insert(c.clone()) {
                duplicates += 1;
            }
            points.push(c);
        }
        Ok(SampleSet { points, duplicates })
    }

    /// Builds the weight vectors for every element of a window once.
    fn window_plan(&self, window: &FiniteWindow) -> Result<Vec<Vec<f64>>> {
        if window.rank() != self.rank() {
            return Err(Error::Domain(
                "window rank differs from the system rank".into(),
            ));
        }
        let mut plan: Vec<Vec<f64>> = window.iter().map(|h| self.window_weights(h)).collect();
        plan.sort_by(|a, b| {
            a.iter()
                .map(|v| v.to_bits())
                .cmp(b.iter().map(|v| v.to_bits()))
        });
        plan.dedup();
        Ok(plan)
    }
}

impl GSystem for ShiftSystem {
    type Point = Config;

    fn rank(&self) -> usize {
        self.domain.rank()
    }

    fn act(&self, h: &Element, x: &Config) -> Result<Config> {
        if h.rank() != self.rank() {
            return Err(Error::Domain(
                "element rank differs from the system rank".into(),
            ));
        }
        match self.boundary {
            Boundary::Periodic => Ok(Config(
                self.domain
                    .iter()
                    .map(|c| x.0[self.index_of(&c.add(h)).expect("periodic index")])
                    .collect(),
            )),
            Boundary::Strict => {
                if h.is_identity() {
                    Ok(x.clone())
                } else {
                    Err(Error::Domain(format!(
                        "translate by {h:?} leaves the strict domain window"
                    )))
                }
            }
        }
    }

    fn distance(&self, x: &Config, y: &Config) -> f64 {
        self.weighted(&self.coord_weights, x, y)
    }

    fn diameter_bound(&self) -> f64 {
        self.weights.total() * self.alphabet.diameter()
    }

    fn bowen(&self, window: &FiniteWindow, x: &Config, y: &Config) -> Result<f64> {
        let plan = self.window_plan(window)?;
        Ok(plan
            .iter()
            .map(|w| self.weighted(w, x, y))
            .fold(0.0, f64::max))
    }

    fn bowen_matrix(&self, points: &[Config], window: &FiniteWindow) -> Result<DistanceMatrix> {
        let plan = self.window_plan(window)?;
        let n = points.len();
        let k = self.alphabet.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = &points[i].0;
                let mut diff = vec![0.0; x.len()];
                ((i + 1)..n)
                    .map(|j| {
                        let y = &points[j].0;
                        for (c, (&p, &q)) in x.iter().zip(y).enumerate() {
                            diff[c] = self.alphabet.dist.get(p as usize, q as usize);
                        }
                        debug_assert!(x.iter().all(|&p| (p as usize) < k));
                        plan.iter()
                            .map(|w| w.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>())
                            .fold(0.0, f64::max)
                    })
                    .collect()
            })
            .collect();
        Ok(DistanceMatrix::from_fn(n, |i, j| rows[i][j - i - 1]))
    }
}

/// `Z^rank` acting on `{0, …, n−1}` through commuting permutations, one per generator.
#[derive(Clone, Debug)]
pub struct FiniteSystem {
    metric: DistanceMatrix,
    generators: Vec<Vec<usize>>,
    inverses: Vec<Vec<usize>>,
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter()
        .all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
}

impl FiniteSystem {
    pub fn new(metric: DistanceMatrix, generators: Vec<Vec<usize>>) -> Result<Self> {
        let n = metric.len();
        if generators.is_empty() {
            return Err(Error::Config(
                "finite system needs at least one generator".into(),
            ));
        }
        if generators
            .iter()
            .any(|p| p.len() != n || !is_permutation(p))
        {
            return Err(Error::Config(
                "generators must be permutations of the points".into(),
            ));
        }
        for a in &generators {
            for b in &generators {
                if (0..n).any(|i| a[b[i]] != b[a[i]]) {
                    return Err(Error::Config("generators must commute".into()));
                }
            }
        }
        let inverses = generators
            .iter()
            .map(|p| {
                let mut inv = vec![0; n];
                for (i, &j) in p.iter().enumerate() {
                    inv[j] = i;
                }
                inv
            })
            .collect();
        Ok(Self {
            metric,
            generators,
            inverses,
        })
    }

    /// A random metric on `n` points with one random permutation.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let metric = crate::metric::random_metric(n, 0.05, 1.0, rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Self::new(metric, vec![perm]).expect("valid random system")
    }

    pub fn len(&self) -> usize {
        self.metric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metric.is_empty()
    }

    pub fn metric(&self) -> &DistanceMatrix {
        &self.metric
    }

    pub fn points(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// The same action with the metric replaced entrywise by `f`.
    pub fn with_metric(&self, metric: DistanceMatrix) -> Result<Self> {
        Self::new(metric, self.generators.clone())
    }
}

impl GSystem for FiniteSystem {
    type Point = usize;

    fn rank(&self) -> usize {
        self.generators.len()
    }

    fn act(&self, h: &Element, x: &usize) -> Result<usize> {
        if h.rank() != self.rank() {
            return Err(Error::Domain(
                "element rank differs from the system rank".into(),
            ));
        }
        let mut p = *x;
        for (axis, &c) in h.coords().iter().enumerate() {
            let table = if c >= 0 {
                &self.generators[axis]
            } else {
                &self.inverses[axis]
            };
            for _ in 0..c.unsigned_abs() {
                p = table[p];
            }
        }
        Ok(p)
    }

    fn distance(&self, x: &usize, y: &usize) -> f64 {
        self.metric.get(*x, *y)
    }

    fn diameter_bound(&self) -> f64 {
        self.metric.diameter()
    }
}

/// `g(x, y) = (gx, gy)` with the max metric.
#[derive(Clone, Debug)]
pub struct ProductSystem<A, B> {
    pub first: A,
    pub second: B,
}

pub fn product_system<A: GSystem, B: GSystem>(first: A, second: B) -> Result<ProductSystem<A, B>> {
    if first.rank() != second.rank() {
        return Err(Error::Config(format!(
            "product factors act by groups of rank {} and {}",
            first.rank(),
            second.rank()
        )));
    }
    Ok(ProductSystem { first, second })
}

impl<A: GSystem, B: GSystem> ProductSystem<A, B> {
    /// All pairs `M × L`, first factor major.
    pub fn pairs(&self, m: &[A::Point], l: &[B::Point]) -> Vec<(A::Point, B::Point)> {
        m.iter()
            .flat_map(|x| l.iter().map(move |y| (x.clone(), y.clone())))
            .collect()
    }
}

impl<A: GSystem, B: GSystem> GSystem for ProductSystem<A, B> {
    type Point = (A::Point, B::Point);

    fn rank(&self) -> usize {
        self.first.rank()
    }

    fn act(&self, h: &Element, x: &Self::Point) -> Result<Self::Point> {
        Ok((self.first.act(h, &x.0)?, self.second.act(h, &x.1)?))
    }

    fn distance(&self, x: &Self::Point, y: &Self::Point) -> f64 {
        self.first
            .distance(&x.0, &y.0)
            .max(self.second.distance(&x.1, &y.1))
    }

    fn diameter_bound(&self) -> f64 {
        self.first
            .diameter_bound()
            .max(self.second.diameter_bound())
    }

    fn bowen(&self, window: &FiniteWindow, x: &Self::Point, y: &Self::Point) -> Result<f64> {
        Ok(self
            .first
            .bowen(window, &x.0, &y.0)?
            .max(self.second.bowen(window, &x.1, &y.1)?))
    }
}

/// A finite probability vector over a point list.
#[derive(Clone, Debug)]
pub struct WeightedPointSet<P> {
    points: Vec<P>,
    masses: Vec<f64>,
}

impl<P: Clone> WeightedPointSet<P> {
    pub fn new(points: Vec<P>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(Error::Config(
                "weighted set needs one mass per point".into(),
            ));
        }
        if masses.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::Config("masses must be nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { points, masses })
    }

    pub fn uniform(points: Vec<P>) -> Result<Self> {
        let n = points.len().max(1);
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(points: Vec<P>, at: usize) -> Result<Self> {
        let mut masses = vec![0.0; points.len()];
        *masses
            .get_mut(at)
            .ok_or_else(|| Error::Config("point mass index out of range".into()))? = 1.0;
        Self::new(points, masses)
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}
