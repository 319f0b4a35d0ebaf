//! Counting kernels over a precomputed Bowen distance matrix: maximum
//! separated sets, minimum spanning sets, minimum covers by sets of small
//! diameter, and Katok partial spanning numbers.
//!
//! Separated sets use `d > ε`, spanning sets and Katok balls use `d ≤ ε`,
//! and cover cells use `diam < ε`.

use std::time::Instant;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{avoid_ties, DistanceMatrix};

/// Default branch-node budget for the exact solvers.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Strict margin used when comparing covered mass against `1 − δ`.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountMode {
    Exact,
    Greedy,
    /// Greedy counts on `n` sampled points drawn with `seed`.
    Sampled {
        n: usize,
        seed: u64,
    },
}

impl CountMode {
    pub fn label(&self) -> &'static str {
        match self {
            CountMode::Exact => "exact",
            CountMode::Greedy => "greedy",
            CountMode::Sampled { .. } => "sampled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundDirection {
    Exact,
    Lower,
    Upper,
}

impl BoundDirection {
    pub fn label(&self) -> &'static str {
        match self {
            BoundDirection::Exact => "exact",
            BoundDirection::Lower => "lower",
            BoundDirection::Upper => "upper",
        }
    }
}

/// What an exact solver does when it runs out of branch nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetPolicy {
    /// Return a resource error.
    #[default]
    Fail,
    /// Return the incumbent with its bound direction downgraded.
    Degrade,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountQuery {
    pub epsilon: f64,
    pub mode: CountMode,
    pub node_budget: u64,
    pub on_budget: BudgetPolicy,
}

impl CountQuery {
    pub fn exact(epsilon: f64) -> Self {
        Self {
            epsilon,
            mode: CountMode::Exact,
            node_budget: DEFAULT_NODE_BUDGET,
            on_budget: BudgetPolicy::Fail,
        }
    }

    pub fn greedy(epsilon: f64) -> Self {
        Self {
            mode: CountMode::Greedy,
            ..Self::exact(epsilon)
        }
    }

    pub fn with_mode(mut self, mode: CountMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_budget(mut self, nodes: u64, on_budget: BudgetPolicy) -> Self {
        self.node_budget = nodes;
        self.on_budget = on_budget;
        self
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    fn validate(&self, d: &DistanceMatrix) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        if let CountMode::Sampled { n, .. } = self.mode {
            if n < 2 {
                return Err(Error::Config("sampled mode needs N ≥ 2".into()));
            }
        }
        if d.is_empty() {
            return Err(Error::Precondition("point set must be nonempty".into()));
        }
        Ok(())
    }

    fn is_exact(&self) -> bool {
        self.mode == CountMode::Exact
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub value: usize,
    pub bound_direction: BoundDirection,
    /// A certified upper bound on the exact count, when one is known.
    pub upper: Option<usize>,
    /// Indices of the separated set, spanning centers, or one point per cover cell.
    pub witness: Vec<usize>,
    pub stats: SolverStats,
}

impl CountReport {
    fn exact(value: usize, witness: Vec<usize>, stats: SolverStats) -> Self {
        Self {
            value,
            bound_direction: BoundDirection::Exact,
            upper: Some(value),
            witness,
            stats,
        }
    }
}

/// `{cov(2ε), r(ε), s(ε), cov(ε)}` from exact solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    /// Scale actually used after tie avoidance.
    pub epsilon: f64,
    pub cov_double: usize,
    pub spanning: usize,
    pub separated: usize,
    pub cover: usize,
}

impl ChainReport {
    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.cov_double, self.spanning, self.separated, self.cover)
    }

    pub fn holds(&self) -> bool {
        self.cov_double <= self.spanning
            && self.spanning <= self.separated
            && self.separated <= self.cover
    }
}

fn budget_error(what: &str, budget: u64) -> Error {
    Error::Resource(format!(
        "{what} exceeded the node budget of {budget}; rerun in greedy mode or raise budgets.nodes"
    ))
}

// ---------------------------------------------------------------------------
// maximum separated set

/// Greedy separated set: scan indices in order, keep a point when it is
/// `ε`-separated from everything kept so far.
pub fn greedy_separated(d: &DistanceMatrix, eps: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..d.len() {
        if kept.iter().all(|&j| d.get(i, j) > eps) {
            kept.push(i);
        }
    }
    kept
}

struct CliqueSearch<'a> {
    adj: &'a [FixedBitSet],
    best: Vec<usize>,
    current: Vec<usize>,
    nodes: u64,
    budget: u64,
    aborted: bool,
}

impl CliqueSearch<'_> {
    /// Greedy coloring of `p` in order; returns vertices sorted by color with the color bound.
    fn color_sort(&self, p: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for &v in p {
            match classes
                .iter_mut()
                .find(|c| c.iter().all(|&u| !self.adj[v].contains(u)))
            {
                Some(c) => c.push(v),
                None => classes.push(vec![v]),
            }
        }
        let mut order = Vec::with_capacity(p.len());
        let mut bound = Vec::with_capacity(p.len());
        for (k, c) in classes.iter().enumerate() {
            for &v in c {
                order.push(v);
                bound.push(k + 1);
            }
        }
        (order, bound)
    }

    fn expand(&mut self, p: Vec<usize>) {
        let (order, bound) = self.color_sort(&p);
        let mut live: Vec<usize> = p;
        for idx in (0..order.len()).rev() {
            if self.current.len() + bound[idx] <= self.best.len() {
                return;
            }
            self.nodes += 1;
            if self.nodes > self.budget {
                self.aborted = true;
                return;
            }
            let v = order[idx];
            self.current.push(v);
            let next: Vec<usize> = live
                .iter()
                .copied()
                .filter(|&u| self.adj[v].contains(u))
                .collect();
            if next.is_empty() {
                if self.current.len() > self.best.len() {
                    self.best = self.current.clone();
                }
            } else {
                self.expand(next);
            }
            self.current.pop();
            if self.aborted {
                return;
            }
            live.retain(|&u| u != v);
        }
    }
}

/// `s_F(ε)`: maximum cardinality of a set with pairwise `d > ε`.
pub fn max_separated(d: &DistanceMatrix, q: &CountQuery) -> Result<CountReport> {
    q.validate(d)?;
    let start = Instant::now();
    let eps = q.epsilon;
    let greedy = greedy_separated(d, eps);
    if !q.is_exact() {
        return Ok(CountReport {
            value: greedy.len(),
            bound_direction: BoundDirection::Lower,
            upper: None,
            witness: greedy,
            stats: SolverStats {
                nodes: 0,
                seconds: start.elapsed().as_secs_f64(),
            },
        });
    }
    let n = d.len();
    // compatibility graph: edge iff separated
    let adj: Vec<FixedBitSet> = (0..n)
        .map(|i| {
            let mut b = FixedBitSet::with_capacity(n);
            for j in 0..n {
                if i != j && d.get(i, j) > eps {
                    b.insert(j);
                }
            }
            b
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(adj[v].count_ones(..)), v));
    let mut search = CliqueSearch {
        adj: &adj,
        best: greedy,
        current: Vec::new(),
        nodes: 0,
        budget: q.node_budget,
        aborted: false,
    };
    let (_, root_bound) = search.color_sort(&order);
    let colors = root_bound.last().copied().unwrap_or(0);
    search.expand(order);
    let stats = SolverStats {
        nodes: search.nodes,
        seconds: start.elapsed().as_secs_f64(),
    };
    let mut witness = search.best;
    witness.sort_unstable();
    if search.aborted {
        return match q.on_budget {
            BudgetPolicy::Fail => Err(budget_error("maximum separated set", q.node_budget)),
            BudgetPolicy::Degrade => Ok(CountReport {
                value: witness.len(),
                bound_direction: BoundDirection::Lower,
                upper: Some(colors),
                witness,
                stats,
            }),
        };
    }
    Ok(CountReport::exact(witness.len(), witness, stats))
}

/// An upper bound on `s_F(ε)` from a greedy partition into sets of pairwise
/// distance `≤ ε`, each of which holds at most one separated point.
pub fn separated_upper_bound(d: &DistanceMatrix, eps: f64) -> usize {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    let close = |i: usize| (0..n).filter(|&j| d.get(i, j) <= eps).count();
    order.sort_by_key(|&v| (std::cmp::Reverse(close(v)), v));
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for v in order {
        match classes
            .iter_mut()
            .find(|c| c.iter().all(|&u| d.get(u, v) <= eps))
        {
            Some(c) => c.push(v),
            None => classes.push(vec![v]),
        }
    }
    classes.len()
}

// ---------------------------------------------------------------------------
// set cover

struct CoverSearch<'a> {
    sets: &'a [FixedBitSet],
    containing: Vec<Vec<usize>>,
    best: Vec<usize>,
    current: Vec<usize>,
    nodes: u64,
    budget: u64,
    aborted: bool,
}

impl CoverSearch<'_> {
    fn run(&mut self, uncovered: &FixedBitSet, forbidden: &mut FixedBitSet) {
        let left = uncovered.count_ones(..);
        if left == 0 {
            if self.current.len() < self.best.len() {
                self.best = self.current.clone();
            }
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.aborted = true;
            return;
        }
        let max_gain = (0..self.sets.len())
            .filter(|&s| !forbidden.contains(s))
            .map(|s| self.sets[s].intersection_count(uncovered))
            .max()
            .unwrap_or(0);
        if max_gain == 0 {
            return;
        }
        let mut lower = left.div_ceil(max_gain);
        if self.current.len() + lower < self.best.len() {
            // elements sharing no usable set each need their own set
            let mut used = FixedBitSet::with_capacity(self.sets.len());
            let mut packed = 0;
            for e in uncovered.ones() {
                let own = &self.containing[e];
                if own
                    .iter()
                    .all(|&s| forbidden.contains(s) || !used.contains(s))
                {
                    packed += 1;
                    for &s in own {
                        used.insert(s);
                    }
                }
            }
            lower = lower.max(packed);
        }
        if self.current.len() + lower >= self.best.len() {
            return;
        }
        // branch on the uncovered element with the fewest usable sets
        let mut pivot = None;
        let mut fewest = usize::MAX;
        for e in uncovered.ones() {
            let k = self.containing[e]
                .iter()
                .filter(|&&s| !forbidden.contains(s))
                .count();
            if k < fewest {
                fewest = k;
                pivot = Some(e);
                if k <= 1 {
                    break;
                }
            }
        }
        let Some(pivot) = pivot else { return };
        if fewest == 0 {
            return;
        }
        let mut options: Vec<usize> = self.containing[pivot]
            .iter()
            .copied()
            .filter(|&s| !forbidden.contains(s))
            .collect();
        options.sort_by_key(|&s| {
            (
                std::cmp::Reverse(self.sets[s].intersection_count(uncovered)),
                s,
            )
        });
        let mut banned = Vec::new();
        for s in options {
            let mut next = uncovered.clone();
            next.difference_with(&self.sets[s]);
            self.current.push(s);
            self.run(&next, forbidden);
            self.current.pop();
            if self.aborted {
                break;
            }
            forbidden.insert(s);
            banned.push(s);
        }
        for s in banned {
            forbidden.set(s, false);
        }
    }
}

/// Greedy set cover: repeatedly take the set covering most uncovered elements, lowest index on ties.
fn greedy_cover(n: usize, sets: &[FixedBitSet]) -> Vec<usize> {
    let mut uncovered = FixedBitSet::with_capacity(n);
    uncovered.insert_range(..);
    let mut chosen = Vec::new();
    while uncovered.count_ones(..) > 0 {
        let (best, gain) = sets
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.intersection_count(&uncovered)))
            .fold((0, 0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if gain == 0 {
            break;
        }
        uncovered.difference_with(&sets[best]);
        chosen.push(best);
    }
    chosen
}

/// Minimum set cover of `0..n`; returns the chosen set indices and whether the search finished.
fn exact_cover(n: usize, sets: &[FixedBitSet], budget: u64) -> (Vec<usize>, bool, u64) {
    let mut containing = vec![Vec::new(); n];
    for (i, s) in sets.iter().enumerate() {
        for e in s.ones() {
            containing[e].push(i);
        }
    }
    let greedy = greedy_cover(n, sets);
    let mut search = CoverSearch {
        sets,
        containing,
        best: greedy,
        current: Vec::new(),
        nodes: 0,
        budget,
        aborted: false,
    };
    let mut uncovered = FixedBitSet::with_capacity(n);
    uncovered.insert_range(..);
    let mut forbidden = FixedBitSet::with_capacity(sets.len());
    search.run(&uncovered, &mut forbidden);
    (search.best, !search.aborted, search.nodes)
}

fn closed_balls(d: &DistanceMatrix, eps: f64) -> Vec<FixedBitSet> {
    let n = d.len();
    (0..n)
        .map(|i| {
            let mut b = FixedBitSet::with_capacity(n);
            for j in 0..n {
                if d.get(i, j) <= eps {
                    b.insert(j);
                }
            }
            b
        })
        .collect()
}

/// `r_F(ε)`: minimum number of centers from the point set with every point within `d ≤ ε`.
pub fn min_spanning(d: &DistanceMatrix, q: &CountQuery) -> Result<CountReport> {
    q.validate(d)?;
    let start = Instant::now();
    let balls = closed_balls(d, q.epsilon);
    if !q.is_exact() {
        let mut w = greedy_cover(d.len(), &balls);
        w.sort_unstable();
        return Ok(CountReport {
            value: w.len(),
            bound_direction: BoundDirection::Upper,
            upper: Some(w.len()),
            witness: w,
            stats: SolverStats {
                nodes: 0,
                seconds: start.elapsed().as_secs_f64(),
            },
        });
    }
    let (mut w, done, nodes) = exact_cover(d.len(), &balls, q.node_budget);
    w.sort_unstable();
    let stats = SolverStats {
        nodes,
        seconds: start.elapsed().as_secs_f64(),
    };
    if !done {
        return match q.on_budget {
            BudgetPolicy::Fail => Err(budget_error("minimum spanning set", q.node_budget)),
            BudgetPolicy::Degrade => Ok(CountReport {
                value: w.len(),
                bound_direction: BoundDirection::Upper,
                upper: Some(w.len()),
                witness: w,
                stats,
            }),
        };
    }
    Ok(CountReport::exact(w.len(), w, stats))
}

// ---------------------------------------------------------------------------
// covers by sets of diameter < ε

/// Maximal cliques of the graph `d < ε` (Bron–Kerbosch with pivoting).
pub fn small_diameter_cliques(
    d: &DistanceMatrix,
    eps: f64,
    budget: u64,
) -> Result<Vec<FixedBitSet>> {
    let n = d.len();
    let adj: Vec<FixedBitSet> = (0..n)
        .map(|i| {
            let mut b = FixedBitSet::with_capacity(n);
            for j in 0..n {
                if i != j && d.get(i, j) < eps {
                    b.insert(j);
                }
            }
            b
        })
        .collect();
    let mut out = Vec::new();
    let mut nodes = 0u64;
    fn bk(
        adj: &[FixedBitSet],
        r: &mut FixedBitSet,
        p: FixedBitSet,
        x: FixedBitSet,
        out: &mut Vec<FixedBitSet>,
        nodes: &mut u64,
        budget: u64,
    ) -> bool {
        *nodes += 1;
        if *nodes > budget {
            return false;
        }
        if p.count_ones(..) == 0 {
            if x.count_ones(..) == 0 {
                out.push(r.clone());
            }
            return true;
        }
        let pivot = p
            .union(&x)
            .max_by_key(|&u| (adj[u].intersection_count(&p), std::cmp::Reverse(u)))
            .expect("nonempty");
        let candidates: Vec<usize> = p.ones().filter(|&v| !adj[pivot].contains(v)).collect();
        let (mut p, mut x) = (p, x);
        for v in candidates {
            r.insert(v);
            let mut np = p.clone();
            np.intersect_with(&adj[v]);
            let mut nx = x.clone();
            nx.intersect_with(&adj[v]);
            let ok = bk(adj, r, np, nx, out, nodes, budget);
            r.set(v, false);
            if !ok {
                return false;
            }
            p.set(v, false);
            x.insert(v);
        }
        true
    }
    let mut r = FixedBitSet::with_capacity(n);
    let mut p = FixedBitSet::with_capacity(n);
    p.insert_range(..);
    let x = FixedBitSet::with_capacity(n);
    if !bk(&adj, &mut r, p, x, &mut out, &mut nodes, budget) {
        return Err(budget_error("clique enumeration", budget));
    }
    Ok(out)
}

/// Greedy cells: grow a cell from the lowest uncovered index, adding later points in index order
/// while the cell diameter stays below `ε`.
fn greedy_cells(d: &DistanceMatrix, eps: f64) -> Vec<Vec<usize>> {
    let n = d.len();
    let mut covered = vec![false; n];
    let mut cells = Vec::new();
    for seed in 0..n {
        if covered[seed] {
            continue;
        }
        let mut cell = vec![seed];
        covered[seed] = true;
        for j in (seed + 1)..n {
            if !covered[j] && cell.iter().all(|&u| d.get(u, j) < eps) {
                cell.push(j);
                covered[j] = true;
            }
        }
        cells.push(cell);
    }
    cells
}

/// `cov_F(ε)`: minimum number of subsets of `d`-diameter `< ε` covering the point set.
pub fn min_cover(d: &DistanceMatrix, q: &CountQuery) -> Result<CountReport> {
    q.validate(d)?;
    let start = Instant::now();
    let eps = q.epsilon;
    if !q.is_exact() {
        let cells = greedy_cells(d, eps);
        return Ok(CountReport {
            value: cells.len(),
            bound_direction: BoundDirection::Upper,
            upper: Some(cells.len()),
            witness: cells.iter().map(|c| c[0]).collect(),
            stats: SolverStats {
                nodes: 0,
                seconds: start.elapsed().as_secs_f64(),
            },
        });
    }
    let cliques = match small_diameter_cliques(d, eps, q.node_budget) {
        Ok(c) => c,
        Err(e) => {
            return match q.on_budget {
                BudgetPolicy::Fail => Err(e),
                BudgetPolicy::Degrade => {
                    let mut r = min_cover(d, &q.clone().with_mode(CountMode::Greedy))?;
                    r.stats.seconds = start.elapsed().as_secs_f64();
                    Ok(r)
                }
            }
        }
    };
    let (chosen, done, nodes) = exact_cover(d.len(), &cliques, q.node_budget);
    let mut witness: Vec<usize> = chosen
        .iter()
        .map(|&c| cliques[c].ones().next().expect("nonempty clique"))
        .collect();
    witness.sort_unstable();
    let stats = SolverStats {
        nodes,
        seconds: start.elapsed().as_secs_f64(),
    };
    if !done {
        return match q.on_budget {
            BudgetPolicy::Fail => Err(budget_error("minimum cover", q.node_budget)),
            BudgetPolicy::Degrade => Ok(CountReport {
                value: chosen.len(),
                bound_direction: BoundDirection::Upper,
                upper: Some(chosen.len()),
                witness,
                stats,
            }),
        };
    }
    Ok(CountReport::exact(chosen.len(), witness, stats))
}

// ---------------------------------------------------------------------------
// sandwich chain

/// Computes `cov(2ε) ≤ r(ε) ≤ s(ε) ≤ cov(ε)` exactly and fails on a violation.
///
/// `ε` is first nudged down so that no distance ties `ε` or `2ε`.
pub fn count_chain(d: &DistanceMatrix, eps: f64, node_budget: u64) -> Result<ChainReport> {
    let doubled = d.map(|v| v / 2.0);
    let e = avoid_ties(eps, &[d, &doubled]);
    let q = CountQuery::exact(e).with_budget(node_budget, BudgetPolicy::Fail);
    let report = ChainReport {
        epsilon: e,
        cov_double: min_cover(d, &q.with_epsilon(2.0 * e))?.value,
        spanning: min_spanning(d, &q)?.value,
        separated: max_separated(d, &q)?.value,
        cover: min_cover(d, &q)?.value,
    };
    if !report.holds() {
        return Err(Error::Consistency(format!(
            "sandwich chain violated at ε = {e}: {:?}",
            report.as_tuple()
        )));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Katok partial spanning

struct KatokSearch<'a> {
    balls: &'a [FixedBitSet],
    masses: &'a [f64],
    need: f64,
    best: Vec<usize>,
    current: Vec<usize>,
    nodes: u64,
    budget: u64,
    aborted: bool,
}

fn mass_of(set: &FixedBitSet, masses: &[f64]) -> f64 {
    set.ones().map(|i| masses[i]).sum()
}

impl KatokSearch<'_> {
    fn run(&mut self, covered: &FixedBitSet, mass: f64, allowed: &FixedBitSet) {
        if mass > self.need + MASS_TOL {
            if self.current.len() < self.best.len() {
                self.best = self.current.clone();
            }
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.aborted = true;
            return;
        }
        let mut gains: Vec<(usize, f64)> = allowed
            .ones()
            .map(|v| {
                let g: f64 = self.balls[v]
                    .ones()
                    .filter(|&u| !covered.contains(u))
                    .map(|u| self.masses[u])
                    .sum();
                (v, g)
            })
            .filter(|&(_, g)| g > 0.0)
            .collect();
        gains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        // fewest further centers that could possibly reach the target
        let mut acc = mass;
        let mut lower = None;
        for (k, &(_, g)) in gains.iter().enumerate() {
            acc += g;
            if acc > self.need + MASS_TOL {
                lower = Some(k + 1);
                break;
            }
        }
        let Some(lower) = lower else { return };
        if self.current.len() + lower >= self.best.len() {
            return;
        }
        let v = gains[0].0;
        // include v
        let mut next = covered.clone();
        next.union_with(&self.balls[v]);
        let mut rest = allowed.clone();
        rest.set(v, false);
        self.current.push(v);
        self.run(&next, mass + gains[0].1, &rest);
        self.current.pop();
        if self.aborted {
            return;
        }
        // exclude v
        self.run(covered, mass, &rest);
    }
}

/// `r_F(μ, ε, δ)`: fewest centers whose closed `ε`-balls carry mass `> 1 − δ`.
pub fn katok_spanning(
    d: &DistanceMatrix,
    masses: &[f64],
    delta: f64,
    q: &CountQuery,
) -> Result<CountReport> {
    q.validate(d)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("katok δ = {delta} outside (0, 1)")));
    }
    if masses.len() != d.len() {
        return Err(Error::Precondition("one mass per point required".into()));
    }
    let start = Instant::now();
    let need = 1.0 - delta;
    let total: f64 = masses.iter().sum();
    if total <= need + MASS_TOL {
        return Err(Error::Precondition(format!(
            "total mass {total} cannot exceed 1 − δ = {need}"
        )));
    }
    let n = d.len();
    let balls = closed_balls(d, q.epsilon);
    // greedy by marginal mass, lowest index on ties
    let mut covered = FixedBitSet::with_capacity(n);
    let mut greedy = Vec::new();
    let mut mass = 0.0;
    while mass <= need + MASS_TOL {
        let (v, g) = (0..n)
            .map(|v| {
                let g: f64 = balls[v]
                    .ones()
                    .filter(|&u| !covered.contains(u))
                    .map(|u| masses[u])
                    .sum();
                (v, g)
            })
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if g <= 0.0 {
            break;
        }
        covered.union_with(&balls[v]);
        mass = mass_of(&covered, masses);
        greedy.push(v);
    }
    if !q.is_exact() {
        greedy.sort_unstable();
        return Ok(CountReport {
            value: greedy.len(),
            bound_direction: BoundDirection::Upper,
            upper: Some(greedy.len()),
            witness: greedy,
            stats: SolverStats {
                nodes: 0,
                seconds: start.elapsed().as_secs_f64(),
            },
        });
    }
    let mut search = KatokSearch {
        balls: &balls,
        masses,
        need,
        best: greedy,
        current: Vec::new(),
        nodes: 0,
        budget: q.node_budget,
        aborted: false,
    };
    let mut allowed = FixedBitSet::with_capacity(n);
    allowed.insert_range(..);
    search.run(&FixedBitSet::with_capacity(n), 0.0, &allowed);
    let mut w = search.best;
    w.sort_unstable();
    let stats = SolverStats {
        nodes: search.nodes,
        seconds: start.elapsed().as_secs_f64(),
    };
    if search.aborted {
        return match q.on_budget {
            BudgetPolicy::Fail => Err(budget_error("katok spanning set", q.node_budget)),
            BudgetPolicy::Degrade => Ok(CountReport {
                value: w.len(),
                bound_direction: BoundDirection::Upper,
                upper: Some(w.len()),
                witness: w,
                stats,
            }),
        };
    }
    Ok(CountReport::exact(w.len(), w, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> DistanceMatrix {
        DistanceMatrix::from_line(&[0.0, 0.3, 0.6, 0.9])
    }

    fn exact<F: Fn(&DistanceMatrix, &CountQuery) -> Result<CountReport>>(
        f: F,
        d: &DistanceMatrix,
        e: f64,
    ) -> usize {
        let r = f(d, &CountQuery::exact(e)).unwrap();
        assert_eq!(r.bound_direction, BoundDirection::Exact);
        r.value
    }

    #[test]
    fn separated_examples() {
        assert_eq!(exact(max_separated, &line(), 0.25), 4);
        assert_eq!(exact(max_separated, &line(), 0.35), 2);
        assert_eq!(
            exact(max_separated, &DistanceMatrix::from_line(&[0.4]), 0.1),
            1
        );
    }

    #[test]
    fn spanning_examples() {
        assert_eq!(exact(min_spanning, &line(), 0.3), 2);
        assert_eq!(exact(min_spanning, &line(), 1.0), 1);
        assert_eq!(
            exact(min_spanning, &DistanceMatrix::from_line(&[0.0, 0.5]), 0.2),
            2
        );
    }

    #[test]
    fn cover_examples() {
        assert_eq!(
            exact(min_cover, &DistanceMatrix::from_line(&[0.0, 0.5]), 0.3),
            2
        );
        let tri = DistanceMatrix::from_fn(3, |_, _| 0.1);
        assert_eq!(exact(min_cover, &tri, 0.2), 1);
        assert_eq!(exact(min_cover, &line(), 0.35), 2);
    }

    #[test]
    fn chain_examples() {
        let single = DistanceMatrix::from_line(&[0.0]);
        assert_eq!(
            count_chain(&single, 0.1, DEFAULT_NODE_BUDGET)
                .unwrap()
                .as_tuple(),
            (1, 1, 1, 1)
        );
        assert_eq!(
            count_chain(&line(), 0.25, DEFAULT_NODE_BUDGET)
                .unwrap()
                .as_tuple(),
            (2, 4, 4, 4)
        );
    }

    #[test]
    fn chain_survives_ties() {
        // a closed 0.3-ball around 0.3 has diameter exactly 0.6
        let d = DistanceMatrix::from_line(&[0.0, 0.25, 0.5]);
        let c = count_chain(&d, 0.25, DEFAULT_NODE_BUDGET).unwrap();
        assert!(c.epsilon < 0.25);
        assert!(c.holds());
    }

    #[test]
    fn katok_examples() {
        let d = DistanceMatrix::from_line(&[0.0, 1.0, 2.0, 3.0]);
        let q = CountQuery::exact(0.5);
        assert_eq!(katok_spanning(&d, &[0.25; 4], 0.3, &q).unwrap().value, 3);
        assert_eq!(katok_spanning(&d, &[0.25; 4], 1e-9, &q).unwrap().value, 4);
        assert_eq!(
            katok_spanning(&d, &[0.0, 1.0, 0.0, 0.0], 0.9, &q)
                .unwrap()
                .value,
            1
        );
        assert!(katok_spanning(&d, &[0.25; 4], 1.0, &q).is_err());
    }

    #[test]
    fn greedy_directions() {
        let d = line();
        let g = max_separated(&d, &CountQuery::greedy(0.35)).unwrap();
        assert_eq!(g.bound_direction, BoundDirection::Lower);
        let r = min_spanning(&d, &CountQuery::greedy(0.3)).unwrap();
        assert_eq!(r.bound_direction, BoundDirection::Upper);
        let c = min_cover(&d, &CountQuery::greedy(0.35)).unwrap();
        assert_eq!(c.bound_direction, BoundDirection::Upper);
        assert_eq!(c.value, 2);
    }

    #[test]
    fn budget_policies() {
        let d = DistanceMatrix::from_fn(40, |i, j| 0.1 + ((i * 7 + j * 13) % 17) as f64 / 17.0);
        let tight = CountQuery::exact(0.5).with_budget(3, BudgetPolicy::Fail);
        assert!(matches!(max_separated(&d, &tight), Err(Error::Resource(_))));
        let soft = CountQuery::exact(0.5).with_budget(3, BudgetPolicy::Degrade);
        let r = max_separated(&d, &soft).unwrap();
        assert_eq!(r.bound_direction, BoundDirection::Lower);
        assert!(r.upper.unwrap() >= r.value);
    }

    #[test]
    fn rejects_bad_queries() {
        assert!(max_separated(&line(), &CountQuery::exact(0.0)).is_err());
        let q = CountQuery::exact(0.1).with_mode(CountMode::Sampled { n: 1, seed: 0 });
        assert!(max_separated(&line(), &q).is_err());
    }

    #[test]
    fn upper_bound_brackets_exact() {
        let d = line();
        for e in [0.1, 0.25, 0.35, 0.7] {
            assert!(separated_upper_bound(&d, e) >= exact(max_separated, &d, e));
        }
    }
}
