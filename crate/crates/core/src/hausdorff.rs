//! Scale-limited Hausdorff measures `H^s_ε` on finite point sets, dimension at
//! scale by bisection, and the ball-cover variant.
//!
//! A cover cell `A` costs `max(diam A, δ_f)^s` with `0^0 = 1`, where `δ_f` is the
//! cell floor. Cells must have diameter `< ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::DistanceMatrix;
use crate::packing::{BoundDirection, CountMode};

/// Largest point count handled by the exact dynamic programs.
pub const EXACT_POINT_LIMIT: usize = 14;
/// Upper end of the bisection interval.
pub const S_MAX: f64 = 64.0;
/// Default bisection width.
pub const BISECTION_WIDTH: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HausdorffQuery {
    pub s: f64,
    pub epsilon: f64,
    pub phi: f64,
    pub floor: f64,
    pub mode: CountMode,
}

impl HausdorffQuery {
    pub fn new(s: f64, epsilon: f64, floor: f64) -> Self {
        Self {
            s,
            epsilon,
            phi: 1.0,
            floor,
            mode: CountMode::Exact,
        }
    }

    fn validate(&self) -> Result<()> {
        validate_scale(self.epsilon, self.phi, self.floor)?;
        if !(self.s >= 0.0) {
            return Err(Error::Config(format!(
                "exponent s = {} must be nonnegative",
                self.s
            )));
        }
        Ok(())
    }
}

fn validate_scale(eps: f64, phi: f64, floor: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!("hausdorff ε = {eps} outside (0, 1]")));
    }
    if !(phi > 0.0) {
        return Err(Error::Config(format!("φ = {phi} must be positive")));
    }
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::Config(format!("cell floor {floor} outside [0, 1)")));
    }
    Ok(())
}

/// `max(diam, δ_f)^s` with `0^0 = 1`.
pub fn cell_cost(diam: f64, floor: f64, s: f64) -> f64 {
    let e = diam.max(floor);
    if s == 0.0 {
        1.0
    } else if e == 0.0 {
        0.0
    } else {
        e.powf(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HausdorffValue {
    pub value: f64,
    pub bound_direction: BoundDirection,
    /// Cells of an optimal (or the greedy) cover, as point indices.
    pub cover: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimAtScale {
    pub value: f64,
    pub width: f64,
    /// The bisection hit `S_MAX` without crossing `φ`.
    pub capped: bool,
    pub bound_direction: BoundDirection,
    /// Cover attaining `H` at the lower end of the final interval.
    pub witness: Vec<Vec<usize>>,
}

/// Cover family used by a solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    Subsets,
    Balls,
}

/// Precomputed cover candidates for one `(d, ε)` pair.
struct Solver {
    n: usize,
    family: Family,
    exact: bool,
    /// Subsets: diameter per mask (`NaN` when not a cell). Balls/greedy: candidate masks.
    mask_diam: Vec<f64>,
    candidates: Vec<(Vec<usize>, f64)>,
    candidate_masks: Vec<usize>,
}

fn mask_members(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize)
        .filter(|&i| mask >> i & 1 == 1)
        .collect()
}

/// Open balls centered at points with diameter `< ε`, deduplicated, in center order.
fn ball_candidates(d: &DistanceMatrix, eps: f64) -> Vec<(Vec<usize>, f64)> {
    let n = d.len();
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for c in 0..n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d.get(c, a).total_cmp(&d.get(c, b)).then(a.cmp(&b)));
        let mut members: Vec<usize> = Vec::new();
        let mut diam = 0.0_f64;
        let mut k = 0;
        while k < n {
            // a ball of radius just above the next distance takes all points at that distance
            let r = d.get(c, order[k]);
            let mut grown = diam;
            let mut j = k;
            while j < n && d.get(c, order[j]) == r {
                for &u in members.iter().chain(&order[k..j]) {
                    grown = grown.max(d.get(u, order[j]));
                }
                j += 1;
            }
            if grown >= eps {
                break;
            }
            members.extend_from_slice(&order[k..j]);
            diam = grown;
            k = j;
            let mut key = members.clone();
            key.sort_unstable();
            if seen.insert(key.clone()) {
                out.push((key, diam));
            }
        }
    }
    out
}

impl Solver {
    fn new(d: &DistanceMatrix, eps: f64, family: Family, exact: bool) -> Result<Self> {
        let n = d.len();
        if n == 0 {
            return Err(Error::Precondition("point set must be nonempty".into()));
        }
        if exact && n > EXACT_POINT_LIMIT {
            return Err(Error::Resource(format!(
                "exact Hausdorff solver handles at most {EXACT_POINT_LIMIT} points, got {n}; use greedy mode"
            )));
        }
        let mut solver = Self {
            n,
            family,
            exact,
            mask_diam: Vec::new(),
            candidates: Vec::new(),
            candidate_masks: Vec::new(),
        };
        if exact && family == Family::Subsets {
            let mut diam = vec![f64::NAN; 1 << n];
            diam[0] = 0.0;
            for mask in 1usize..(1 << n) {
                let hi = usize::BITS as usize - 1 - mask.leading_zeros() as usize;
                let rest = mask ^ (1 << hi);
                let base = diam[rest];
                if base.is_nan() {
                    continue;
                }
                let far = mask_members(rest)
                    .into_iter()
                    .map(|u| d.get(u, hi))
                    .fold(base, f64::max);
                if far < eps {
                    diam[mask] = far;
                }
            }
            solver.mask_diam = diam;
        } else {
            solver.candidates = ball_candidates(d, eps);
            solver.candidate_masks = if exact {
                solver
                    .candidates
                    .iter()
                    .map(|(m, _)| m.iter().fold(0usize, |acc, &i| acc | 1 << i))
                    .collect()
            } else {
                Vec::new()
            };
        }
        Ok(solver)
    }

    fn solve(&self, s: f64, floor: f64) -> HausdorffValue {
        if !self.exact {
            return self.greedy(s, floor);
        }
        let full = (1usize << self.n) - 1;
        let mut best = vec![f64::INFINITY; 1 << self.n];
        let mut choice = vec![0usize; 1 << self.n];
        best[0] = 0.0;
        match self.family {
            Family::Subsets => {
                let cost: Vec<f64> = self
                    .mask_diam
                    .iter()
                    .map(|&dm| {
                        if dm.is_nan() {
                            f64::NAN
                        } else {
                            cell_cost(dm, floor, s)
                        }
                    })
                    .collect();
                for mask in 1..=full {
                    let low = mask & mask.wrapping_neg();
                    let rest = mask ^ low;
                    let mut sub = rest;
                    loop {
                        let cell = sub | low;
                        let c = cost[cell];
                        if !c.is_nan() {
                            let v = c + best[mask ^ cell];
                            if v < best[mask] {
                                best[mask] = v;
                                choice[mask] = cell;
                            }
                        }
                        if sub == 0 {
                            break;
                        }
                        sub = (sub - 1) & rest;
                    }
                }
            }
            Family::Balls => {
                let cost: Vec<f64> = self
                    .candidates
                    .iter()
                    .map(|(_, dm)| cell_cost(*dm, floor, s))
                    .collect();
                for mask in 1..=full {
                    let low = mask & mask.wrapping_neg();
                    for (k, &cm) in self.candidate_masks.iter().enumerate() {
                        if cm & low == 0 {
                            continue;
                        }
                        let v = cost[k] + best[mask & !cm];
                        if v < best[mask] {
                            best[mask] = v;
                            choice[mask] = cm;
                        }
                    }
                }
            }
        }
        let mut cover = Vec::new();
        let mut mask = full;
        while mask != 0 {
            let cell = choice[mask];
            cover.push(mask_members(cell));
            mask &= !cell;
        }
        HausdorffValue {
            value: best[full],
            bound_direction: BoundDirection::Exact,
            cover,
        }
    }

    /// Weighted greedy set cover over the ball family: cheapest cost per newly covered point.
    fn greedy(&self, s: f64, floor: f64) -> HausdorffValue {
        let mut covered = vec![false; self.n];
        let mut left = self.n;
        let mut total = 0.0;
        let mut cover = Vec::new();
        while left > 0 {
            let mut pick: Option<(usize, f64)> = None;
            for (k, (members, dm)) in self.candidates.iter().enumerate() {
                let fresh = members.iter().filter(|&&u| !covered[u]).count();
                if fresh == 0 {
                    continue;
                }
                let ratio = cell_cost(*dm, floor, s) / fresh as f64;
                if pick.is_none_or(|(_, r)| ratio < r) {
                    pick = Some((k, ratio));
                }
            }
            let (k, _) = pick.expect("singleton balls cover every point");
            let (members, dm) = &self.candidates[k];
            for &u in members {
                if !covered[u] {
                    covered[u] = true;
                    left -= 1;
                }
            }
            total += cell_cost(*dm, floor, s);
            cover.push(members.clone());
        }
        HausdorffValue {
            value: total,
            bound_direction: BoundDirection::Upper,
            cover,
        }
    }

    fn bisect(&self, phi: f64, floor: f64, width: f64) -> DimAtScale {
        let direction = if self.exact {
            BoundDirection::Exact
        } else {
            BoundDirection::Upper
        };
        let at_zero = self.solve(0.0, floor);
        if at_zero.value < phi {
            return DimAtScale {
                value: 0.0,
                width: 0.0,
                capped: false,
                bound_direction: direction,
                witness: at_zero.cover,
            };
        }
        let at_cap = self.solve(S_MAX, floor);
        if at_cap.value >= phi {
            return DimAtScale {
                value: S_MAX,
                width: 0.0,
                capped: true,
                bound_direction: direction,
                witness: at_cap.cover,
            };
        }
        let (mut lo, mut hi) = (0.0, S_MAX);
        let mut witness = at_zero.cover;
        while hi - lo > width {
            let mid = 0.5 * (lo + hi);
            let h = self.solve(mid, floor);
            if h.value >= phi {
                lo = mid;
                witness = h.cover;
            } else {
                hi = mid;
            }
        }
        DimAtScale {
            value: lo,
            width: hi - lo,
            capped: false,
            bound_direction: direction,
            witness,
        }
    }
}

fn is_exact(mode: CountMode) -> bool {
    mode == CountMode::Exact
}

/// `H^s_ε` with the cell floor. Exact mode optimizes over all subsets of diameter `< ε`;
/// greedy mode returns the cost of a greedy ball cover, an upper bound.
pub fn hausdorff_measure_at_scale(
    d: &DistanceMatrix,
    q: &HausdorffQuery,
) -> Result<HausdorffValue> {
    q.validate()?;
    let family = if is_exact(q.mode) {
        Family::Subsets
    } else {
        Family::Balls
    };
    Ok(Solver::new(d, q.epsilon, family, is_exact(q.mode))?.solve(q.s, q.floor))
}

/// `sup{s ≥ 0 : H^s_ε ≥ φ}` by bisection on `[0, 64]`.
pub fn dim_at_scale(
    d: &DistanceMatrix,
    eps: f64,
    phi: f64,
    floor: f64,
    mode: CountMode,
) -> Result<DimAtScale> {
    validate_scale(eps, phi, floor)?;
    let family = if is_exact(mode) {
        Family::Subsets
    } else {
        Family::Balls
    };
    Ok(Solver::new(d, eps, family, is_exact(mode))?.bisect(phi, floor, BISECTION_WIDTH))
}

/// [`dim_at_scale`] with covers restricted to open balls centered at points.
pub fn ball_dim_at_scale(
    d: &DistanceMatrix,
    eps: f64,
    phi: f64,
    floor: f64,
    mode: CountMode,
) -> Result<DimAtScale> {
    validate_scale(eps, phi, floor)?;
    Ok(Solver::new(d, eps, Family::Balls, is_exact(mode))?.bisect(phi, floor, BISECTION_WIDTH))
}
