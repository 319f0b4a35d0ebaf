//! Finite-scale inequalities as executable checks.
//!
//! Hard checks compare exact solver values and fail with a serializable
//! counterexample. Soft checks compare finite-scale surrogates of limit
//! statements and only report margins.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimate::minkowski_dim_estimate;
use crate::group::{window_product, FiniteWindow};
use crate::hausdorff::{
    dim_at_scale, hausdorff_measure_at_scale, HausdorffQuery, EXACT_POINT_LIMIT,
};
use crate::metric::{
    avoid_ties, random_metric, DistanceMatrix, MetricTransform, EXACT_TOL, TIE_JITTER, TIE_TOL,
};
use crate::packing::{
    katok_spanning, max_separated, min_cover, min_spanning, BoundDirection, BudgetPolicy,
    CountMode, CountQuery, DEFAULT_NODE_BUDGET,
};
use crate::systems::{
    product_system, Alphabet, AlphabetSpec, Boundary, FiniteSystem, GSystem, ShiftSystem,
    WeightFamily, DEFAULT_TAIL_TOL,
};

/// Slack allowed on the soft mean Hausdorff product check.
pub const SOFT_TOL: f64 = 1e-6;
/// Scale offset between product and factors in the soft product check.
pub const PRODUCT_SCALE_OFFSET: f64 = 6.0;
/// Relative tolerance of the snowflake Hausdorff identity.
pub const SNOWFLAKE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    SoftPass,
    SoftDeviation,
    /// Budget exhausted before the check could be decided.
    Skipped,
}

impl CheckStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::SoftPass => "soft-pass",
            CheckStatus::SoftDeviation => "soft-deviation",
            CheckStatus::Skipped => "skipped",
        }
    }

    pub fn is_hard_failure(&self) -> bool {
        *self == CheckStatus::Fail
    }

    pub fn is_soft(&self) -> bool {
        matches!(self, CheckStatus::SoftPass | CheckStatus::SoftDeviation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    /// The inequality or identity being checked, in plain notation.
    pub statement: String,
    pub status: CheckStatus,
    /// Smallest slack over the asserted relations; negative iff violated.
    pub margin: f64,
    pub instances: usize,
    /// Reported quantities, keyed by name.
    pub details: BTreeMap<String, f64>,
    /// Replayable instance for the first failure.
    pub witness: Option<Value>,
    pub note: String,
}

impl CheckOutcome {
    fn new(name: &str, statement: &str) -> Self {
        Self {
            name: name.into(),
            statement: statement.into(),
            status: CheckStatus::Pass,
            margin: f64::INFINITY,
            instances: 1,
            details: BTreeMap::new(),
            witness: None,
            note: String::new(),
        }
    }

    fn skipped(name: &str, statement: &str, why: String) -> Self {
        Self {
            status: CheckStatus::Skipped,
            margin: f64::NAN,
            note: why,
            ..Self::new(name, statement)
        }
    }

    /// Records `lhs ≤ rhs`; the first violation becomes the witness.
    fn le(&mut self, label: &str, lhs: f64, rhs: f64, witness: impl FnOnce() -> Value) {
        let slack = rhs - lhs;
        self.margin = self.margin.min(slack);
        if slack < 0.0 && self.status != CheckStatus::Fail {
            self.status = CheckStatus::Fail;
            self.note = format!("{label}: {lhs} > {rhs}");
            self.witness = Some(witness());
        }
    }

    fn detail(&mut self, key: &str, v: f64) {
        self.details.insert(key.into(), v);
    }

    pub fn passed(&self) -> bool {
        !self.status.is_hard_failure()
    }
}

/// Folds per-instance outcomes into one row; the row fails iff some instance fails.
pub fn aggregate(name: &str, outcomes: Vec<CheckOutcome>) -> CheckOutcome {
    let statement = outcomes
        .first()
        .map(|o| o.statement.clone())
        .unwrap_or_default();
    let mut out = CheckOutcome::new(name, &statement);
    out.instances = outcomes.len();
    let soft = outcomes.iter().any(|o| o.status.is_soft());
    out.status = if soft {
        CheckStatus::SoftPass
    } else {
        CheckStatus::Pass
    };
    let mut skipped = 0;
    let mut deviations = 0;
    for o in &outcomes {
        match o.status {
            CheckStatus::Skipped => skipped += 1,
            CheckStatus::SoftDeviation => deviations += 1,
            _ => {}
        }
        if !o.margin.is_nan() {
            out.margin = out.margin.min(o.margin);
        }
        if o.status == CheckStatus::Fail && out.status != CheckStatus::Fail {
            out.status = CheckStatus::Fail;
            out.witness = o.witness.clone();
            out.note = o.note.clone();
        }
    }
    if out.status != CheckStatus::Fail {
        if deviations > 0 {
            out.status = CheckStatus::SoftDeviation;
        }
        if skipped == outcomes.len() && !outcomes.is_empty() {
            out.status = CheckStatus::Skipped;
        }
        let mut parts = Vec::new();
        if deviations > 0 {
            parts.push(format!("{deviations} deviations"));
        }
        if skipped > 0 {
            parts.push(format!("{skipped} skipped"));
        }
        out.note = parts.join(", ");
    }
    out.detail("skipped", skipped as f64);
    out.detail("deviations", deviations as f64);
    out
}

fn exact_query(eps: f64, budget: u64) -> CountQuery {
    CountQuery::exact(eps).with_budget(budget, BudgetPolicy::Fail)
}

/// Runs a check body, turning budget exhaustion into a skipped row.
fn guarded(
    name: &str,
    statement: &str,
    body: impl FnOnce() -> Result<CheckOutcome>,
) -> Result<CheckOutcome> {
    match body() {
        Err(Error::Resource(why)) => Ok(CheckOutcome::skipped(name, statement, why)),
        other => other,
    }
}

/// Nudges `eps` down until neither `d` at `eps` nor `dt` at `f(eps)` has a tie.
fn untied_pair(eps: f64, d: &DistanceMatrix, dt: &DistanceMatrix, f: impl Fn(f64) -> f64) -> f64 {
    let mut e = eps;
    for _ in 0..64 {
        e = avoid_ties(e, &[d]);
        if !dt.has_tie(f(e), TIE_TOL) {
            return e;
        }
        e *= 1.0 - TIE_JITTER;
    }
    e
}

// ---------------------------------------------------------------------------
// sandwich chain

pub const SANDWICH: &str = "cov(2ε) ≤ r(ε) ≤ s(ε) ≤ cov(ε)";

pub fn check_sandwich(d: &DistanceMatrix, eps: f64, node_budget: u64) -> Result<CheckOutcome> {
    guarded("sandwich", SANDWICH, || {
        let doubled = d.map(|v| v / 2.0);
        let e = avoid_ties(eps, &[d, &doubled]);
        let q = exact_query(e, node_budget);
        let cov2 = min_cover(d, &q.with_epsilon(2.0 * e))?.value;
        let r = min_spanning(d, &q)?.value;
        let s = max_separated(d, &q)?.value;
        let cov = min_cover(d, &q)?.value;
        let mut out = CheckOutcome::new("sandwich", SANDWICH);
        let w = || json!({"matrix": d, "epsilon": e, "counts": [cov2, r, s, cov]});
        out.le("cov(2ε) ≤ r(ε)", cov2 as f64, r as f64, w);
        out.le("r(ε) ≤ s(ε)", r as f64, s as f64, w);
        out.le("s(ε) ≤ cov(ε)", s as f64, cov as f64, w);
        out.detail("epsilon", e);
        Ok(out)
    })
}

// ---------------------------------------------------------------------------
// product counts

pub const PRODUCT_COUNTS: &str = "r(d×d′, ε) ≤ r(d, ε)·r(d′, ε) and s(d×d′, ε) ≥ s(d, ε)·s(d′, ε)";

/// Exact `r` and `s` on both factors and on `M × L` under `d×d′`.
pub fn check_product_counts<A: GSystem, B: GSystem>(
    a: &A,
    m: &[A::Point],
    b: &B,
    l: &[B::Point],
    window: &FiniteWindow,
    eps: f64,
    node_budget: u64,
) -> Result<CheckOutcome> {
    guarded("product_counts", PRODUCT_COUNTS, || {
        let dm = a.bowen_matrix(m, window)?;
        let dl = b.bowen_matrix(l, window)?;
        let prod = product_system(a, b)?;
        let dp = prod.bowen_matrix(&prod.pairs(m, l), window)?;
        let e = avoid_ties(eps, &[&dm, &dl]);
        let q = exact_query(e, node_budget);
        let (rm, rl, rp) = (
            min_spanning(&dm, &q)?.value,
            min_spanning(&dl, &q)?.value,
            min_spanning(&dp, &q)?.value,
        );
        let (sm, sl, sp) = (
            max_separated(&dm, &q)?.value,
            max_separated(&dl, &q)?.value,
            max_separated(&dp, &q)?.value,
        );
        let mut out = CheckOutcome::new("product_counts", PRODUCT_COUNTS);
        let w = || json!({"first": dm, "second": dl, "epsilon": e, "r": [rm, rl, rp], "s": [sm, sl, sp]});
        out.le("r product", rp as f64, (rm * rl) as f64, w);
        out.le("s product", (sm * sl) as f64, sp as f64, w);
        // normalized log counts, the estimate-level form of the chain
        let k = window.len() as f64;
        out.detail("log_r_product", (rp as f64).ln() / k);
        out.detail("log_r_factors", ((rm * rl) as f64).ln() / k);
        out.detail("log_s_product", (sp as f64).ln() / k);
        out.detail("log_s_factors", ((sm * sl) as f64).ln() / k);
        Ok(out)
    })
}

// ---------------------------------------------------------------------------
// transforms

pub const TRANSFORM_RELATIONS: &str =
    "(ζ∘d)_F = ζ∘d_F, r(d, ε) ≥ r(ζ∘d, ζ(ε)), s(d, ε) ≤ s(ζ∘d, ζ(ε)), H^s_{η^a}(d^a) = H^{as}_η(d)";

/// The four transform relations on a finite system, plus exact equality of all
/// three counts when `ζ` is a power.
pub fn check_transform_relations(
    sys: &FiniteSystem,
    t: &MetricTransform,
    window: &FiniteWindow,
    eps: f64,
    node_budget: u64,
) -> Result<CheckOutcome> {
    let name = "transform_relations";
    guarded(name, TRANSFORM_RELATIONS, || {
        t.validate(sys.metric().diameter().max(EXACT_TOL), 1000)?;
        let tsys = sys.with_metric(sys.metric().map(|v| t.eval(v)))?;
        let pts = sys.points();
        let d = sys.bowen_matrix(&pts, window)?;
        let dz = tsys.bowen_matrix(&pts, window)?;
        let mut out = CheckOutcome::new(name, TRANSFORM_RELATIONS);
        out.detail(
            "transform_exponent",
            t.closed_form_exponent().unwrap_or(f64::NAN),
        );

        let composed = d.map(|v| t.eval(v));
        let gap = composed.uniform_distance(&dz);
        out.le(
            "Bowen commutation",
            gap,
            EXACT_TOL,
            || json!({"metric": sys.metric(), "transform": t, "gap": gap}),
        );

        let e = untied_pair(eps, &d, &dz, |x| t.eval(x));
        let ez = t.eval(e);
        let q = exact_query(e, node_budget);
        let qz = exact_query(ez, node_budget);
        let (r, rz) = (min_spanning(&d, &q)?.value, min_spanning(&dz, &qz)?.value);
        let (s, sz) = (max_separated(&d, &q)?.value, max_separated(&dz, &qz)?.value);
        let w = || json!({"matrix": d, "transform": t, "epsilon": e, "r": [r, rz], "s": [s, sz]});
        out.le("spanning transfer", rz as f64, r as f64, w);
        out.le("separated transfer", s as f64, sz as f64, w);

        if let MetricTransform::Power { a } = *t {
            let (c, cz) = (min_cover(&d, &q)?.value, min_cover(&dz, &qz)?.value);
            let w =
                || json!({"matrix": d, "a": a, "epsilon": e, "counts": [[s, r, c], [sz, rz, cz]]});
            for (label, x, y) in [
                ("s equality", s, sz),
                ("r equality", r, rz),
                ("cov equality", c, cz),
            ] {
                out.le(label, x.abs_diff(y) as f64, 0.0, w);
            }
            if d.len() <= EXACT_POINT_LIMIT && e <= 1.0 && ez <= 1.0 {
                let s_exp = 1.0;
                let h =
                    hausdorff_measure_at_scale(&dz, &HausdorffQuery::new(s_exp, ez, 0.0))?.value;
                let hd =
                    hausdorff_measure_at_scale(&d, &HausdorffQuery::new(a * s_exp, e, 0.0))?.value;
                let rel = (h - hd).abs() / h.abs().max(hd.abs()).max(f64::MIN_POSITIVE);
                out.le(
                    "snowflake identity",
                    rel,
                    SNOWFLAKE_TOL,
                    || json!({"matrix": d, "a": a, "eta": e, "values": [h, hd]}),
                );
                out.detail("snowflake_relative_gap", rel);
            }
        } else {
            out.note = "snowflake identity applies to powers only".into();
        }
        out.detail("epsilon", e);
        Ok(out)
    })
}

// ---------------------------------------------------------------------------
// hybrid metric

pub const HYBRID: &str =
    "D(d, d_{α,ε}) < 2ε, r(d_{α,ε}, ε^{1−α}η^α) ≤ r(d, η), r(d, ε^{(α−1)/α}η^{1/α}) ≤ r(d_{α,ε}, η)";

/// Proximity of `d_{α,ε}` to `d` and both spanning transfers for every `η < ε`.
pub fn check_hybrid_metric(
    sys: &FiniteSystem,
    alpha: f64,
    eps: f64,
    window: &FiniteWindow,
    etas: &[f64],
    node_budget: u64,
) -> Result<CheckOutcome> {
    if let Some(eta) = etas.iter().find(|&&eta| !(eta > 0.0 && eta < eps)) {
        return Err(Error::Precondition(format!(
            "η = {eta} must lie in (0, ε = {eps})"
        )));
    }
    let t = MetricTransform::Hybrid { alpha, eps };
    t.validate(sys.metric().diameter().max(eps), 1000)?;
    let name = "hybrid_metric";
    guarded(name, HYBRID, || {
        let hsys = sys.with_metric(sys.metric().map(|v| t.eval(v)))?;
        let pts = sys.points();
        let d = sys.bowen_matrix(&pts, window)?;
        let dh = hsys.bowen_matrix(&pts, window)?;
        let mut out = CheckOutcome::new(name, HYBRID);
        let base_gap = sys.metric().uniform_distance(hsys.metric());
        let bowen_gap = d.uniform_distance(&dh);
        let w = || json!({"metric": sys.metric(), "alpha": alpha, "epsilon": eps});
        // strict bound: count a gap equal to 2ε as a violation
        out.le("D bound", base_gap, 2.0 * eps * (1.0 - f64::EPSILON), w);
        out.le(
            "D bound on d_F",
            bowen_gap,
            2.0 * eps * (1.0 - f64::EPSILON),
            w,
        );
        out.detail("uniform_distance", base_gap);

        let forward = |eta: f64| eps.powf(1.0 - alpha) * eta.powf(alpha);
        let backward = |eta: f64| eps.powf((alpha - 1.0) / alpha) * eta.powf(1.0 / alpha);
        let mut log_r = Vec::new();
        for &eta0 in etas {
            let mut eta = eta0;
            for _ in 0..64 {
                eta = avoid_ties(eta, &[&d, &dh]);
                if !dh.has_tie(forward(eta), TIE_TOL) && !d.has_tie(backward(eta), TIE_TOL) {
                    break;
                }
                eta *= 1.0 - TIE_JITTER;
            }
            let r_d = min_spanning(&d, &exact_query(eta, node_budget))?.value;
            let r_h_fwd = min_spanning(&dh, &exact_query(forward(eta), node_budget))?.value;
            let r_h = min_spanning(&dh, &exact_query(eta, node_budget))?.value;
            let r_d_back = min_spanning(&d, &exact_query(backward(eta), node_budget))?.value;
            let w = || {
                json!({"matrix": d, "alpha": alpha, "epsilon": eps, "eta": eta,
                       "r": {"d": r_d, "hybrid_forward": r_h_fwd, "hybrid": r_h, "d_backward": r_d_back}})
            };
            out.le("forward spanning transfer", r_h_fwd as f64, r_d as f64, w);
            out.le("reverse spanning transfer", r_d_back as f64, r_h as f64, w);
            log_r.push((eta.ln().abs(), (r_d as f64).ln(), (r_h as f64).ln()));
        }
        // amplification trend: slope of ln r under d_{α,ε} over slope under d
        if log_r.len() >= 2 {
            let (first, last) = (log_r[0], log_r[log_r.len() - 1]);
            let dx = last.0 - first.0;
            if dx > 0.0 && last.1 > first.1 {
                out.detail(
                    "slope_amplification",
                    (last.2 - first.2) / (last.1 - first.1),
                );
            }
        }
        Ok(out)
    })
}

// ---------------------------------------------------------------------------
// full shift

pub const FULLSHIFT: &str =
    "s_{F}(3lε) ≤ N(ε)^{|SF|}, r_F(μ, r, δ) ≥ (1−δ)N(ε_k)^{|F|} for r < ε_k/2";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullShiftInstance {
    pub alphabet: AlphabetSpec,
    pub lambda: f64,
    pub rank: usize,
    /// Side of the box window `F`, which is also the periodic domain.
    pub n: usize,
    pub epsilon: f64,
    pub epsilon_k: f64,
    pub delta: f64,
}

/// Smallest `|g|₁`-ball `S` with `Σ_{g∉S} α_g ≤ bound`.
fn tail_window(weights: &WeightFamily, bound: f64) -> FiniteWindow {
    let rank = weights.rank();
    (0..=weights.radius())
        .map(|r| {
            FiniteWindow::new(
                weights
                    .offsets()
                    .iter()
                    .filter(|(g, _)| g.norm1() as usize <= r)
                    .map(|(g, _)| g.clone()),
            )
            .expect("ball contains the identity")
        })
        .find(|s| weights.mass_outside(s) <= bound)
        .unwrap_or_else(|| FiniteWindow::cube(rank, 1).expect("unit window"))
}

/// Exhaustive check of the two full-shift count bounds and the cylinder claim.
pub fn check_fullshift_bounds(
    inst: &FullShiftInstance,
    config_budget: u128,
    node_budget: u64,
) -> Result<CheckOutcome> {
    let name = "fullshift_bounds";
    if !(inst.delta > 0.0 && inst.delta < 1.0) {
        return Err(Error::Config(format!("δ = {} outside (0, 1)", inst.delta)));
    }
    guarded(name, FULLSHIFT, || {
        let alphabet = Alphabet::new(inst.alphabet.clone())?;
        let h = alphabet.diameter();
        let weights = WeightFamily::new(inst.rank, inst.lambda, None, DEFAULT_TAIL_TOL, h)?;
        let l = weights.total();
        let window = FiniteWindow::cube(inst.rank, inst.n)?;
        let sys = ShiftSystem::make_full_shift(
            alphabet.clone(),
            weights.clone(),
            window.clone(),
            Boundary::Periodic,
        )?;
        let configs = sys.enumerate(config_budget)?;
        let d = sys.bowen_matrix(&configs, &window)?;
        let mut out = CheckOutcome::new(name, FULLSHIFT);

        // separated-count upper bound
        let e = avoid_ties(inst.epsilon, &[alphabet.matrix()]);
        let n_eps = max_separated(alphabet.matrix(), &exact_query(e, node_budget))?.value;
        let s_win = tail_window(&weights, e / (2.0 * h));
        let sf = window_product(&s_win, &window);
        let big = avoid_ties(3.0 * l * e, &[&d]);
        let q = CountQuery::exact(big).with_budget(node_budget, BudgetPolicy::Degrade);
        let s_rep = max_separated(&d, &q)?;
        let certified = match s_rep.bound_direction {
            BoundDirection::Exact => s_rep.value,
            _ => s_rep.upper.unwrap_or(configs.len()),
        };
        let log_bound = sf.len() as f64 * (n_eps as f64).ln();
        out.le(
            "separated upper bound",
            (certified as f64).ln(),
            log_bound,
            || json!({"instance": inst, "s": certified, "N": n_eps, "SF": sf.len()}),
        );
        out.detail("N_eps", n_eps as f64);
        out.detail("SF_size", sf.len() as f64);
        out.detail("l", l);
        out.detail("separated_3l_eps", certified as f64);

        // Katok lower bound under the uniform product measure on P_k^F
        let ek = avoid_ties(inst.epsilon_k, &[alphabet.matrix()]);
        let p_k = max_separated(alphabet.matrix(), &exact_query(ek, node_budget))?;
        let in_pk: Vec<bool> = (0..alphabet.len())
            .map(|i| p_k.witness.contains(&i))
            .collect();
        let support: Vec<bool> = configs
            .iter()
            .map(|c| c.0.iter().all(|&u| in_pk[u as usize]))
            .collect();
        let count = support.iter().filter(|&&b| b).count();
        let masses: Vec<f64> = support
            .iter()
            .map(|&b| if b { 1.0 / count as f64 } else { 0.0 })
            .collect();
        let radius = avoid_ties(0.5 * ek * (1.0 - 1e-6), &[&d]);
        let katok =
            katok_spanning(&d, &masses, inst.delta, &exact_query(radius, node_budget))?.value;
        let need = (1.0 - inst.delta) * (p_k.value as f64).powi(window.len() as i32);
        out.le(
            "Katok lower bound",
            need,
            katok as f64,
            || json!({"instance": inst, "katok": katok, "N_k": p_k.value, "radius": radius}),
        );
        out.detail("N_eps_k", p_k.value as f64);
        out.detail("katok", katok as f64);

        // cylinder claim: support points inside one small ball agree on F
        let mut worst = 0usize;
        for qi in 0..configs.len() {
            let inside: Vec<usize> = (0..configs.len())
                .filter(|&x| support[x] && d.get(qi, x) <= radius)
                .collect();
            let distinct = inside
                .iter()
                .map(|&x| &configs[x].0)
                .collect::<std::collections::HashSet<_>>()
                .len();
            worst = worst.max(distinct);
            if distinct > 1 {
                out.le(
                    "cylinder claim",
                    distinct as f64,
                    1.0,
                    || json!({"instance": inst, "center": configs[qi].0, "members": inside}),
                );
                break;
            }
        }
        out.detail("max_cylinders_per_ball", worst as f64);
        Ok(out)
    })
}

// ---------------------------------------------------------------------------
// Katok below spanning

pub const KATOK_BELOW_SPANNING: &str = "r_F(μ, ε, δ) ≤ r_F(ε)";

pub fn check_katok_below_spanning(
    d: &DistanceMatrix,
    masses: &[f64],
    delta: f64,
    eps: f64,
    node_budget: u64,
) -> Result<CheckOutcome> {
    let name = "katok_below_spanning";
    guarded(name, KATOK_BELOW_SPANNING, || {
        let e = avoid_ties(eps, &[d]);
        let q = exact_query(e, node_budget);
        let k = katok_spanning(d, masses, delta, &q)?.value;
        let r = min_spanning(d, &q)?.value;
        let mut out = CheckOutcome::new(name, KATOK_BELOW_SPANNING);
        out.le(
            "katok ≤ r",
            k as f64,
            r as f64,
            || json!({"matrix": d, "masses": masses, "delta": delta, "epsilon": e}),
        );
        Ok(out)
    })
}

// ---------------------------------------------------------------------------
// soft checks

pub const MEAN_HAUSDORFF_PRODUCT: &str = "dim_H(M×L, ε) ≥ dim_H(M, 6ε) + dim_H(L, 6ε)";

/// Superadditivity of scale-limited Hausdorff dimension over a product, with the
/// factors read at the coarser scale `6ε`. Never fails.
pub fn check_mean_hausdorff_product(
    m: &DistanceMatrix,
    l: &DistanceMatrix,
    eps: f64,
    floor: f64,
) -> Result<CheckOutcome> {
    if !(floor > 0.0) {
        return Err(Error::Precondition(
            "the product check needs a positive cell floor".into(),
        ));
    }
    let p = m.product(l);
    let mode = |d: &DistanceMatrix| {
        if d.len() <= EXACT_POINT_LIMIT {
            CountMode::Exact
        } else {
            CountMode::Greedy
        }
    };
    let coarse = (PRODUCT_SCALE_OFFSET * eps).min(1.0);
    let dp = dim_at_scale(&p, eps, 1.0, floor, mode(&p))?;
    let dm = dim_at_scale(m, coarse, 1.0, floor, mode(m))?;
    let dl = dim_at_scale(l, coarse, 1.0, floor, mode(l))?;
    let margin = dp.value - (dm.value + dl.value);
    let mut out = CheckOutcome::new("mean_hausdorff_product", MEAN_HAUSDORFF_PRODUCT);
    out.margin = margin;
    out.status = if margin >= -SOFT_TOL {
        CheckStatus::SoftPass
    } else {
        CheckStatus::SoftDeviation
    };
    out.detail("product", dp.value);
    out.detail("first", dm.value);
    out.detail("second", dl.value);
    Ok(out)
}

pub const EXPONENT_SENSITIVITY: &str = "dim_B(d^a) ≈ dim_B(d)/a under a ↦ a ± h";

/// Perturbs `a` in `power(a)` on a line lattice and compares the Minkowski slope
/// shift with the predicted `1/a` sensitivity. Never fails.
pub fn probe_exponent_sensitivity(a: f64, h: f64, node_budget: u64) -> Result<CheckOutcome> {
    let lattice: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
    let base = DistanceMatrix::from_line(&lattice);
    let eps: Vec<f64> = [0.5f64, 0.35, 0.25, 0.18, 0.125, 0.09, 0.0625].to_vec();
    let slope = |a: f64| -> Result<f64> {
        let grid: Vec<f64> = eps.iter().map(|e| e.powf(a)).collect();
        Ok(
            minkowski_dim_estimate(&base.map(|v| v.powf(a)), &grid, node_budget)?
                .fit
                .slope,
        )
    };
    let s0 = slope(a)?;
    let (lo, hi) = (slope(a - h)?, slope(a + h)?);
    // d(1/a)/da = −1/a², so a slope x·(1/a) moves by −x/a² per unit a
    let predicted = -s0 / a;
    let observed = (hi - lo) / (2.0 * h);
    let rel = (observed - predicted).abs() / predicted.abs();
    let mut out = CheckOutcome::new("exponent_sensitivity", EXPONENT_SENSITIVITY);
    out.margin = 0.05 - rel;
    out.status = if rel <= 0.05 {
        CheckStatus::SoftPass
    } else {
        CheckStatus::SoftDeviation
    };
    out.detail("slope", s0);
    out.detail("observed_derivative", observed);
    out.detail("predicted_derivative", predicted);
    Ok(out)
}

// ---------------------------------------------------------------------------
// random instances and the bundled suite

/// A random finite system with `2..=max_points` points.
pub fn random_finite_system(rng: &mut ChaCha8Rng, max_points: usize) -> FiniteSystem {
    let n = rng.gen_range(2..=max_points.max(2));
    FiniteSystem::random(n, rng)
}

/// A random finite system whose distances lie in `[lo, hi]`.
pub fn random_finite_system_in(
    rng: &mut ChaCha8Rng,
    max_points: usize,
    lo: f64,
    hi: f64,
) -> FiniteSystem {
    use rand::seq::SliceRandom;
    let n = rng.gen_range(2..=max_points.max(2));
    let metric = random_metric(n, lo, hi, rng);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    FiniteSystem::new(metric, vec![perm]).expect("valid random system")
}

/// Sizes and counts for [`desk_suite`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteOptions {
    pub sandwich_instances: usize,
    pub product_instances: usize,
    pub transform_instances: usize,
    pub hybrid_instances: usize,
    pub katok_instances: usize,
    pub hausdorff_product_instances: usize,
    pub node_budget: u64,
    pub config_budget: u128,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            sandwich_instances: 200,
            product_instances: 50,
            transform_instances: 30,
            hybrid_instances: 30,
            katok_instances: 50,
            hausdorff_product_instances: 20,
            node_budget: DEFAULT_NODE_BUDGET,
            config_budget: 1_000,
        }
    }
}

fn window(n: usize) -> FiniteWindow {
    FiniteWindow::cube(1, n).expect("positive side")
}

pub fn sandwich_sweep(seed: u64, count: usize, budget: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outs = Vec::with_capacity(count);
    for _ in 0..count {
        let sys = random_finite_system(&mut rng, 12);
        let w = window(rng.gen_range(1..=3));
        let eps = rng.gen_range(0.05..0.8);
        outs.push(check_sandwich(
            &sys.bowen_matrix(&sys.points(), &w)?,
            eps,
            budget,
        )?);
    }
    Ok(aggregate("sandwich", outs))
}

pub fn product_sweep(seed: u64, count: usize, budget: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outs = Vec::with_capacity(count);
    for _ in 0..count {
        let a = random_finite_system(&mut rng, 8);
        let b = random_finite_system(&mut rng, 8);
        let w = window(rng.gen_range(1..=3));
        let eps = rng.gen_range(0.05..0.8);
        outs.push(check_product_counts(
            &a,
            &a.points(),
            &b,
            &b.points(),
            &w,
            eps,
            budget,
        )?);
    }
    Ok(aggregate("product_counts", outs))
}

pub fn transform_sweep(
    seed: u64,
    t: &MetricTransform,
    count: usize,
    budget: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outs = Vec::with_capacity(count);
    for _ in 0..count {
        let sys = random_finite_system(&mut rng, 10);
        let w = window(rng.gen_range(1..=3));
        let eps = rng.gen_range(0.05..0.8);
        outs.push(check_transform_relations(&sys, t, &w, eps, budget)?);
    }
    Ok(aggregate(
        &format!("transform_relations[{}]", t.label()),
        outs,
    ))
}

pub fn hybrid_sweep(
    seed: u64,
    alpha: f64,
    eps: f64,
    count: usize,
    budget: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outs = Vec::with_capacity(count);
    let etas = [0.8 * eps, 0.5 * eps, 0.25 * eps];
    for _ in 0..count {
        let sys = random_finite_system_in(&mut rng, 10, 0.1 * eps, (3.0 * eps).min(0.95));
        let w = window(rng.gen_range(1..=3));
        outs.push(check_hybrid_metric(&sys, alpha, eps, &w, &etas, budget)?);
    }
    Ok(aggregate(
        &format!("hybrid_metric[α={alpha},ε={eps}]"),
        outs,
    ))
}

pub fn katok_sweep(seed: u64, count: usize, budget: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outs = Vec::with_capacity(count);
    for _ in 0..count {
        let sys = random_finite_system(&mut rng, 10);
        let w = window(rng.gen_range(1..=3));
        let raw: Vec<f64> = (0..sys.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let masses: Vec<f64> = raw.iter().map(|m| m / total).collect();
        let delta = rng.gen_range(0.05..0.6);
        let eps = rng.gen_range(0.05..0.8);
        outs.push(check_katok_below_spanning(
            &sys.bowen_matrix(&sys.points(), &w)?,
            &masses,
            delta,
            eps,
            budget,
        )?);
    }
    Ok(aggregate("katok_below_spanning", outs))
}

/// Exhaustive full-shift instances with at most 5 symbols and windows of at most 4 elements.
pub fn fullshift_instances() -> Vec<FullShiftInstance> {
    let three = AlphabetSpec::Matrix {
        matrix: vec![
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
            vec![0.5, 0.5, 0.0],
        ],
    };
    let quarter = AlphabetSpec::UnitInterval { step: 0.25 };
    let half = AlphabetSpec::UnitInterval { step: 0.5 };
    let inst = |alphabet: &AlphabetSpec, rank, n, epsilon, epsilon_k, delta| FullShiftInstance {
        alphabet: alphabet.clone(),
        lambda: 0.5,
        rank,
        n,
        epsilon,
        epsilon_k,
        delta,
    };
    vec![
        inst(&three, 1, 1, 0.1, 0.4, 0.3),
        inst(&quarter, 1, 2, 0.1, 0.3, 0.3),
        inst(&quarter, 1, 2, 0.3, 0.2, 0.5),
        inst(&quarter, 1, 3, 0.05, 0.3, 0.5),
        inst(&half, 1, 4, 0.1, 0.3, 0.2),
        inst(&half, 2, 2, 0.1, 0.3, 0.5),
        inst(&quarter, 1, 4, 0.2, 0.6, 0.5),
    ]
}

pub fn fullshift_sweep(config_budget: u128, node_budget: u64) -> Result<CheckOutcome> {
    let outs = fullshift_instances()
        .iter()
        .map(|i| check_fullshift_bounds(i, config_budget, node_budget))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate("fullshift_bounds", outs))
}

pub fn hausdorff_product_sweep(seed: u64, count: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outs = Vec::with_capacity(count + 1);
    // lattice × lattice in the max metric
    let grid = DistanceMatrix::from_line(&[0.0, 0.25, 0.5, 0.75]);
    outs.push(check_mean_hausdorff_product(&grid, &grid, 0.1, 0.05)?);
    for _ in 0..count {
        let a = random_metric(rng.gen_range(2..=3), 0.05, 1.0, &mut rng);
        let b = random_metric(rng.gen_range(2..=4), 0.05, 1.0, &mut rng);
        let eps = rng.gen_range(0.02..0.16);
        outs.push(check_mean_hausdorff_product(&a, &b, eps, 0.01)?);
    }
    Ok(aggregate("mean_hausdorff_product", outs))
}

/// Every hard and soft check on seeded random instances, in a fixed order.
pub fn desk_suite(seed: u64, opts: &SuiteOptions) -> Result<Vec<CheckOutcome>> {
    let b = opts.node_budget;
    let mut rows = vec![
        sandwich_sweep(seed, opts.sandwich_instances, b)?,
        product_sweep(seed ^ 1, opts.product_instances, b)?,
    ];
    for (k, t) in [
        MetricTransform::Power { a: 0.3 },
        MetricTransform::Power { a: 0.5 },
        MetricTransform::Power { a: 0.9 },
        MetricTransform::LogPower { a: 0.4 },
    ]
    .iter()
    .enumerate()
    {
        rows.push(transform_sweep(
            seed ^ (2 + k as u64),
            t,
            opts.transform_instances,
            b,
        )?);
    }
    let mut k = 10;
    for alpha in [0.3, 0.5, 0.8] {
        for eps in [0.05, 0.1, 0.2] {
            rows.push(hybrid_sweep(
                seed ^ k,
                alpha,
                eps,
                opts.hybrid_instances,
                b,
            )?);
            k += 1;
        }
    }
    rows.push(fullshift_sweep(opts.config_budget, b)?);
    rows.push(katok_sweep(seed ^ 30, opts.katok_instances, b)?);
    rows.push(hausdorff_product_sweep(
        seed ^ 31,
        opts.hausdorff_product_instances,
    )?);
    rows.push(probe_exponent_sensitivity(0.5, 1e-3, b)?);
    Ok(rows)
}
