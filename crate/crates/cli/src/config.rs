//! Experiment configuration file.
//!
//! One TOML file per run. Unknown keys are rejected, and every error names the
//! offending key path.

use std::path::Path;

use mdim::estimate::{MeasureChoice, ScaleGrid};
use mdim::metric::geometric_grid;
use mdim::packing::DEFAULT_NODE_BUDGET;
use mdim::systems::{AlphabetSpec, DEFAULT_TAIL_TOL};
use mdim::verify::SuiteOptions;
use mdim::{CountMode, Element, FiniteWindow, FolnerSequence, MetricTransform};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub system: Option<SystemSection>,
    pub folner: Option<FolnerSection>,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub metric: MetricSection,
    #[serde(default)]
    pub hausdorff: HausdorffSection,
    #[serde(default)]
    pub katok: KatokSection,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub output: OutputSection,
    pub product: Option<ProductSection>,
    pub scan: Option<ScanSection>,
    pub minkowski: Option<MinkowskiSection>,
    pub verify: Option<SuiteOptions>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Exact,
    Greedy,
    Sampled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ModeName,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
}

fn default_name() -> String {
    "experiment".into()
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            name: default_name(),
            seed: 0,
            mode: ModeName::Exact,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub offsets: Vec<Vec<i64>>,
    pub symbols: Vec<u16>,
}

/// Full shift, or a subshift when `forbidden` is nonempty.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSection {
    pub alphabet: AlphabetSpec,
    pub lambda: f64,
    #[serde(default)]
    pub radius: Option<usize>,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default)]
    pub forbidden: Vec<PatternSpec>,
}

/// Finite metric space with commuting permutations as the action.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSection {
    pub metric: Vec<Vec<f64>>,
    pub generators: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSection {
    Shift(ShiftSection),
    Finite(FiniteSection),
}

fn default_tail_tol() -> f64 {
    DEFAULT_TAIL_TOL
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    Boxes,
    Explicit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FolnerSection {
    pub shape: ShapeName,
    pub rank: Option<usize>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    /// Explicit windows, each a list of integer vectors.
    pub windows: Option<Vec<Vec<Vec<i64>>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub epsilons: Option<Vec<f64>>,
    pub hi: Option<f64>,
    pub lo: Option<f64>,
    pub count: Option<usize>,
    /// Window indices; defaults to the whole Følner range.
    pub indices: Option<Vec<usize>>,
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
}

fn default_tail() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub transform: Option<MetricTransform>,
    /// Divide by `ρ + 1e−9` before the transform when the diameter bound `ρ ≥ 1`.
    #[serde(default = "yes")]
    pub rescale: bool,
}

impl Default for MetricSection {
    fn default() -> Self {
        Self {
            transform: None,
            rescale: true,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HausdorffSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub floor: f64,
    #[serde(default = "one")]
    pub phi: f64,
    #[serde(default)]
    pub balls: bool,
}

impl Default for HausdorffSection {
    fn default() -> Self {
        Self {
            enabled: false,
            floor: 0.0,
            phi: 1.0,
            balls: false,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KatokSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "uniform")]
    pub measure: MeasureChoice,
}

impl Default for KatokSection {
    fn default() -> Self {
        Self {
            enabled: false,
            delta: default_delta(),
            measure: MeasureChoice::Uniform,
        }
    }
}

fn default_delta() -> f64 {
    0.1
}

fn uniform() -> MeasureChoice {
    MeasureChoice::Uniform
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Branch nodes per exact solve.
    #[serde(default = "default_nodes")]
    pub nodes: u64,
    /// Configurations enumerated per window in exact and greedy modes.
    #[serde(default = "default_configurations")]
    pub configurations: u64,
    /// Sample size per window in sampled mode.
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            nodes: default_nodes(),
            configurations: default_configurations(),
            points: default_points(),
        }
    }
}

fn default_nodes() -> u64 {
    DEFAULT_NODE_BUDGET
}

fn default_configurations() -> u64 {
    4096
}

fn default_points() -> usize {
    2000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn default_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSection {
    pub second: SystemSection,
    /// Sample size per factor in sampled mode; the product has its square.
    #[serde(default = "default_factor_points")]
    pub factor_points: usize,
}

fn default_factor_points() -> usize {
    40
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub transforms: Vec<MetricTransform>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinkowskiSection {
    pub epsilons: Option<Vec<f64>>,
    pub hi: Option<f64>,
    pub lo: Option<f64>,
    pub count: Option<usize>,
}

fn err(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config {
        key: key.into(),
        message: message.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de =
            toml::Deserializer::parse(text).map_err(|e| err("<syntax>", e.to_string().trim()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if let Some(inner) = system_error(text, &path) {
                return inner;
            }
            let key = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            err(&key, e.into_inner().to_string().trim())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn mode(&self) -> CountMode {
        match self.experiment.mode {
            ModeName::Exact => CountMode::Exact,
            ModeName::Greedy => CountMode::Greedy,
            ModeName::Sampled => CountMode::Sampled {
                n: self.budgets.points,
                seed: self.experiment.seed,
            },
        }
    }

    pub fn system(&self) -> Result<&SystemSection, CliError> {
        self.system
            .as_ref()
            .ok_or_else(|| err("system", "missing section"))
    }

    pub fn folner(&self) -> Result<FolnerSequence, CliError> {
        let f = self.folner.as_ref().ok_or_else(|| {
            err(
                "folner",
                "missing section; the Følner sequence must be explicit",
            )
        })?;
        match f.shape {
            ShapeName::Boxes => {
                let rank = f
                    .rank
                    .ok_or_else(|| err("folner.rank", "required for boxes"))?;
                let lo = f
                    .n_min
                    .ok_or_else(|| err("folner.n_min", "required for boxes"))?;
                let hi = f
                    .n_max
                    .ok_or_else(|| err("folner.n_max", "required for boxes"))?;
                FolnerSequence::boxes(rank, lo, hi).map_err(|e| err("folner", e))
            }
            ShapeName::Explicit => {
                let ws = f
                    .windows
                    .as_ref()
                    .ok_or_else(|| err("folner.windows", "required for explicit sequences"))?;
                let windows = ws
                    .iter()
                    .enumerate()
                    .map(|(i, w)| {
                        FiniteWindow::new(w.iter().map(|v| Element::new(v.clone())))
                            .map_err(|e| err(&format!("folner.windows[{i}]"), e))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                FolnerSequence::explicit(windows).map_err(|e| err("folner.windows", e))
            }
        }
    }

    pub fn grid(&self, folner: &FolnerSequence) -> Result<ScaleGrid, CliError> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| err("grid", "missing section"))?;
        let eps = scales("grid", &g.epsilons, g.hi, g.lo, g.count)?;
        let indices = g
            .indices
            .clone()
            .unwrap_or_else(|| folner.indices().collect());
        if let Some(&bad) = indices
            .iter()
            .find(|&&n| n < folner.n_min() || n > folner.n_max())
        {
            return Err(err(
                "grid.indices",
                format!("index {bad} outside the Følner range"),
            ));
        }
        ScaleGrid::new(eps, indices, g.tail_fraction).map_err(|e| err("grid", e))
    }

    pub fn minkowski_scales(&self) -> Result<Vec<f64>, CliError> {
        match &self.minkowski {
            Some(m) => scales("minkowski", &m.epsilons, m.hi, m.lo, m.count),
            None => {
                let g = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| err("minkowski", "missing section"))?;
                scales("grid", &g.epsilons, g.hi, g.lo, g.count)
            }
        }
    }
}

/// Tagged sections lose the inner key path; redo the failing one by its tag.
fn system_error(text: &str, path: &str) -> Option<CliError> {
    if path != "system" && path != "product.second" {
        return None;
    }
    let mut table: toml::Table = text.parse().ok()?;
    for part in path.split('.') {
        table = match table.remove(part)? {
            toml::Value::Table(t) => t,
            _ => return None,
        };
    }
    let kind = table.remove("kind")?;
    let value = toml::Value::Table(table);
    let inner = match kind.as_str()? {
        "shift" => serde_path_to_error::deserialize::<_, ShiftSection>(value).err()?,
        "finite" => serde_path_to_error::deserialize::<_, FiniteSection>(value).err()?,
        _ => return None,
    };
    let sub = inner.path().to_string();
    let key = if sub == "." {
        path.to_string()
    } else {
        format!("{path}.{sub}")
    };
    Some(err(&key, inner.into_inner().to_string().trim()))
}

/// Either an explicit list or a geometric grid from `hi` down to `lo`.
fn scales(
    section: &str,
    eps: &Option<Vec<f64>>,
    hi: Option<f64>,
    lo: Option<f64>,
    count: Option<usize>,
) -> Result<Vec<f64>, CliError> {
    match (eps, hi, lo, count) {
        (Some(e), None, None, None) => Ok(e.clone()),
        (None, Some(hi), Some(lo), Some(count)) => {
            if !(hi > lo && lo > 0.0 && hi < 1.0) || count < 2 {
                return Err(err(section, "need 0 < lo < hi < 1 and count ≥ 2"));
            }
            Ok(geometric_grid(hi, lo, count))
        }
        _ => Err(err(
            &format!("{section}.epsilons"),
            "give either epsilons or all of hi, lo, count",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(text: &str) -> String {
        match ExperimentConfig::from_toml(text).unwrap_err() {
            CliError::Config { key, .. } => key,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_path() {
        assert_eq!(key_of("[grid]\nepsilon = [0.1]\n"), "grid.epsilon");
        assert_eq!(key_of("[budgets]\nnodes = \"many\"\n"), "budgets.nodes");
        assert_eq!(
            key_of("[system]\nkind = \"shift\"\nlambda = 0.5\nalphabet = { kind = \"unit_interval\", step = \"x\" }\n"),
            "system.alphabet"
        );
        assert_eq!(
            key_of("[system]\nkind = \"shift\"\nlambda = \"x\"\nalphabet = { kind = \"unit_interval\", step = 0.5 }\n"),
            "system.lambda"
        );
        assert_eq!(
            key_of(
                "[system]\nkind = \"finite\"\nmetric = [[0.0]]\ngenerators = [[0]]\nlambda = 1\n"
            ),
            "system.lambda"
        );
    }

    #[test]
    fn syntax_error() {
        assert_eq!(key_of("[grid\n"), "<syntax>");
    }

    #[test]
    fn defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.mode(), CountMode::Exact);
        assert_eq!(c.budgets.points, 2000);
        assert!(c.folner().is_err());
    }

    #[test]
    fn geometric_and_explicit_grids() {
        let c = ExperimentConfig::from_toml(
            "[folner]\nshape = \"boxes\"\nrank = 1\nn_min = 1\nn_max = 4\n[grid]\nhi = 0.5\nlo = 0.0625\ncount = 4\n",
        )
        .unwrap();
        let g = c.grid(&c.folner().unwrap()).unwrap();
        assert_eq!(g.indices, vec![1, 2, 3, 4]);
        assert!((g.epsilons[3] - 0.0625).abs() < 1e-15);
        let c = ExperimentConfig::from_toml("[grid]\nepsilons = [0.5]\nhi = 0.4\n").unwrap();
        assert!(c.minkowski_scales().is_err());
    }
}
