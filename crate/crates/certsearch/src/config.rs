//! TOML experiment files.
//!
//! ```toml
//! [model]
//! model = "xx"        # "xx" | "zz_graph" | "custom"
//! n = 6
//! J = 1.0             # scalar or one value per bond
//! B = 0.5             # scalar or one value per site
//!
//! [search]
//! budget = "half"     # "half" | "all" | integer
//! algorithm = "rl"    # "rl" | "mc" | "bfs" | "exhaustive"
//! seeds = [0, 1, 2]
//! ```

use std::path::{Path, PathBuf};

use certsearch_core::constraints::{BudgetPreset, ConstraintSet, Geometry};
use certsearch_core::hamiltonian::{build_xx, zz_graph, LocalHamiltonian};
use certsearch_core::pauli::PauliString;
use certsearch_core::relaxation::{CompatMode, RelaxationOptions};
use certsearch_core::sdp::Tolerances;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Xx,
    ZzGraph,
    Custom,
}

/// A number or one number per site/bond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSite {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerSite {
    pub fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            PerSite::Scalar(v) => vec![*v; n],
            PerSite::List(v) => v.clone(),
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self {
            PerSite::Scalar(v) => Some(*v),
            PerSite::List(_) => None,
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            PerSite::Scalar(v) => std::slice::from_ref(v),
            PerSite::List(v) => v,
        }
    }
}

impl Default for PerSite {
    fn default() -> Self {
        PerSite::Scalar(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    /// Compact label such as `"X0 X1"`.
    pub pauli: String,
    #[serde(default = "one")]
    pub coefficient: f64,
    /// Terms sharing a group id are summed into one local term.
    #[serde(default)]
    pub group: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub model: ModelKind,
    pub n: usize,
    #[serde(default = "yes")]
    pub periodic: bool,
    #[serde(rename = "J", default = "unit")]
    pub j: PerSite,
    #[serde(rename = "B", default)]
    pub b: PerSite,
    #[serde(default)]
    pub edges: Vec<(usize, usize)>,
    #[serde(default = "one")]
    pub coupling: f64,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

impl HamiltonianConfig {
    pub fn xx(n: usize, j: f64, b: f64) -> Self {
        HamiltonianConfig {
            model: ModelKind::Xx,
            n,
            periodic: true,
            j: PerSite::Scalar(j),
            b: PerSite::Scalar(b),
            edges: Vec::new(),
            coupling: 1.0,
            terms: Vec::new(),
        }
    }

    pub fn build(&self) -> Result<LocalHamiltonian> {
        let h = match self.model {
            ModelKind::Xx => build_xx(self.n, &self.j.expand(self.n), &self.b.expand(self.n), self.periodic)?,
            ModelKind::ZzGraph => zz_graph(self.n, &self.edges, self.coupling)?,
            ModelKind::Custom => {
                if self.terms.is_empty() {
                    return Err(AppError::Validation("custom model has no terms".into()));
                }
                let mut grouped: Vec<(Option<usize>, Vec<PauliString>)> = Vec::new();
                for t in &self.terms {
                    let s = PauliString::parse(&t.pauli, t.coefficient)?;
                    match t.group.and_then(|g| grouped.iter_mut().find(|(k, _)| *k == Some(g))) {
                        Some((_, v)) => v.push(s),
                        None => grouped.push((t.group, vec![s])),
                    }
                }
                let terms = grouped
                    .into_iter()
                    .map(|(_, v)| certsearch_core::hamiltonian::LocalTerm::new(v))
                    .collect::<Result<Vec<_>, _>>()?;
                LocalHamiltonian::new(self.n, terms)?
            }
        };
        Ok(h)
    }

    /// Field over coupling for homogeneous XX models.
    pub fn b_over_j(&self) -> Option<f64> {
        let (j, b) = (self.j.scalar()?, self.b.scalar()?);
        (self.model == ModelKind::Xx && j != 0.0).then(|| b / j)
    }

    fn validate(&self) -> Result<()> {
        if self.j.values().iter().chain(self.b.values()).any(|v| !v.is_finite()) || !self.coupling.is_finite() {
            return Err(AppError::Validation("model parameters must be finite".into()));
        }
        Ok(())
    }
}

/// `"half"`, `"all"` or an explicit parameter count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetSpec {
    Named(String),
    Explicit(u64),
}

impl BudgetSpec {
    pub fn preset(&self) -> Result<BudgetPreset> {
        match self {
            BudgetSpec::Explicit(b) => Ok(BudgetPreset::Explicit(*b)),
            BudgetSpec::Named(s) => match s.as_str() {
                "half" | "half_three_body" => Ok(BudgetPreset::HalfThreeBody),
                "all" | "all_three_body" => Ok(BudgetPreset::AllThreeBody),
                other => Err(AppError::Validation(format!("unknown budget `{other}`"))),
            },
        }
    }

    /// Whether episode length and MC temperature use the large-budget values.
    pub fn high(&self) -> bool {
        matches!(self.preset(), Ok(BudgetPreset::AllThreeBody))
    }
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec::Named("half".into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rl,
    Mc,
    Bfs,
    Exhaustive,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Rl => "rl",
            Algorithm::Mc => "mc",
            Algorithm::Bfs => "bfs",
            Algorithm::Exhaustive => "exhaustive",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryName {
    Chain,
    Ring,
    AllSubsets,
}

impl From<GeometryName> for Geometry {
    fn from(g: GeometryName) -> Self {
        match g {
            GeometryName::Chain => Geometry::Chain,
            GeometryName::Ring => Geometry::Ring,
            GeometryName::AllSubsets => Geometry::AllSubsets,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default = "ring")]
    pub geometry: GeometryName,
    #[serde(default = "three")]
    pub max_body: usize,
    #[serde(default = "rl")]
    pub algorithm: Algorithm,
    #[serde(default = "zero_seed")]
    pub seeds: Vec<u64>,
    #[serde(default = "state_cap")]
    pub max_states: usize,
    #[serde(default = "episodes")]
    pub episodes: usize,
    pub episode_length: Option<usize>,
    pub temperature: Option<f64>,
    /// Reward exponent.
    #[serde(default = "two")]
    pub d: f64,
    pub lr: Option<f64>,
    pub discount: Option<f64>,
    /// Exploration decay; defaults by system size.
    pub delta: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompatName {
    Pairwise,
    AllSubsets,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationConfig {
    #[serde(default)]
    pub ppt: bool,
    #[serde(default = "pairwise")]
    pub compat: CompatName,
    #[serde(default = "feas")]
    pub feas: f64,
    #[serde(default = "gap")]
    pub gap: f64,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl RelaxationConfig {
    pub fn options(&self) -> Result<RelaxationOptions> {
        let opts = RelaxationOptions {
            compat_mode: match self.compat {
                CompatName::Pairwise => CompatMode::PairwiseIntersections,
                CompatName::AllSubsets => CompatMode::AllSubsetIntersections,
            },
            ppt: self.ppt,
            tol: Tolerances {
                feas: self.feas,
                gap: self.gap,
            },
            max_iter: self.max_iter,
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Field-to-coupling ratios.
    pub grid: Vec<f64>,
    /// Sizes at which the canonical patterns are also evaluated, without search.
    #[serde(default)]
    pub pattern_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub sizes: Vec<usize>,
    #[serde(default = "all_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "threshold")]
    pub threshold: f64,
    /// Largest reachable space enumerated for the reference ledger.
    #[serde(default = "enumeration_cap")]
    pub enumeration_cap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    #[serde(default = "five")]
    pub source: f64,
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Weights file loaded as the starting network by `optimize`.
    pub init_weights: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: HamiltonianConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub relaxation: RelaxationConfig,
    /// Constraint set for `solve`, e.g. `"[[0,1,2],[2,3]]"`.
    pub constraints: Option<String>,
    pub scan: Option<ScanConfig>,
    pub benchmark: Option<BenchmarkConfig>,
    pub transfer: Option<TransferConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn new(model: HamiltonianConfig) -> Self {
        ExperimentConfig {
            model,
            search: SearchConfig::default(),
            relaxation: RelaxationConfig::default(),
            constraints: None,
            scan: None,
            benchmark: None,
            transfer: None,
            output: OutputConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    /// Parses and validates; errors carry the 1-based line of the offending span.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| AppError::Config {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|e| match e {
            AppError::Validation(message) => AppError::Config {
                path: path.to_path_buf(),
                line: line_of_key(text, &message),
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let s = &self.search;
        if s.seeds.is_empty() {
            return Err(AppError::Validation("seeds must not be empty".into()));
        }
        s.budget.preset()?;
        if s.max_states == 0 || s.episodes == 0 {
            return Err(AppError::Validation("max_states and episodes must be positive".into()));
        }
        if !(s.d.is_finite() && s.d > 0.0) {
            return Err(AppError::Validation("d must be positive".into()));
        }
        if s.temperature.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
            return Err(AppError::Validation("temperature must be positive".into()));
        }
        if let Some(scan) = &self.scan {
            if scan.grid.is_empty() || scan.grid.iter().any(|v| !v.is_finite()) {
                return Err(AppError::Validation("grid values must be finite and nonempty".into()));
            }
        }
        if let Some(t) = &self.transfer {
            if !t.source.is_finite() || t.targets.iter().any(|v| !v.is_finite()) {
                return Err(AppError::Validation("transfer targets must be finite".into()));
            }
        }
        if let Some(b) = &self.benchmark {
            if b.sizes.is_empty() || b.algorithms.contains(&Algorithm::Exhaustive) {
                return Err(AppError::Validation(
                    "benchmark needs sizes and algorithms among rl, mc, bfs".into(),
                ));
            }
        }
        if let Some(c) = &self.constraints {
            ConstraintSet::parse(self.model.n, c)?;
        }
        self.relaxation.options()?;
        Ok(())
    }

    pub fn constraint_set(&self) -> Result<ConstraintSet> {
        match &self.constraints {
            Some(c) => Ok(ConstraintSet::parse(self.model.n, c)?),
            None => Ok(ConstraintSet::minimal(self.model.n)),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Best-effort line for a validation message: the first line defining the key it names.
fn line_of_key(text: &str, message: &str) -> usize {
    let key = message.split_whitespace().next().unwrap_or("");
    text.lines()
        .position(|l| l.trim_start().starts_with(key))
        .map(|i| i + 1)
        .unwrap_or(1)
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn five() -> f64 {
    5.0
}
fn unit() -> PerSite {
    PerSite::Scalar(1.0)
}
fn yes() -> bool {
    true
}
fn ring() -> GeometryName {
    GeometryName::Ring
}
fn three() -> usize {
    3
}
fn rl() -> Algorithm {
    Algorithm::Rl
}
fn zero_seed() -> Vec<u64> {
    vec![0]
}
fn state_cap() -> usize {
    4000
}
fn episodes() -> usize {
    400
}
fn pairwise() -> CompatName {
    CompatName::Pairwise
}
fn feas() -> f64 {
    1e-8
}
fn gap() -> f64 {
    1e-7
}
fn max_iter() -> usize {
    200
}
fn all_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Rl, Algorithm::Mc, Algorithm::Bfs]
}
fn threshold() -> f64 {
    0.95
}
fn enumeration_cap() -> usize {
    50_000
}
