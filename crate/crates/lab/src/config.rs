//! Experiment configuration: a single JSON document.
//!
//! Parsing reports the failing key path and line. The canonical form is the
//! parsed document with every default filled in, serialised with a fixed key
//! order and shortest round-trip floats; its SHA-256 is the config hash.

use std::path::Path;

use maxdisc_core::grid::{classify_grid, GridError, GridRule, GridSpec};
use maxdisc_core::model::{ComponentParams, ModelError, VectorCorrelationModel};
use maxdisc_core::quadrature::{Integrator, DEFAULT_DRAWS, DEFAULT_NODES};
use maxdisc_core::stats::LatticePoint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::maxima::ContinuousMax;
use crate::pickands::{Estimator, DEFAULT_LAMBDAS, DEFAULT_REPS};
use crate::sampler::SamplerChoice;

/// Fewest replications an experiment accepts.
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error at `{key}` (line {line}, column {column}): {message}")]
    Parse { key: String, line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub alpha: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub r_diag: f64,
}

/// Grid rule. `power` is `delta(T) = coefficient (2 ln T)^exponent`; it and
/// `constant` are classified by probing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    Sparse,
    Pickands { d: f64 },
    Dense,
    Constant { delta: f64 },
    Power { coefficient: f64, exponent: f64 },
}

impl GridConfig {
    pub fn rule(&self) -> GridRule {
        match *self {
            GridConfig::Sparse => GridRule::SparseDefault,
            GridConfig::Pickands { d } => GridRule::Pickands { d },
            GridConfig::Dense => GridRule::DenseDefault,
            GridConfig::Constant { delta } => GridRule::explicit(move |_| delta),
            GridConfig::Power { coefficient, exponent } => {
                GridRule::explicit(move |t: f64| coefficient * (2.0 * t.ln()).powf(exponent))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeMode {
    /// Every combination of axis values over all `2p` coordinates.
    #[default]
    Product,
    /// `x_k = a` and `y_k = b` for every component, over pairs `(a, b)`.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(default = "default_axis")]
    pub axis: Vec<f64>,
    #[serde(default)]
    pub mode: LatticeMode,
    /// Explicit points; replaces the axis lattice when present.
    #[serde(default)]
    pub points: Option<Vec<PointConfig>>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { axis: default_axis(), mode: LatticeMode::Product, points: None }
    }
}

impl LatticeConfig {
    pub fn points(&self, p: usize) -> Result<Vec<LatticePoint>, ConfigError> {
        if let Some(points) = &self.points {
            return points
                .iter()
                .map(|pt| {
                    if pt.x.len() != p || pt.y.len() != p {
                        Err(ConfigError::Invalid(format!("lattice point needs {p} x and {p} y coordinates")))
                    } else {
                        Ok(LatticePoint { x: pt.x.clone(), y: pt.y.clone() })
                    }
                })
                .collect();
        }
        let axis = &self.axis;
        match self.mode {
            LatticeMode::Shared => Ok(axis
                .iter()
                .flat_map(|&a| axis.iter().map(move |&b| LatticePoint { x: vec![a; p], y: vec![b; p] }))
                .collect()),
            LatticeMode::Product => {
                let dims = 2 * p;
                let total = axis.len().checked_pow(dims as u32).filter(|&t| t <= 1 << 16).ok_or_else(|| {
                    ConfigError::Invalid(format!("product lattice over {dims} coordinates is too large"))
                })?;
                Ok((0..total)
                    .map(|mut idx| {
                        // first coordinate varies slowest
                        let mut coords = vec![0.0; dims];
                        for c in coords.iter_mut().rev() {
                            *c = axis[idx % axis.len()];
                            idx /= axis.len();
                        }
                        LatticePoint { x: coords[..p].to_vec(), y: coords[p..].to_vec() }
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    /// `H_alpha` per component; closed forms are used for `alpha` in {1, 2}
    /// and estimates otherwise when absent.
    #[serde(default)]
    pub h_alpha: Option<Vec<f64>>,
    /// `H_(d,alpha)` per component (Pickands grids); estimated when absent.
    #[serde(default)]
    pub h_d_alpha: Option<Vec<f64>>,
    #[serde(default = "default_pickands_reps")]
    pub reps: usize,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Defaults to a seed derived from the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mesh: Option<f64>,
    #[serde(default)]
    pub estimator: Estimator,
    /// Joint-constant table lattice `[lo, hi]` at `pitch`, on both axes.
    #[serde(default = "default_table_range")]
    pub table_range: [f64; 3],
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            h_alpha: None,
            h_d_alpha: None,
            reps: default_pickands_reps(),
            lambdas: default_lambdas(),
            seed: None,
            mesh: None,
            estimator: Estimator::Tilted,
            table_range: default_table_range(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { nodes: DEFAULT_NODES, draws: DEFAULT_DRAWS }
    }
}

impl IntegratorConfig {
    pub fn integrator(&self) -> Integrator {
        Integrator::Auto { nodes: self.nodes, draws: self.draws }
    }
}

/// Deliberately wrong normalisation, for checking that verdicts can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringFault {
    #[default]
    None,
    /// `b_T` replaced by `a_T` wherever it is used.
    BtIsAt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub components: Vec<ComponentConfig>,
    /// Lower triangle of `(r_kl)` including the diagonal, row by row:
    /// `r_00, r_10, r_11, r_20, ...`. Absent means diagonal from the
    /// components and zero cross terms.
    #[serde(default)]
    pub r_cross: Option<Vec<f64>>,
    #[serde(default)]
    pub allow_singular_latent: bool,
    /// Absent means the default rule of the regime being verified.
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default = "default_log_horizon")]
    pub log_horizon: f64,
    /// `ln T` ladder for convergence sweeps.
    #[serde(default = "default_ladder")]
    pub log_horizons: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lattice: LatticeConfig,
    /// Mesh step as a fraction of `min_k (2 ln T)^{-1/alpha_k} C_k^{-1/alpha_k}`.
    #[serde(default = "default_mesh_factor")]
    pub mesh_factor: f64,
    #[serde(default = "default_max_mesh_points")]
    pub max_mesh_points: usize,
    #[serde(default)]
    pub continuous_max: ContinuousMax,
    #[serde(default)]
    pub sampler: SamplerChoice,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Finite-horizon bias allowance added to every tolerance.
    #[serde(default = "default_allowance")]
    pub allowance: f64,
    /// Binomial standard errors allowed per lattice point.
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
    #[serde(default)]
    pub centering_fault: CenteringFault,
}

fn one() -> f64 {
    1.0
}
fn default_axis() -> Vec<f64> {
    vec![-1.0, 0.0, 1.0, 2.0]
}
fn default_pickands_reps() -> usize {
    DEFAULT_REPS
}
fn default_lambdas() -> Vec<f64> {
    DEFAULT_LAMBDAS.to_vec()
}
fn default_table_range() -> [f64; 3] {
    [-3.0, 5.0, 0.25]
}
fn default_nodes() -> usize {
    DEFAULT_NODES
}
fn default_draws() -> usize {
    DEFAULT_DRAWS
}
fn default_log_horizon() -> f64 {
    8.0
}
fn default_ladder() -> Vec<f64> {
    vec![6.0, 8.0, 10.0]
}
fn default_replications() -> usize {
    4000
}
fn default_mesh_factor() -> f64 {
    maxdisc_core::mesh::DEFAULT_MESH_FACTOR
}
fn default_max_mesh_points() -> usize {
    1 << 25
}
fn default_allowance() -> f64 {
    0.04
}
fn default_sigmas() -> f64 {
    4.0
}

impl ExperimentConfig {
    /// Minimal config for the given components; everything else default.
    pub fn new(components: Vec<ComponentConfig>) -> Self {
        serde_json::from_value(serde_json::json!({ "components": components })).expect("defaults are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|err| {
            let key = err.path().to_string();
            let inner = err.into_inner();
            ConfigError::Parse { key, line: inner.line(), column: inner.column(), message: inner.to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn p(&self) -> usize {
        self.components.len()
    }

    /// Checks that do not need the model or the grid.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replications < MIN_REPLICATIONS {
            return Err(ConfigError::Invalid(format!(
                "replications = {} is below the minimum {MIN_REPLICATIONS}",
                self.replications
            )));
        }
        if self.lattice.points.as_ref().is_some_and(|p| p.is_empty()) || self.lattice.axis.is_empty() {
            return Err(ConfigError::Invalid("evaluation lattice is empty".into()));
        }
        for &l in std::iter::once(&self.log_horizon).chain(&self.log_horizons) {
            if !(l > maxdisc_core::model::MIN_LOG_HORIZON) {
                return Err(ConfigError::Invalid(format!("ln T = {l} must exceed 2")));
            }
        }
        if !(self.mesh_factor > 0.0 && self.mesh_factor <= 1.0) {
            return Err(ConfigError::Invalid(format!("mesh_factor = {} must be in (0, 1]", self.mesh_factor)));
        }
        if !(self.allowance >= 0.0 && self.sigmas >= 0.0) {
            return Err(ConfigError::Invalid("allowance and sigmas must be non-negative".into()));
        }
        Ok(())
    }

    /// Full row-major `p x p` long-range matrix.
    pub fn r_matrix(&self) -> Result<Vec<f64>, ConfigError> {
        let p = self.p();
        let mut r = vec![0.0; p * p];
        match &self.r_cross {
            None => {
                for (k, c) in self.components.iter().enumerate() {
                    r[k * p + k] = c.r_diag;
                }
            }
            Some(tri) => {
                let expected = p * (p + 1) / 2;
                if tri.len() != expected {
                    return Err(ConfigError::Model(ModelError::DimensionMismatch { expected, found: tri.len() }));
                }
                let mut it = tri.iter();
                for k in 0..p {
                    for l in 0..=k {
                        let v = *it.next().expect("length checked");
                        r[k * p + l] = v;
                        r[l * p + k] = v;
                    }
                }
            }
        }
        Ok(r)
    }

    pub fn model(&self) -> Result<VectorCorrelationModel, ConfigError> {
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(k, c)| {
                ComponentParams::new(c.alpha, c.c, c.r_diag).map_err(|e| match e {
                    ModelError::AlphaOutOfRange { alpha, .. } => ModelError::AlphaOutOfRange { component: k, alpha },
                    ModelError::InvalidScale { c, .. } => ModelError::InvalidScale { component: k, c },
                    ModelError::NegativeDiagonal { value, .. } => ModelError::NegativeDiagonal { component: k, value },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorCorrelationModel::build(components, &self.r_matrix()?, self.allow_singular_latent)?)
    }

    /// Grid classification per component.
    pub fn grids(&self, default: &GridConfig) -> Result<Vec<GridSpec>, ConfigError> {
        let grid = self.grid.as_ref().unwrap_or(default);
        self.components.iter().map(|c| Ok(classify_grid(grid.rule(), c.alpha)?)).collect()
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serialises")
    }

    /// Hex SHA-256 of the canonical bytes.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }
}
