//! Scenario configuration: the TOML surface syntax and its serde model.
//!
//! The full schema is documented in `docs/config.md` next to this crate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dsl_version: u32,
    pub dimension: usize,
    #[serde(default = "default_spacetime_dimension")]
    pub spacetime_dimension: usize,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub hamiltonian: Vec<TermConfig>,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub paths: Vec<PathConfig>,
    #[serde(default)]
    pub surfaces: Vec<SurfaceConfig>,
    pub initial_state: Option<StateConfig>,
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
    #[serde(default)]
    pub measurements: Vec<MeasurementConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_spacetime_dimension() -> usize {
    4
}

fn default_hbar() -> f64 {
    1.0
}

fn default_mode() -> String {
    "geometric".into()
}

/// Complex matrix as separate real and imaginary row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub re: Vec<Vec<f64>>,
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BasisConfig {
    #[default]
    GellMann,
    Custom {
        matrices: Vec<MatrixConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub expr: String,
    pub basis: usize,
    #[serde(default)]
    pub direction: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricConfig {
    #[default]
    Identity,
    Diagonal {
        values: Vec<f64>,
    },
    Matrix {
        re: Vec<Vec<f64>>,
        im: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_step() -> f64 {
    bundle_qm::SolverSettings::default().step
}

fn default_tol() -> f64 {
    bundle_qm::SolverSettings::default().tol
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step: default_step(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathShape {
    Line {
        from: Vec<f64>,
        to: Vec<f64>,
        domain: [f64; 2],
    },
    Circle {
        center: Vec<f64>,
        radius: f64,
        plane: [usize; 2],
        domain: [f64; 2],
    },
    Rest {
        spatial: Vec<f64>,
        domain: [f64; 2],
    },
    Sampled {
        samples: Vec<Vec<f64>>,
        domain: [f64; 2],
    },
    /// `of ∘ τ` with `τ(σ) = a + (b − a)((σ − c)/(d − c))^exponent` onto the
    /// domain `[a, b]` of `of`, for `σ ∈ domain = [c, d]`.
    Reparametrized {
        of: String,
        exponent: f64,
        domain: [f64; 2],
    },
    Restricted {
        of: String,
        domain: [f64; 2],
    },
    Concatenated {
        legs: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub name: String,
    #[serde(flatten)]
    pub shape: PathShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub name: String,
    /// Coordinate plane `(i, j)`: `η(s,t) = origin + s e_i + t e_j`.
    pub plane: [usize; 2],
    pub origin: Option<Vec<f64>>,
    pub s_domain: [f64; 2],
    pub t_domain: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub re: Vec<f64>,
    pub im: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableTerm {
    pub expr: String,
    pub basis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ObservableSource {
    /// A single basis element.
    Basis { basis: usize },
    Matrix {
        re: Vec<Vec<f64>>,
        im: Option<Vec<Vec<f64>>>,
    },
    /// `Σ c_k(x) B_k` with point-dependent real coefficients.
    Terms { terms: Vec<ObservableTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableConfig {
    pub name: String,
    #[serde(flatten)]
    pub source: ObservableSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub name: String,
    pub op: String,
    pub tolerance: Option<f64>,
    #[serde(flatten)]
    pub params: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_report")]
    pub report: String,
}

fn default_dir() -> String {
    "out".into()
}

fn default_report() -> String {
    "report.json".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            report: default_report(),
        }
    }
}

/// Parse the TOML text of a scenario. Structural validation only; see
/// [`crate::scenario::build`] for semantic checks.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))
}
