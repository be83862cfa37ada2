use thiserror::Error;

use crate::dsl::DslError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("fibre dimension {0} outside supported range 1..=64")]
    InvalidDimension(usize),

    #[error("state anchored at {found:?}, expected {expected:?}")]
    AnchorMismatch { expected: Vec<f64>, found: Vec<f64> },

    #[error("matrix is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("metric is degenerate (smallest singular value {min_singular:e})")]
    Degenerate { min_singular: f64 },

    #[error("metric is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    IndefiniteMetric { min_eigenvalue: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown path generator `{0}`")]
    UnknownGenerator(String),

    #[error("sampled path needs at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),

    #[error("interval [{inner_a}, {inner_b}] not contained in [{outer_a}, {outer_b}]")]
    NotContained {
        inner_a: f64,
        inner_b: f64,
        outer_a: f64,
        outer_b: f64,
    },

    #[error("parameter {value} outside domain [{a}, {b}]")]
    OutOfDomain { value: f64, a: f64, b: f64 },

    #[error("reparametrization is not strictly monotone")]
    NonMonotone,

    #[error("rectangle [{s}, {s_end}] x [{t}, {t_end}] leaves the surface domain")]
    RectangleOutsideDomain { s: f64, s_end: f64, t: f64, t_end: f64 },

    #[error("loop sides must be positive, got ({0}, {1})")]
    NonPositiveSides(f64, f64),

    #[error("path is not closed (endpoint gap {0:e})")]
    NotClosed(f64),

    #[error("paths do not share endpoints (gap {0:e})")]
    EndpointMismatch(f64),

    #[error("cannot compose: {0}")]
    CompositionMismatch(String),

    #[error("integration failed on [{from}, {to}]: {reason}")]
    IntegrationFailure { from: f64, to: f64, reason: String },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("finite-difference step must be positive and in range, got {0}")]
    InvalidStep(f64),

    #[error("curvature extraction noise floor exceeded: estimated solver noise {noise:e} per unit area")]
    NoiseFloor { noise: f64 },

    #[error("singular matrix")]
    Singular,

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Dsl(#[from] DslError),
}
