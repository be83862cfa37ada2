//! Finite-dimensional Hilbert bundle quantum mechanics: states live in fibres
//! over spacetime points and evolve by linear transport along paths.

pub mod bundle;
pub mod dsl;
pub mod error;
pub mod hamiltonian;
pub mod holonomy;
pub mod linalg;
pub mod observables;
pub mod paths;
pub mod tolerance;
pub mod transport;

pub use bundle::{FibreDimension, FibreMetric, Observable, StateVector};
pub use error::{Error, Result};
pub use hamiltonian::HamiltonianField;
pub use holonomy::CurvatureOperator;
pub use paths::{HolonomyLoop, ParamSurface, Path, SpacetimePoint};
pub use transport::{EvolutionOperator, Mode, SolverSettings, Transport, TransportCoefficients};
