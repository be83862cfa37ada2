//! Default tolerances shared across the engine.
//!
//! Structural identities (pure linear algebra) are held to [`STRUCTURAL`];
//! identities that pass through the transport solver are held to [`SOLVER`].

/// Exact-arithmetic identities: Hermiticity, conjugate symmetry, adjoint laws.
pub const STRUCTURAL: f64 = 1e-12;

/// Identities mediated by the transport ODE solver.
pub const SOLVER: f64 = 1e-8;

/// Below this smallest singular value a metric counts as degenerate.
pub const NONDEGENERACY: f64 = 1e-10;

/// Two spacetime points closer than this (max-norm) count as equal.
pub const POINT_MATCH: f64 = 1e-12;

/// States with squared norm at or below this are rejected for expectations.
pub const ZERO_NORM: f64 = 1e-14;

/// Default integration tolerance per unit parameter length.
pub const DEFAULT_INTEGRATION: f64 = 1e-10;

/// Tightened integration tolerance for small holonomy loops.
pub const TIGHT_INTEGRATION: f64 = 1e-12;

/// Smallest step the integrator will try before giving up.
pub const STEP_FLOOR: f64 = 1e-6;

/// Curvature estimates whose solver noise per unit area exceeds this are rejected.
pub const CURVATURE_NOISE_FLOOR: f64 = 1e-6;
