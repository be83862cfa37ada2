//! Fibre algebra: state vectors, Hermitian fibre metrics, observables,
//! brackets and metric-relative adjoints.
//!
//! Every fibre is identified with `C^n` through one global trivialization,
//! so a metric or an observable is just a point-dependent `n × n` matrix.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::paths::SpacetimePoint;
use crate::tolerance;

pub const MAX_DIMENSION: usize = 64;

/// Complex dimension of every fibre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FibreDimension(usize);

impl FibreDimension {
    pub fn new(n: usize) -> Result<Self> {
        if (1..=MAX_DIMENSION).contains(&n) {
            Ok(Self(n))
        } else {
            Err(Error::InvalidDimension(n))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl Default for FibreDimension {
    fn default() -> Self {
        Self(2)
    }
}

/// A fibre element: coordinates in `E_x` together with the point `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    coords: CVector,
    anchor: SpacetimePoint,
}

impl StateVector {
    pub fn new(coords: CVector, anchor: SpacetimePoint) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if coords.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("state vector".into()));
        }
        Ok(Self { coords, anchor })
    }

    pub fn from_slice(coords: &[C64], anchor: SpacetimePoint) -> Result<Self> {
        Self::new(CVector::from_column_slice(coords), anchor)
    }

    pub fn coords(&self) -> &CVector {
        &self.coords
    }

    pub fn anchor(&self) -> &SpacetimePoint {
        &self.anchor
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Euclidean coordinate norm (the bracket norm for the identity metric).
    pub fn coord_norm(&self) -> f64 {
        linalg::vector_norm(&self.coords)
    }

    pub(crate) fn with_parts(coords: CVector, anchor: SpacetimePoint) -> Self {
        Self { coords, anchor }
    }
}

type MatrixField = Arc<dyn Fn(&SpacetimePoint) -> CMatrix + Send + Sync>;

#[derive(Clone)]
enum MetricKind {
    Identity,
    Constant(CMatrix),
    Field(MatrixField),
}

/// Hermitian nondegenerate form on each fibre, `⟨u|v⟩_x = u† G(x) v`.
#[derive(Clone)]
pub struct FibreMetric {
    n: usize,
    kind: MetricKind,
}

impl fmt::Debug for FibreMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            MetricKind::Identity => "identity".to_string(),
            MetricKind::Constant(m) => format!("constant {m:?}"),
            MetricKind::Field(_) => "field".to_string(),
        };
        f.debug_struct("FibreMetric")
            .field("n", &self.n)
            .field("kind", &kind)
            .finish()
    }
}

/// Checks a metric matrix: Hermitian, nondegenerate and positive definite.
pub fn validate_metric_matrix(g: &CMatrix) -> Result<()> {
    if !g.is_square() {
        return Err(Error::DimensionMismatch {
            expected: g.nrows(),
            found: g.ncols(),
        });
    }
    if !linalg::is_finite(g) {
        return Err(Error::NonFinite("metric".into()));
    }
    let dev = linalg::hermitian_max_deviation(g);
    if dev > tolerance::STRUCTURAL {
        return Err(Error::NotHermitian { residual: dev });
    }
    let sigma = linalg::min_singular_value(g);
    if sigma <= tolerance::NONDEGENERACY {
        return Err(Error::Degenerate { min_singular: sigma });
    }
    let lowest = linalg::hermitian_eigenvalues(g)[0];
    if lowest <= 0.0 {
        return Err(Error::IndefiniteMetric { min_eigenvalue: lowest });
    }
    Ok(())
}

impl FibreMetric {
    pub fn identity(n: FibreDimension) -> Self {
        Self {
            n: n.get(),
            kind: MetricKind::Identity,
        }
    }

    pub fn constant(g: CMatrix) -> Result<Self> {
        validate_metric_matrix(&g)?;
        FibreDimension::new(g.nrows())?;
        Ok(Self {
            n: g.nrows(),
            kind: MetricKind::Constant(g),
        })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let g = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                linalg::c(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self::constant(g)
    }

    /// Point-dependent metric. Validated at `probe`; later evaluations are trusted.
    pub fn field(
        n: FibreDimension,
        probe: &SpacetimePoint,
        f: impl Fn(&SpacetimePoint) -> CMatrix + Send + Sync + 'static,
    ) -> Result<Self> {
        let g = f(probe);
        if g.nrows() != n.get() {
            return Err(Error::DimensionMismatch {
                expected: n.get(),
                found: g.nrows(),
            });
        }
        validate_metric_matrix(&g)?;
        Ok(Self {
            n: n.get(),
            kind: MetricKind::Field(Arc::new(f)),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, MetricKind::Identity)
    }

    pub fn matrix_at(&self, x: &SpacetimePoint) -> CMatrix {
        match &self.kind {
            MetricKind::Identity => linalg::identity(self.n),
            MetricKind::Constant(g) => g.clone(),
            MetricKind::Field(f) => f(x),
        }
    }
}

/// A bundle morphism given by its matrix on each fibre.
#[derive(Clone)]
pub struct Observable {
    label: Arc<str>,
    n: usize,
    self_adjoint: bool,
    matrix: ObservableKind,
}

#[derive(Clone)]
enum ObservableKind {
    Constant(CMatrix),
    Field(MatrixField),
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("label", &self.label)
            .field("n", &self.n)
            .field("self_adjoint", &self.self_adjoint)
            .finish()
    }
}

impl Observable {
    /// Same matrix on every fibre. Flagged self-adjoint when Hermitian.
    pub fn constant(label: impl Into<Arc<str>>, a: CMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        if !linalg::is_finite(&a) {
            return Err(Error::NonFinite("observable".into()));
        }
        let self_adjoint = linalg::hermitian_max_deviation(&a) <= tolerance::STRUCTURAL;
        Ok(Self {
            label: label.into(),
            n: a.nrows(),
            self_adjoint,
            matrix: ObservableKind::Constant(a),
        })
    }

    pub fn scalar(label: impl Into<Arc<str>>, n: FibreDimension, value: C64) -> Self {
        let a = linalg::identity(n.get()) * value;
        Self {
            label: label.into(),
            n: n.get(),
            self_adjoint: value.im == 0.0,
            matrix: ObservableKind::Constant(a),
        }
    }

    pub fn field(
        label: impl Into<Arc<str>>,
        n: FibreDimension,
        self_adjoint: bool,
        f: impl Fn(&SpacetimePoint) -> CMatrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            n: n.get(),
            self_adjoint,
            matrix: ObservableKind::Field(Arc::new(f)),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.matrix, ObservableKind::Constant(_))
    }

    pub fn matrix_at(&self, x: &SpacetimePoint) -> CMatrix {
        match &self.matrix {
            ObservableKind::Constant(a) => a.clone(),
            ObservableKind::Field(f) => f(x),
        }
    }
}

fn check_anchor(u: &StateVector, x: &SpacetimePoint) -> Result<()> {
    if u.anchor().approx_eq(x, tolerance::POINT_MATCH) {
        Ok(())
    } else {
        Err(Error::AnchorMismatch {
            expected: x.coords().to_vec(),
            found: u.anchor().coords().to_vec(),
        })
    }
}

/// `⟨u|v⟩_x = conj(u)ᵀ G(x) v`: antilinear in `u`, linear in `v`.
pub fn inner_product(g: &FibreMetric, x: &SpacetimePoint, u: &StateVector, v: &StateVector) -> Result<C64> {
    for w in [u, v] {
        if w.dim() != g.dim() {
            return Err(Error::DimensionMismatch {
                expected: g.dim(),
                found: w.dim(),
            });
        }
        check_anchor(w, x)?;
    }
    Ok(bracket(&g.matrix_at(x), u.coords(), v.coords()))
}

pub(crate) fn bracket(g: &CMatrix, u: &CVector, v: &CVector) -> C64 {
    u.dotc(&(g * v))
}

/// `G⁻¹ U† G`, the adjoint of `U` with respect to the form `G`.
pub fn metric_adjoint(g: &CMatrix, u: &CMatrix) -> Result<CMatrix> {
    if !g.is_square() || g.shape() != u.shape() {
        return Err(Error::DimensionMismatch {
            expected: g.nrows(),
            found: u.nrows(),
        });
    }
    let sigma = linalg::min_singular_value(g);
    if sigma <= tolerance::NONDEGENERACY {
        return Err(Error::Degenerate { min_singular: sigma });
    }
    let rhs = u.adjoint() * g;
    g.clone().lu().solve(&rhs).ok_or(Error::Singular)
}

/// `‖A − G⁻¹ A† G‖_F`.
pub fn self_adjointness_residual(g: &CMatrix, a: &CMatrix) -> Result<f64> {
    let adj = metric_adjoint(g, a)?;
    Ok(linalg::distance(a, &adj))
}
