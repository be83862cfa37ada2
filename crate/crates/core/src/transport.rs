//! Transport coefficients and the evolution operators they generate.
//!
//! The coefficient matrix along a path is `Γ(s) = -H(s)/(iħ) = (i/ħ) H(s)`
//! and the evolution operator `L_{s→t}` solves `∂_t L = -Γ(t) L` with
//! `L_{s→s} = I`, i.e. `iħ ∂_t L = H L`. Integration is classical RK4 at a
//! fixed step, with the step count doubled until two successive results
//! agree to the requested tolerance.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::bundle::{FibreMetric, StateVector};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianField;
use crate::linalg::{self, c, CMatrix, CVector, C64, I};
use crate::paths::{Path, SpacetimePoint};
use crate::tolerance;

/// Absolute floor on the step-doubling acceptance threshold.
const ACCEPTANCE_FLOOR: f64 = 1e-14;

/// How a Hamiltonian field is turned into coefficients along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// `H` depends on the spacetime point only and is contracted with the
    /// path velocity, which makes transports reparametrization invariant.
    #[default]
    Geometric,
    /// `H` is evaluated at `(γ(s), s)` with no velocity factor.
    LabTime,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(Self::Geometric),
            "lab-time" | "lab_time" => Ok(Self::LabTime),
            other => Err(Error::Invalid(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Geometric => "geometric",
            Self::LabTime => "lab-time",
        })
    }
}

type GammaFn = Arc<dyn Fn(&Path, f64) -> CMatrix + Send + Sync>;

#[derive(Clone)]
enum Source {
    Field { field: Arc<HamiltonianField>, mode: Mode },
    Zero,
    Custom(GammaFn),
}

/// The coefficient matrices `Γ_γ(s)` of a linear transport.
#[derive(Clone)]
pub struct TransportCoefficients {
    n: usize,
    hbar: f64,
    source: Source,
}

impl fmt::Debug for TransportCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = match &self.source {
            Source::Field { mode, .. } => format!("field ({mode})"),
            Source::Zero => "zero".into(),
            Source::Custom(_) => "custom".into(),
        };
        f.debug_struct("TransportCoefficients")
            .field("n", &self.n)
            .field("hbar", &self.hbar)
            .field("source", &source)
            .finish()
    }
}

impl TransportCoefficients {
    pub fn from_field(field: HamiltonianField, mode: Mode) -> Result<Self> {
        match mode {
            Mode::Geometric if field.uses_param() => {
                return Err(Error::Invalid(
                    "geometric mode coefficients may not reference the path parameter `s`".into(),
                ))
            }
            Mode::LabTime if field.uses_directions() => {
                return Err(Error::Invalid("lab-time mode terms must all have direction 0".into()))
            }
            _ => {}
        }
        Ok(Self {
            n: field.dim(),
            hbar: field.hbar(),
            source: Source::Field {
                field: Arc::new(field),
                mode,
            },
        })
    }

    /// The flat transport, `Γ ≡ 0`.
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            hbar: 1.0,
            source: Source::Zero,
        }
    }

    /// Coefficients given directly as a function of `(path, s)`.
    pub fn custom(n: usize, hbar: f64, gamma: impl Fn(&Path, f64) -> CMatrix + Send + Sync + 'static) -> Self {
        Self {
            n,
            hbar,
            source: Source::Custom(Arc::new(gamma)),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mode(&self) -> Option<Mode> {
        match &self.source {
            Source::Field { mode, .. } => Some(*mode),
            _ => None,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.source, Source::Zero)
    }

    /// The effective Hamiltonian along `path` at `s`.
    pub fn hamiltonian_along(&self, path: &Path, s: f64) -> Result<CMatrix> {
        self.hamiltonian_sided(path, s, None)
    }

    fn hamiltonian_sided(&self, path: &Path, s: f64, from_above: Option<bool>) -> Result<CMatrix> {
        match &self.source {
            Source::Field { field, mode } => {
                let x = path.point(s);
                let velocity = || match from_above {
                    Some(side) => path.velocity_limit(s, side),
                    None => path.velocity(s),
                };
                match mode {
                    Mode::Geometric => field.contract(&x, s, &velocity()),
                    Mode::LabTime => field.hamiltonian_at(&x, s),
                }
            }
            Source::Zero => Ok(linalg::zeros(self.n)),
            Source::Custom(f) => Ok(f(path, s) * c(0.0, -self.hbar)),
        }
    }

    /// `Γ_γ(s) = (i/ħ) H_γ(s)`.
    pub fn gamma_at(&self, path: &Path, s: f64) -> Result<CMatrix> {
        match &self.source {
            Source::Custom(f) => Ok(f(path, s)),
            _ => Ok(self.hamiltonian_along(path, s)? * (I / self.hbar)),
        }
    }

    /// `Γ_γ(s)` with the path velocity taken as a one-sided limit, for use
    /// at the ends of a smooth piece.
    fn gamma_limit(&self, path: &Path, s: f64, from_above: bool) -> Result<CMatrix> {
        match &self.source {
            Source::Custom(f) => Ok(f(path, s)),
            _ => Ok(self.hamiltonian_sided(path, s, Some(from_above))? * (I / self.hbar)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Initial step size.
    pub step: f64,
    /// Acceptance tolerance per unit parameter length.
    pub tol: f64,
    /// Smallest step tried before reporting failure.
    pub step_floor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            step: 1e-2,
            tol: tolerance::DEFAULT_INTEGRATION,
            step_floor: tolerance::STEP_FLOOR,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }

    pub fn with_step(self, step: f64) -> Self {
        Self { step, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidStep(self.step));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Invalid(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// The matrix of `L^γ_{from→to}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionOperator {
    pub matrix: CMatrix,
    pub path_id: Arc<str>,
    pub from: f64,
    pub to: f64,
    /// Frobenius difference between the last two step-doubling iterates,
    /// summed over segments.
    pub achieved_tol: f64,
    /// Total RK4 steps in the accepted solution.
    pub steps: usize,
}

impl EvolutionOperator {
    pub fn identity(n: usize, path_id: impl Into<Arc<str>>, at: f64) -> Self {
        Self {
            matrix: linalg::identity(n),
            path_id: path_id.into(),
            from: at,
            to: at,
            achieved_tol: 0.0,
            steps: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// A linear transport: coefficients plus the integrator that realizes them.
#[derive(Debug, Clone)]
pub struct Transport {
    coefficients: TransportCoefficients,
    settings: SolverSettings,
}

impl Transport {
    pub fn new(coefficients: TransportCoefficients, settings: SolverSettings) -> Self {
        Self { coefficients, settings }
    }

    pub fn coefficients(&self) -> &TransportCoefficients {
        &self.coefficients
    }

    pub fn settings(&self) -> SolverSettings {
        self.settings
    }

    pub fn with_settings(&self, settings: SolverSettings) -> Self {
        Self {
            coefficients: self.coefficients.clone(),
            settings,
        }
    }

    pub fn dim(&self) -> usize {
        self.coefficients.dim()
    }

    pub fn hbar(&self) -> f64 {
        self.coefficients.hbar()
    }

    /// Solve for `L^γ_{s→t}`. `t < s` integrates backwards with negative steps.
    pub fn solve(&self, path: &Path, s: f64, t: f64) -> Result<EvolutionOperator> {
        path.check_contains(s)?;
        path.check_contains(t)?;
        self.settings.validate()?;
        let n = self.dim();
        if s == t {
            return Ok(EvolutionOperator::identity(n, path.id(), s));
        }
        if self.coefficients.is_flat() {
            return Ok(EvolutionOperator {
                matrix: linalg::identity(n),
                path_id: path.id().into(),
                from: s,
                to: t,
                achieved_tol: 0.0,
                steps: 0,
            });
        }
        let mut nodes = vec![s];
        nodes.extend(path.breakpoints_between(s, t));
        nodes.push(t);
        let mut matrix = linalg::identity(n);
        let mut achieved = 0.0;
        let mut steps = 0;
        for w in nodes.windows(2) {
            let (segment, diff, count) = self.solve_segment(path, w[0], w[1])?;
            matrix = segment * matrix;
            achieved += diff;
            steps += count;
        }
        Ok(EvolutionOperator {
            matrix,
            path_id: path.id().into(),
            from: s,
            to: t,
            achieved_tol: achieved,
            steps,
        })
    }

    fn solve_segment(&self, path: &Path, a: f64, b: f64) -> Result<(CMatrix, f64, usize)> {
        let len = (b - a).abs();
        let target = (self.settings.tol * len).max(ACCEPTANCE_FLOOR);
        let mut count = ((len / self.settings.step).ceil() as usize).max(1);
        let mut coarse = self.rk4(path, a, b, count)?;
        loop {
            if len / ((2 * count) as f64) < self.settings.step_floor {
                return Err(Error::IntegrationFailure {
                    from: a,
                    to: b,
                    reason: format!(
                        "tolerance {target:e} not reached above step floor {:e}",
                        self.settings.step_floor
                    ),
                });
            }
            count *= 2;
            let fine = self.rk4(path, a, b, count)?;
            let diff = linalg::distance(&fine, &coarse);
            if diff < target {
                return Ok((fine, diff, count));
            }
            coarse = fine;
        }
    }

    fn rk4(&self, path: &Path, a: f64, b: f64, count: usize) -> Result<CMatrix> {
        let n = self.dim();
        let h = (b - a) / count as f64;
        let half = c(0.5 * h, 0.0);
        let full = c(h, 0.0);
        let sixth = c(h / 6.0, 0.0);
        let two = c(2.0, 0.0);
        let gamma = |s: f64| -> Result<CMatrix> { Ok(-self.coefficients.gamma_at(path, s)?) };
        let mut l = linalg::identity(n);
        let inward = b > a;
        let mut g0 = -self.coefficients.gamma_limit(path, a, inward)?;
        for k in 0..count {
            let s0 = a + (b - a) * (k as f64 / count as f64);
            let s1 = if k + 1 == count {
                b
            } else {
                a + (b - a) * ((k + 1) as f64 / count as f64)
            };
            let mid = 0.5 * (s0 + s1);
            let gm = gamma(mid)?;
            let g1 = if k + 1 == count {
                -self.coefficients.gamma_limit(path, b, !inward)?
            } else {
                gamma(s1)?
            };
            let k1 = &g0 * &l;
            let k2 = &gm * (&l + &k1 * half);
            let k3 = &gm * (&l + &k2 * half);
            let k4 = &g1 * (&l + &k3 * full);
            l += (k1 + k2 * two + k3 * two + k4) * sixth;
            if !linalg::is_finite(&l) {
                return Err(Error::IntegrationFailure {
                    from: a,
                    to: b,
                    reason: format!("non-finite state at s = {s1}"),
                });
            }
            g0 = g1;
        }
        Ok(l)
    }

    /// `L_{t→s}` by a direct backward solve, not by matrix inversion.
    pub fn invert(&self, l: &EvolutionOperator, path: &Path) -> Result<EvolutionOperator> {
        check_path(l, path)?;
        self.solve(path, l.to, l.from)
    }

    pub fn frame(&self, path: &Path, base: f64) -> Result<FrameFactor> {
        path.check_contains(base)?;
        Ok(FrameFactor {
            transport: self.clone(),
            path: path.clone(),
            base,
        })
    }
}

fn check_path(l: &EvolutionOperator, path: &Path) -> Result<()> {
    if &*l.path_id != path.id() {
        return Err(Error::CompositionMismatch(format!(
            "operator belongs to path `{}`, not `{}`",
            l.path_id,
            path.id()
        )));
    }
    Ok(())
}

/// `solve_transport` with explicit step and tolerance.
pub fn solve_transport(
    coefficients: &TransportCoefficients,
    path: &Path,
    s: f64,
    t: f64,
    step: f64,
    tol: f64,
) -> Result<EvolutionOperator> {
    let settings = SolverSettings {
        step,
        tol,
        ..SolverSettings::default()
    };
    Transport::new(coefficients.clone(), settings).solve(path, s, t)
}

fn same_parameter(a: f64, b: f64) -> bool {
    (a - b).abs() <= tolerance::POINT_MATCH * (1.0 + a.abs().max(b.abs()))
}

/// `L_{t→r} ∘ L_{s→t} = L_{s→r}`: `second` must start where `first` ends.
pub fn compose(second: &EvolutionOperator, first: &EvolutionOperator) -> Result<EvolutionOperator> {
    if second.path_id != first.path_id {
        return Err(Error::CompositionMismatch(format!(
            "paths `{}` and `{}` differ",
            second.path_id, first.path_id
        )));
    }
    if !same_parameter(first.to, second.from) {
        return Err(Error::CompositionMismatch(format!(
            "first ends at {} but second starts at {}",
            first.to, second.from
        )));
    }
    if first.dim() != second.dim() {
        return Err(Error::DimensionMismatch {
            expected: first.dim(),
            found: second.dim(),
        });
    }
    Ok(EvolutionOperator {
        matrix: &second.matrix * &first.matrix,
        path_id: first.path_id.clone(),
        from: first.from,
        to: second.to,
        achieved_tol: first.achieved_tol + second.achieved_tol,
        steps: first.steps + second.steps,
    })
}

/// Apply `L_{s→t}` to a state at `γ(s)`, giving a state anchored at `γ(t)`.
pub fn evolve_state(l: &EvolutionOperator, psi: &StateVector, path: &Path) -> Result<StateVector> {
    check_path(l, path)?;
    if psi.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            found: psi.dim(),
        });
    }
    let source = path.point(l.from);
    if !psi.anchor().approx_eq(&source, 1e-9) {
        return Err(Error::AnchorMismatch {
            expected: source.coords().to_vec(),
            found: psi.anchor().coords().to_vec(),
        });
    }
    Ok(StateVector::with_parts(&l.matrix * psi.coords(), path.point(l.to)))
}

/// `‖G(x_from) − L† G(x_to) L‖_F`; zero exactly when `L` preserves the metric.
pub fn metric_consistency_residual(
    l: &EvolutionOperator,
    g: &FibreMetric,
    x_from: &SpacetimePoint,
    x_to: &SpacetimePoint,
) -> Result<f64> {
    if g.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: l.dim(),
        });
    }
    let pulled = l.matrix.adjoint() * g.matrix_at(x_to) * &l.matrix;
    Ok(linalg::distance(&g.matrix_at(x_from), &pulled))
}

/// Covariant derivative of a section along the path:
/// `(ψ(s+h) − ψ(s−h))/(2h) + Γ(s) ψ(s)`.
pub fn derivative_along_path(
    section: impl Fn(f64) -> Result<StateVector>,
    coefficients: &TransportCoefficients,
    path: &Path,
    s: f64,
    h: f64,
) -> Result<CVector> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidStep(h));
    }
    let plus = section(s + h)?;
    let minus = section(s - h)?;
    let here = section(s)?;
    let slope = (plus.coords() - minus.coords()) * C64::new(1.0 / (2.0 * h), 0.0);
    Ok(slope + coefficients.gamma_at(path, s)? * here.coords())
}

/// `F_s := L_{s→base}`, so that `L_{s→t} = F_t⁻¹ F_s`.
#[derive(Debug, Clone)]
pub struct FrameFactor {
    transport: Transport,
    path: Path,
    base: f64,
}

impl FrameFactor {
    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn at(&self, s: f64) -> Result<CMatrix> {
        Ok(self.transport.solve(&self.path, s, self.base)?.matrix)
    }

    /// `F_t⁻¹ F_s`.
    pub fn transport(&self, s: f64, t: f64) -> Result<CMatrix> {
        let ft = self.at(t)?;
        let fs = self.at(s)?;
        Ok(linalg::inverse(&ft)? * fs)
    }
}

pub fn frame_factorize(transport: &Transport, path: &Path, base: f64) -> Result<FrameFactor> {
    transport.frame(path, base)
}
