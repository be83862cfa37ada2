//! Expectation values, predicted states, transported observables and the
//! residual instruments built on them: path independence, loop
//! commutators, intertwining, and the Heisenberg-picture equations of
//! motion in both path parameters.

use std::sync::Arc;

use crate::bundle::{bracket, FibreMetric, Observable, StateVector};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, C64, I};
use crate::paths::{make_path, restrict, Path, PathDescriptor, SpacetimePoint};
use crate::tolerance;
use crate::transport::{evolve_state, Transport};

/// `⟨ψ|Aψ⟩ / ⟨ψ|ψ⟩`, with `A` and the metric taken at the state's anchor.
pub fn expectation(a: &Observable, psi: &StateVector, g: &FibreMetric) -> Result<C64> {
    for n in [a.dim(), g.dim()] {
        if n != psi.dim() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: psi.dim(),
            });
        }
    }
    let x = psi.anchor();
    let gm = g.matrix_at(x);
    let norm = bracket(&gm, psi.coords(), psi.coords());
    if norm.norm() <= tolerance::ZERO_NORM {
        return Err(Error::ZeroNorm);
    }
    let av = a.matrix_at(x) * psi.coords();
    Ok(bracket(&gm, psi.coords(), &av) / norm)
}

/// The state at `γ(t)` an observer at `γ(s)` predicts by transport.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedState {
    pub state: StateVector,
    pub observer_point: SpacetimePoint,
    pub path_id: Arc<str>,
    pub s: f64,
    pub t: f64,
}

pub fn predicted_state(
    transport: &Transport,
    path: &Path,
    psi: &StateVector,
    s: f64,
    t: f64,
) -> Result<PredictedState> {
    let l = transport.solve(path, s, t)?;
    let state = evolve_state(&l, psi, path)?;
    Ok(PredictedState {
        state,
        observer_point: path.point(s),
        path_id: path.id().into(),
        s,
        t,
    })
}

/// `A^γ(s,t) = L_{t→s} A(γ(t)) L_{s→t}`, acting on the fibre at `γ(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportedObservable {
    pub matrix: CMatrix,
    pub path_id: Arc<str>,
    pub s: f64,
    pub t: f64,
}

pub fn transport_observable(
    a: &Observable,
    transport: &Transport,
    path: &Path,
    s: f64,
    t: f64,
) -> Result<TransportedObservable> {
    let matrix = if s == t {
        path.check_contains(s)?;
        a.matrix_at(&path.point(s))
    } else {
        let forward = transport.solve(path, s, t)?;
        let back = transport.solve(path, t, s)?;
        &back.matrix * a.matrix_at(&path.point(t)) * &forward.matrix
    };
    Ok(TransportedObservable {
        matrix,
        path_id: path.id().into(),
        s,
        t,
    })
}

/// The two routes to `⟨A⟩^γ_{s,t}`: through the predicted state at `γ(t)`
/// and through the transported observable at `γ(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathExpectation {
    pub via_state: C64,
    pub via_observable: C64,
}

impl PathExpectation {
    pub fn discrepancy(&self) -> f64 {
        (self.via_state - self.via_observable).norm()
    }
}

pub fn path_expectation(
    a: &Observable,
    psi: &StateVector,
    transport: &Transport,
    path: &Path,
    s: f64,
    t: f64,
    g: &FibreMetric,
) -> Result<PathExpectation> {
    if s == t {
        path.check_contains(s)?;
        let e = expectation(a, psi, g)?;
        return Ok(PathExpectation {
            via_state: e,
            via_observable: e,
        });
    }
    let predicted = predicted_state(transport, path, psi, s, t)?;
    let via_state = expectation(a, &predicted.state, g)?;
    let transported = transport_observable(a, transport, path, s, t)?;
    let gm = g.matrix_at(psi.anchor());
    let norm = bracket(&gm, psi.coords(), psi.coords());
    if norm.norm() <= tolerance::ZERO_NORM {
        return Err(Error::ZeroNorm);
    }
    let via_observable = bracket(&gm, psi.coords(), &(&transported.matrix * psi.coords())) / norm;
    Ok(PathExpectation {
        via_state,
        via_observable,
    })
}

fn check_same_endpoints(p1: &Path, p2: &Path) -> Result<()> {
    let gap = p1.start().distance(&p2.start()).max(p1.end().distance(&p2.end()));
    if gap > tolerance::POINT_MATCH {
        return Err(Error::EndpointMismatch(gap));
    }
    Ok(())
}

/// `|⟨A⟩ via p1 − ⟨A⟩ via p2|` for two paths with common endpoints,
/// each traversed over its whole domain.
pub fn path_independence_residual(
    a: &Observable,
    psi: &StateVector,
    transport: &Transport,
    p1: &Path,
    p2: &Path,
    g: &FibreMetric,
) -> Result<f64> {
    check_same_endpoints(p1, p2)?;
    let (a1, b1) = p1.domain();
    let (a2, b2) = p2.domain();
    let e1 = path_expectation(a, psi, transport, p1, a1, b1, g)?.via_state;
    let e2 = path_expectation(a, psi, transport, p2, a2, b2, g)?.via_state;
    Ok((e1 - e2).norm())
}

/// `‖[L_loop, A]‖_F` for a closed path.
pub fn loop_commutator_residual(a: &Observable, transport: &Transport, path: &Path) -> Result<f64> {
    let gap = path.start().distance(&path.end());
    if gap > tolerance::POINT_MATCH {
        return Err(Error::NotClosed(gap));
    }
    let (s0, s1) = path.domain();
    let l = transport.solve(path, s0, s1)?;
    let am = a.matrix_at(&path.start());
    Ok(linalg::frobenius(&linalg::commutator(&l.matrix, &am)))
}

/// `‖[L^γ_{x→y} ∘ L^β_{y→x}, A]‖_F` for two paths from `x` to `y`.
pub fn two_path_commutator_residual(a: &Observable, transport: &Transport, gamma: &Path, beta: &Path) -> Result<f64> {
    check_same_endpoints(gamma, beta)?;
    let (ga, gb) = gamma.domain();
    let (ba, bb) = beta.domain();
    let back = transport.solve(beta, bb, ba)?;
    let forth = transport.solve(gamma, ga, gb)?;
    let round = &forth.matrix * &back.matrix;
    let am = a.matrix_at(&gamma.end());
    Ok(linalg::frobenius(&linalg::commutator(&round, &am)))
}

fn check_window(path: &Path, centre: f64, h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidStep(h));
    }
    path.check_contains(centre - h)?;
    path.check_contains(centre + h)
}

/// Central-difference residual of `∂_s A^γ(s,t) = −[Γ(s), A^γ(s,t)]`.
///
/// Neighbouring values `A^γ(s±h, t)` are obtained by carrying `A^γ(s,t)`
/// over the short interval `[s, s±h]`, so the long transport enters once.
pub fn heisenberg_residual_s(
    a: &Observable,
    transport: &Transport,
    path: &Path,
    s: f64,
    t: f64,
    h: f64,
) -> Result<f64> {
    check_window(path, s, h)?;
    path.check_contains(t)?;
    let centre = transport_observable(a, transport, path, s, t)?.matrix;
    let shifted = |target: f64| -> Result<CMatrix> {
        let out = transport.solve(path, s, target)?;
        let back = transport.solve(path, target, s)?;
        Ok(&out.matrix * &centre * &back.matrix)
    };
    let slope = (shifted(s + h)? - shifted(s - h)?) * c(1.0 / (2.0 * h), 0.0);
    let gamma = transport.coefficients().gamma_at(path, s)?;
    Ok(linalg::frobenius(&(slope + linalg::commutator(&gamma, &centre))))
}

/// Central-difference residual of `iħ ∂_t A^γ(s,t) = −[H^γ(s,t), A^γ(s,t)]`
/// with `H^γ(s,t) = L_{t→s} H_γ(t) L_{s→t}`.
///
/// The law holds for observables that are the same matrix on every fibre
/// along the path. A point-dependent `A` leaves the pulled-back derivative
/// of `A(γ(t))` in the residual, which then does not shrink with `h`.
pub fn heisenberg_residual_t(
    a: &Observable,
    transport: &Transport,
    path: &Path,
    s: f64,
    t: f64,
    h: f64,
) -> Result<f64> {
    check_window(path, t, h)?;
    path.check_contains(s)?;
    let forward = transport.solve(path, s, t)?.matrix;
    let back = transport.solve(path, t, s)?.matrix;
    // B(τ) = L_{τ→t} A(γ(τ)) L_{t→τ}, so A^γ(s,τ) = L_{t→s} B(τ) L_{s→t}.
    let local = |tau: f64| -> Result<CMatrix> {
        let out = transport.solve(path, t, tau)?;
        let ret = transport.solve(path, tau, t)?;
        Ok(&ret.matrix * a.matrix_at(&path.point(tau)) * &out.matrix)
    };
    let local_slope = (local(t + h)? - local(t - h)?) * c(1.0 / (2.0 * h), 0.0);
    let slope = &back * local_slope * &forward;
    let a_st = &back * a.matrix_at(&path.point(t)) * &forward;
    let h_st = &back * transport.coefficients().hamiltonian_along(path, t)? * &forward;
    let lhs = slope * (I * transport.hbar());
    Ok(linalg::frobenius(&(lhs + linalg::commutator(&h_st, &a_st))))
}

/// Paths from a common base point `x`, each parametrized on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PathFamily {
    base: SpacetimePoint,
    members: Vec<Path>,
}

impl PathFamily {
    pub fn new(base: SpacetimePoint, members: Vec<Path>) -> Result<Self> {
        for p in &members {
            if p.domain() != (0.0, 1.0) {
                return Err(Error::Invalid(format!(
                    "family member `{}` must be parametrized on [0, 1]",
                    p.id()
                )));
            }
            let gap = p.start().distance(&base);
            if gap > tolerance::POINT_MATCH {
                return Err(Error::EndpointMismatch(gap));
            }
        }
        Ok(Self { base, members })
    }

    /// Straight segments from `base` to each target.
    pub fn straight_lines(base: SpacetimePoint, targets: &[SpacetimePoint]) -> Result<Self> {
        let members = targets
            .iter()
            .enumerate()
            .map(|(k, y)| {
                make_path(
                    &format!("beta{k}"),
                    &PathDescriptor::Line {
                        from: base.coords().to_vec(),
                        to: y.coords().to_vec(),
                        domain: (0.0, 1.0),
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(base, members)
    }

    pub fn base(&self) -> &SpacetimePoint {
        &self.base
    }

    pub fn members(&self) -> &[Path] {
        &self.members
    }

    pub fn member(&self, k: usize) -> Result<&Path> {
        self.members
            .get(k)
            .ok_or_else(|| Error::Invalid(format!("family has no member {k}")))
    }
}

/// Residual of the sub-path flow `iħ ∂_τ A^{β_{y,τ}} = −[H^{β_{y,τ}}(τ), A^{β_{y,τ}}]`
/// for member `member` of the family, where `β_{y,τ}` is the member
/// restricted to `[0, τ]`.
pub fn subpath_flow_residual(
    a: &Observable,
    transport: &Transport,
    family: &PathFamily,
    member: usize,
    tau: f64,
    h: f64,
) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) || tau - h < 0.0 || tau + h > 1.0 {
        return Err(Error::InvalidStep(h));
    }
    let beta = family.member(member)?;
    let sub = restrict(beta, 0.0, tau + h)?;
    heisenberg_residual_t(a, transport, &sub, 0.0, tau, h)
}

/// `‖A^γ(r,s) L_{r'→r} − L_{r'→r} A^γ(r',t)‖_F`; vanishes when `t = s`.
pub fn intertwining_residual(
    a: &Observable,
    transport: &Transport,
    path: &Path,
    r_prime: f64,
    r: f64,
    s: f64,
    t: f64,
) -> Result<f64> {
    let a_rs = transport_observable(a, transport, path, r, s)?.matrix;
    let a_rpt = transport_observable(a, transport, path, r_prime, t)?.matrix;
    let l = transport.solve(path, r_prime, r)?.matrix;
    Ok(linalg::distance(&(&a_rs * &l), &(&l * &a_rpt)))
}
