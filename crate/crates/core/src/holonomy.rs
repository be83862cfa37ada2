//! Holonomy around rectangle loops and the curvature operator read off
//! from its small-loop expansion `L_loop = I − δε R + O(3)`.

use std::sync::Arc;

use crate::bundle::Observable;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::paths::{build_holonomy_loop, HolonomyLoop, ParamSurface, SpacetimePoint};
use crate::tolerance;
use crate::transport::{EvolutionOperator, Transport};

/// Loops smaller than this area get their legs solved at
/// [`tolerance::TIGHT_INTEGRATION`].
pub const TIGHT_AREA: f64 = 1e-4;

/// The transport actually used for the legs of `lp`.
pub fn loop_solver(transport: &Transport, lp: &HolonomyLoop) -> Transport {
    let settings = transport.settings();
    if lp.area() < TIGHT_AREA && settings.tol > tolerance::TIGHT_INTEGRATION {
        transport.with_settings(settings.with_tol(tolerance::TIGHT_INTEGRATION))
    } else {
        transport.clone()
    }
}

/// The four leg transports in traversal order.
pub fn leg_transports(transport: &Transport, lp: &HolonomyLoop) -> Result<[EvolutionOperator; 4]> {
    let solver = loop_solver(transport, lp);
    let b = lp.leg_bounds();
    let path = lp.as_path();
    Ok([
        solver.solve(path, b[0], b[1])?,
        solver.solve(path, b[1], b[2])?,
        solver.solve(path, b[2], b[3])?,
        solver.solve(path, b[3], b[4])?,
    ])
}

/// Transport once around the loop, `L_4 L_3 L_2 L_1`.
pub fn loop_transport(transport: &Transport, lp: &HolonomyLoop) -> Result<EvolutionOperator> {
    let legs = leg_transports(transport, lp)?;
    let matrix = legs
        .iter()
        .fold(linalg::identity(transport.dim()), |acc, leg| &leg.matrix * acc);
    let b = lp.leg_bounds();
    Ok(EvolutionOperator {
        matrix,
        path_id: lp.as_path().id().into(),
        from: b[0],
        to: b[4],
        achieved_tol: legs.iter().map(|l| l.achieved_tol).sum(),
        steps: legs.iter().map(|l| l.steps).sum(),
    })
}

/// Transport around the loop in the opposite orientation.
pub fn reverse_loop_transport(transport: &Transport, lp: &HolonomyLoop) -> Result<EvolutionOperator> {
    let solver = loop_solver(transport, lp);
    let b = lp.leg_bounds();
    solver.solve(lp.as_path(), b[4], b[0])
}

/// Scales and Richardson depth behind a curvature estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extraction {
    pub delta: f64,
    pub eps: f64,
    pub richardson_levels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureOperator {
    pub matrix: CMatrix,
    pub surface_id: Arc<str>,
    pub at: (f64, f64),
    pub extraction: Extraction,
    /// `(I − L_loop)/(δε)` at `δ0/2^k`, `k = 0..=levels`.
    pub raw: Vec<CMatrix>,
    /// Best estimate available after `j` eliminations, `j = 0..=levels`.
    pub by_level: Vec<CMatrix>,
}

impl CurvatureOperator {
    /// Relative Frobenius gap between the two deepest Richardson levels.
    pub fn level_disagreement(&self) -> Option<f64> {
        let k = self.by_level.len();
        if k < 2 {
            return None;
        }
        let (a, b) = (&self.by_level[k - 1], &self.by_level[k - 2]);
        Some(linalg::distance(a, b) / linalg::frobenius(a).max(f64::MIN_POSITIVE))
    }
}

fn raw_estimate(transport: &Transport, lp: &HolonomyLoop) -> Result<CMatrix> {
    let solver = loop_solver(transport, lp);
    let (d, e) = lp.sides();
    let noise = solver.settings().tol * 2.0 * (d + e) / (d * e);
    if noise > tolerance::CURVATURE_NOISE_FLOOR {
        return Err(Error::NoiseFloor { noise });
    }
    let l = loop_transport(transport, lp)?;
    Ok((linalg::identity(transport.dim()) - l.matrix) * c(1.0 / (d * e), 0.0))
}

/// Curvature at `η(s,t)` from loops of sides `δ0/2^k × ε0/2^k`, combined
/// by Richardson extrapolation in the common scale factor.
pub fn extract_curvature(
    transport: &Transport,
    surface: &ParamSurface,
    s: f64,
    t: f64,
    delta0: f64,
    eps0: f64,
    levels: usize,
) -> Result<CurvatureOperator> {
    let mut raw = Vec::with_capacity(levels + 1);
    for k in 0..=levels {
        let scale = 0.5f64.powi(k as i32);
        let lp = build_holonomy_loop(surface, s, t, delta0 * scale, eps0 * scale)?;
        raw.push(raw_estimate(transport, &lp)?);
    }
    let mut row = raw.clone();
    let mut by_level = vec![row[levels].clone()];
    for j in 1..=levels {
        let factor = 2f64.powi(j as i32);
        let w = c(1.0 / (factor - 1.0), 0.0);
        row = row.windows(2).map(|p| (&p[1] * c(factor, 0.0) - &p[0]) * w).collect();
        by_level.push(row[row.len() - 1].clone());
    }
    Ok(CurvatureOperator {
        matrix: row.swap_remove(0),
        surface_id: surface.id().into(),
        at: (s, t),
        extraction: Extraction {
            delta: delta0,
            eps: eps0,
            richardson_levels: levels,
        },
        raw,
        by_level,
    })
}

pub fn curvature_commutator_residual(r: &CurvatureOperator, a: &Observable, x: &SpacetimePoint) -> Result<f64> {
    if r.matrix.nrows() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: r.matrix.nrows(),
            found: a.dim(),
        });
    }
    Ok(linalg::frobenius(&linalg::commutator(&r.matrix, &a.matrix_at(x))))
}

/// `‖L_loop − (I − δε R)‖_F` for a supplied curvature matrix.
pub fn holonomy_expansion_residual(transport: &Transport, lp: &HolonomyLoop, curvature: &CMatrix) -> Result<f64> {
    let l = loop_transport(transport, lp)?;
    let predicted = linalg::identity(transport.dim()) - curvature * c(lp.area(), 0.0);
    Ok(linalg::distance(&l.matrix, &predicted))
}

/// `‖A^λ − A − δε [R, A]‖_F` with `A^λ = L_loop⁻¹ A L_loop` and `A` at the
/// loop's base point.
pub fn observable_loop_expansion_residual(
    a: &Observable,
    transport: &Transport,
    lp: &HolonomyLoop,
    curvature: &CMatrix,
) -> Result<f64> {
    let forward = loop_transport(transport, lp)?;
    let back = reverse_loop_transport(transport, lp)?;
    let am = a.matrix_at(&lp.as_path().start());
    let transported = &back.matrix * &am * &forward.matrix;
    let predicted = &am + linalg::commutator(curvature, &am) * c(lp.area(), 0.0);
    Ok(linalg::distance(&transported, &predicted))
}
