//! Point-dependent Hermitian Hamiltonians assembled from real coefficient
//! expressions and a Hermitian matrix basis.
//!
//! Each term carries a `direction` μ. Along a path the effective
//! Hamiltonian is `Σ_μ H_μ(x) dx^μ/ds`, so plain Hamiltonians (μ = 0) are
//! driven by coordinate time and spatial components act as gauge
//! potentials. In lab-time mode directions are ignored and the sum of all
//! terms is used directly.

use crate::dsl::{parse_expression, CompiledExpr, SymbolTable};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, C64};
use crate::paths::SpacetimePoint;
use crate::tolerance;

/// Identity followed by the generalized Gell-Mann matrices of dimension `n`.
///
/// Off-diagonal pairs come column by column, symmetric before
/// antisymmetric, and each column closes with its diagonal generator, so
/// for `n = 2` the order is `I, σx, σy, σz` and for `n = 3` it is `I, λ1..λ8`.
pub fn gell_mann_basis(n: usize) -> Vec<CMatrix> {
    let zero = C64::new(0.0, 0.0);
    let mut basis = vec![linalg::identity(n)];
    for j in 1..n {
        for i in 0..j {
            let mut sym = CMatrix::from_element(n, n, zero);
            sym[(i, j)] = c(1.0, 0.0);
            sym[(j, i)] = c(1.0, 0.0);
            basis.push(sym);
            let mut anti = CMatrix::from_element(n, n, zero);
            anti[(i, j)] = c(0.0, -1.0);
            anti[(j, i)] = c(0.0, 1.0);
            basis.push(anti);
        }
        let norm = (2.0 / (j * (j + 1)) as f64).sqrt();
        let mut diag = CMatrix::from_element(n, n, zero);
        for k in 0..j {
            diag[(k, k)] = c(norm, 0.0);
        }
        diag[(j, j)] = c(-(j as f64) * norm, 0.0);
        basis.push(diag);
    }
    basis
}

/// Reject a basis matrix that is not `n × n` Hermitian.
pub fn validate_basis(n: usize, basis: &[CMatrix]) -> Result<()> {
    if basis.is_empty() {
        return Err(Error::Invalid("basis is empty".into()));
    }
    for b in basis {
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.nrows(),
            });
        }
        let dev = linalg::hermitian_max_deviation(b);
        if dev > tolerance::STRUCTURAL {
            return Err(Error::NotHermitian { residual: dev });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm {
    pub coefficient: CompiledExpr,
    pub basis_index: usize,
    pub direction: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianField {
    n: usize,
    hbar: f64,
    basis: Vec<CMatrix>,
    terms: Vec<HamiltonianTerm>,
    spacetime_dim: usize,
}

impl HamiltonianField {
    pub fn new(
        n: usize,
        hbar: f64,
        basis: Vec<CMatrix>,
        terms: Vec<HamiltonianTerm>,
        spacetime_dim: usize,
    ) -> Result<Self> {
        crate::bundle::FibreDimension::new(n)?;
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::Invalid(format!("hbar must be positive, got {hbar}")));
        }
        validate_basis(n, &basis)?;
        for term in &terms {
            if term.basis_index >= basis.len() {
                return Err(Error::Invalid(format!(
                    "basis index {} out of range (basis has {} elements)",
                    term.basis_index,
                    basis.len()
                )));
            }
            if term.direction >= spacetime_dim {
                return Err(Error::Invalid(format!(
                    "direction {} out of range for spacetime dimension {spacetime_dim}",
                    term.direction
                )));
            }
        }
        Ok(Self {
            n,
            hbar,
            basis,
            terms,
            spacetime_dim,
        })
    }

    /// Convenience constructor: parse `(expression, basis index, direction)`
    /// triples against `symbols` using the default basis.
    pub fn from_sources(n: usize, hbar: f64, symbols: &SymbolTable, terms: &[(&str, usize, usize)]) -> Result<Self> {
        let compiled = terms
            .iter()
            .map(|(src, basis_index, direction)| {
                Ok(HamiltonianTerm {
                    coefficient: parse_expression(src)?.compile(symbols)?,
                    basis_index: *basis_index,
                    direction: *direction,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, hbar, gell_mann_basis(n), compiled, symbols.spacetime_dim())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn terms(&self) -> &[HamiltonianTerm] {
        &self.terms
    }

    pub fn spacetime_dim(&self) -> usize {
        self.spacetime_dim
    }

    pub fn uses_param(&self) -> bool {
        self.terms.iter().any(|t| t.coefficient.uses_param())
    }

    pub fn uses_directions(&self) -> bool {
        self.terms.iter().any(|t| t.direction != 0)
    }

    fn accumulate(&self, x: &SpacetimePoint, s: f64, weight: impl Fn(&HamiltonianTerm) -> f64) -> Result<CMatrix> {
        let mut h = linalg::zeros(self.n);
        for term in &self.terms {
            let w = weight(term);
            if w == 0.0 {
                continue;
            }
            let coefficient = term.coefficient.eval(x, s)?;
            h += &self.basis[term.basis_index] * c(coefficient * w, 0.0);
        }
        Ok(h)
    }

    /// `Σ_k c_k(x, s) B_k` over all terms.
    pub fn hamiltonian_at(&self, x: &SpacetimePoint, s: f64) -> Result<CMatrix> {
        self.accumulate(x, s, |_| 1.0)
    }

    /// Sum of the terms along direction `mu`.
    pub fn component_at(&self, x: &SpacetimePoint, s: f64, mu: usize) -> Result<CMatrix> {
        self.accumulate(x, s, |t| if t.direction == mu { 1.0 } else { 0.0 })
    }

    /// `Σ_μ H_μ(x) v^μ` for a tangent vector `v`.
    pub fn contract(&self, x: &SpacetimePoint, s: f64, velocity: &[f64]) -> Result<CMatrix> {
        self.accumulate(x, s, |t| velocity.get(t.direction).copied().unwrap_or(0.0))
    }
}

pub fn hamiltonian_at(h: &HamiltonianField, x: &SpacetimePoint, s: f64) -> Result<CMatrix> {
    h.hamiltonian_at(x, s)
}
