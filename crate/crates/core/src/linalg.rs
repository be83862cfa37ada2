//! Dense complex matrix helpers on top of `nalgebra`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(n: usize) -> CMatrix {
    CMatrix::zeros(n, n)
}

/// Build a square matrix from row-major real and imaginary parts.
pub fn from_parts(re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> Result<CMatrix> {
    let n = re.len();
    if n == 0 {
        return Err(Error::Invalid("empty matrix".into()));
    }
    for row in re {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
    }
    if let Some(im) = im {
        if im.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: im.len(),
            });
        }
        for row in im {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
        }
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        c(re[i][j], im.map(|m| m[i][j]).unwrap_or(0.0))
    }))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn distance(a: &CMatrix, b: &CMatrix) -> f64 {
    frobenius(&(a - b))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn hermitian_residual(m: &CMatrix) -> f64 {
    frobenius(&(m - m.adjoint()))
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermitian_max_deviation(m: &CMatrix) -> f64 {
    let adj = m.adjoint();
    m.iter()
        .zip(adj.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn min_singular_value(m: &CMatrix) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    m.clone().try_inverse().ok_or(Error::Singular)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let mut ev: Vec<f64> = nalgebra::linalg::SymmetricEigen::new(h)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of a general complex matrix, sorted by real then imaginary part.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let schur = nalgebra::linalg::Schur::new(m.clone());
    let ev = schur
        .eigenvalues()
        .ok_or_else(|| Error::Invalid("Schur decomposition did not converge".into()))?;
    let mut ev: Vec<C64> = ev.iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

pub fn vector_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commutator_of_pauli_pair() {
        let sx = from_parts(&[vec![0.0, 1.0], vec![1.0, 0.0]], None).unwrap();
        let sy = from_parts(
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            Some(&[vec![0.0, -1.0], vec![1.0, 0.0]]),
        )
        .unwrap();
        let sz = from_parts(&[vec![1.0, 0.0], vec![0.0, -1.0]], None).unwrap();
        let lhs = commutator(&sx, &sy);
        assert!(distance(&lhs, &(sz * c(0.0, 2.0))) < 1e-15);
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(from_parts(&[vec![1.0, 0.0], vec![0.0]], None).is_err());
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = from_parts(&[vec![3.0, 0.0], vec![0.0, -1.0]], None).unwrap();
        let ev = eigenvalues(&m).unwrap();
        assert!((ev[0].re + 1.0).abs() < 1e-12 && (ev[1].re - 3.0).abs() < 1e-12);
        assert_eq!(hermitian_eigenvalues(&m), vec![-1.0, 3.0]);
    }
}
