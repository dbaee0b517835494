//! Small dense linear-algebra helpers shared by the analysis modules.
//!
//! Everything here operates on `nalgebra` dynamic matrices. Instances are
//! tiny (d up to ~16, lifted systems up to ~2000), so exact dense
//! factorizations are used throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

/// Iteration budget for Schur / symmetric eigensolves. Generous for the
/// matrix sizes in scope.
const EIG_MAX_ITER: usize = 10_000;

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Reciprocal condition number in the 2-norm: smallest over largest
/// singular value. Returns 0 for an exactly singular matrix.
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 {
        0.0
    } else {
        smin / smax
    }
}

/// Smallest singular value.
pub fn smin(m: &DMatrix<f64>) -> f64 {
    m.singular_values().min()
}

/// Complex eigenvalues of a real square matrix via the Schur decomposition.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| Error::SpectralFailure("Schur iteration did not converge".into()))?;
    let eig = schur
        .complex_eigenvalues();
    Ok(eig.iter().copied().collect())
}

/// Eigenvalues of a symmetric matrix (ascending order not guaranteed).
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let sym = nalgebra::SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| Error::SpectralFailure("symmetric eigensolve did not converge".into()))?;
    Ok(sym.eigenvalues.iter().copied().collect())
}

/// Max real part across the eigenvalues of a real square matrix.
pub fn max_eigenvalue_real_part(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Solve `m x = rhs` by LU with partial pivoting, guarding on the
/// reciprocal condition number first.
///
/// `rcond_floor` is the threshold below which the system is reported
/// unsolvable; the caller picks the error to raise.
pub fn solve_checked(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    rcond_floor: f64,
) -> std::result::Result<DVector<f64>, f64> {
    let rc = rcond(m);
    if rc < rcond_floor {
        return Err(rc);
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(rc)
}

/// Kahan-compensated accumulator for a vector sum.
#[derive(Debug, Clone)]
pub struct KahanVec {
    sum: DVector<f64>,
    comp: DVector<f64>,
}

impl KahanVec {
    pub fn zeros(dim: usize) -> Self {
        Self {
            sum: DVector::zeros(dim),
            comp: DVector::zeros(dim),
        }
    }

    pub fn add(&mut self, v: &DVector<f64>) {
        for i in 0..self.sum.len() {
            let y = v[i] - self.comp[i];
            let t = self.sum[i] + y;
            self.comp[i] = (t - self.sum[i]) - y;
            self.sum[i] = t;
        }
    }

    /// Current compensated total.
    pub fn value(&self) -> DVector<f64> {
        &self.sum - &self.comp
    }
}

/// Kahan-compensated scalar accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum - self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -7.0, 0.5]));
        assert!((spectral_norm(&m) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn rcond_identity_is_one() {
        let m = DMatrix::<f64>::identity(4, 4);
        assert!((rcond(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_rotationish_matrix_are_complex() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let eig = eigenvalues(&m).unwrap();
        let mut ims: Vec<f64> = eig.iter().map(|l| l.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + 1.0).abs() < 1e-12 && (ims[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kahan_sums_many_small_terms() {
        let mut acc = Kahan::default();
        for _ in 0..1_000_000 {
            acc.add(0.1);
        }
        assert!((acc.value() - 100_000.0).abs() < 1e-7);
    }
}
