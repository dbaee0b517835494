//! LSA problem instances over a finite chain.
//!
//! An instance pairs per-state update maps `(A(x), b(x))` with a chain,
//! derives the stationary means, the target vector, and the Lyapunov
//! certificate used by the stepsize admissibility check.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::chain::{self, FiniteChain};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{stream, StreamId};

/// rcond floor below which the mean matrix is reported singular.
const MEAN_MATRIX_RCOND_FLOOR: f64 = 1e-14;

/// An LSA instance: per-state maps plus derived stationary quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaProblem {
    /// State count (matches the chain).
    pub n: usize,
    /// Iterate dimension.
    pub d: usize,
    /// Per-state update matrices.
    pub a_maps: Vec<DMatrix<f64>>,
    /// Per-state offset vectors.
    pub b_maps: Vec<DVector<f64>>,
    /// Stationary mean of the update matrices.
    pub a_bar: DMatrix<f64>,
    /// Stationary mean of the offsets.
    pub b_bar: DVector<f64>,
    /// Target vector: unique solution of `a_bar theta + b_bar = 0`.
    pub theta_star: DVector<f64>,
    /// Sup of the per-state spectral norms of `A`.
    pub a_max: f64,
    /// Sup of the per-state Euclidean norms of `b`.
    pub b_max: f64,
    /// Set when `a_max` exceeds 1 on an unnormalized build; the boundedness
    /// convention can be restored by rescaling the update.
    pub a_norm_warning: bool,
    /// Optional display label.
    pub label: Option<String>,
}

/// Lyapunov certificate for a Hurwitz mean matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCert {
    /// Symmetric positive-definite solution of
    /// `a_bar^T G + G a_bar = -I`.
    pub gamma: DMatrix<f64>,
    /// Smallest eigenvalue of the certificate.
    pub gamma_min: f64,
    /// Largest eigenvalue of the certificate.
    pub gamma_max: f64,
    /// Variance constant `720 (gamma_max^2 / gamma_min) s_min(a_bar)^-2 b_max^2`.
    pub kappa: f64,
}

/// Admissibility report for one stepsize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityReport {
    /// Mixing time at tolerance `alpha` (clamped below 1 for large alpha).
    pub tau_alpha: u64,
    /// The product `alpha * tau_alpha`.
    pub product: f64,
    /// The strict upper bound `0.05 / (95 gamma_max)`.
    pub bound: f64,
    /// Strictly below the bound.
    pub admissible: bool,
}

/// Build an instance from per-state maps.
///
/// With `normalize` set, every `A(x)` and the mean are jointly divided by
/// the largest per-state spectral norm so `a_max = 1` afterwards. The
/// target solves the mean equation by LU with partial pivoting; singular
/// and non-Hurwitz means are distinct failures.
pub fn build_problem(
    chain: &FiniteChain,
    a_maps: Vec<DMatrix<f64>>,
    b_maps: Vec<DVector<f64>>,
    normalize: bool,
) -> Result<LsaProblem> {
    let n = chain.n;
    if a_maps.len() != n || b_maps.len() != n {
        return Err(Error::InvalidParameter(format!(
            "need {n} per-state maps, got {} matrices and {} vectors",
            a_maps.len(),
            b_maps.len()
        )));
    }
    let d = a_maps[0].nrows();
    if a_maps.iter().any(|a| a.nrows() != d || a.ncols() != d)
        || b_maps.iter().any(|b| b.len() != d)
    {
        return Err(Error::InvalidParameter(
            "per-state maps have inconsistent dimensions".into(),
        ));
    }

    let mut a_maps = a_maps;
    let mut a_bar = DMatrix::zeros(d, d);
    for (x, a) in a_maps.iter().enumerate() {
        a_bar += a * chain.pi[x];
    }
    if normalize {
        let scale = a_maps.iter().map(linalg::spectral_norm).fold(0.0, f64::max);
        if scale > 0.0 {
            for a in &mut a_maps {
                *a /= scale;
            }
            a_bar /= scale;
        }
    }
    let mut b_bar = DVector::zeros(d);
    for (x, b) in b_maps.iter().enumerate() {
        b_bar += b * chain.pi[x];
    }

    let a_max = a_maps.iter().map(linalg::spectral_norm).fold(0.0, f64::max);
    let b_max = b_maps.iter().map(|b| b.norm()).fold(0.0, f64::max);

    let theta_star = linalg::solve_checked(&a_bar, &(-&b_bar), MEAN_MATRIX_RCOND_FLOOR)
        .map_err(|rcond| Error::SingularMeanMatrix { rcond })?;

    let max_re = linalg::max_eigenvalue_real_part(&a_bar)?;
    if max_re >= 0.0 {
        return Err(Error::NotHurwitz { max_re });
    }

    Ok(LsaProblem {
        n,
        d,
        a_maps,
        b_maps,
        a_bar,
        b_bar,
        theta_star,
        a_max,
        b_max,
        a_norm_warning: a_max > 1.0 + 1e-12,
        label: None,
    })
}

impl LsaProblem {
    /// Attach a label.
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Residual of the steady-state equation at the stored target.
    pub fn steady_state_residual(&self) -> f64 {
        (&self.a_bar * &self.theta_star + &self.b_bar).norm()
    }
}

/// Solve the Lyapunov equation `a_bar^T G + G a_bar = -I` through the
/// vectorized `d^2 x d^2` linear system, then extract the extreme
/// eigenvalues and the variance constant.
pub fn lyapunov_certificate(problem: &LsaProblem) -> Result<LyapunovCert> {
    let d = problem.d;
    let a = &problem.a_bar;

    let max_re = linalg::max_eigenvalue_real_part(a)?;
    if max_re >= 0.0 {
        return Err(Error::NotHurwitz { max_re });
    }

    // vec(a^T G + G a) = (I (x) a^T + a^T (x) I) vec(G)
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(d, d);
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(d * d, (-DMatrix::<f64>::identity(d, d)).iter().copied());
    let vec_gamma = linalg::solve_checked(&system, &rhs, 1e-14)
        .map_err(|rc| Error::LyapunovFailure(format!("vectorized system rcond {rc:.3e}")))?;
    let gamma_raw = DMatrix::from_iterator(d, d, vec_gamma.iter().copied());
    let gamma = (&gamma_raw + gamma_raw.transpose()) * 0.5;

    let eigs = linalg::symmetric_eigenvalues(&gamma)?;
    let gamma_min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma_max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if gamma_min <= 0.0 {
        return Err(Error::LyapunovFailure(format!(
            "certificate not positive definite (min eigenvalue {gamma_min:.3e})"
        )));
    }

    let smin = linalg::smin(a);
    let kappa = 720.0 * (gamma_max * gamma_max / gamma_min) * problem.b_max.powi(2) / (smin * smin);

    Ok(LyapunovCert {
        gamma,
        gamma_min,
        gamma_max,
        kappa,
    })
}

impl LyapunovCert {
    /// Residual of the Lyapunov equation at the stored certificate.
    pub fn residual(&self, problem: &LsaProblem) -> f64 {
        let d = problem.d;
        let lhs = problem.a_bar.transpose() * &self.gamma
            + &self.gamma * &problem.a_bar
            + DMatrix::<f64>::identity(d, d);
        linalg::spectral_norm(&lhs)
    }
}

/// Check the strict stepsize condition `alpha * tau_alpha < 0.05 / (95 gamma_max)`.
///
/// The mixing tolerance follows the `eps = alpha` convention; stepsizes at
/// or above 1 are clamped to just below 1 for the mixing computation (any
/// `tau >= 1` already makes such a stepsize inadmissible).
pub fn stepsize_admissible(
    problem: &LsaProblem,
    chain: &FiniteChain,
    cert: &LyapunovCert,
    alpha: f64,
) -> Result<AdmissibilityReport> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "stepsize must be positive, got {alpha}"
        )));
    }
    let eps = alpha.min(1.0 - 1e-9);
    let tau_alpha = chain::mixing_time(chain, &problem.a_maps, &problem.b_maps, eps)?;
    let product = alpha * tau_alpha as f64;
    let bound = 0.05 / (95.0 * cert.gamma_max);
    Ok(AdmissibilityReport {
        tau_alpha,
        product,
        bound,
        admissible: product < bound,
    })
}

/// Random LSA instance: ergodic chain, Hurwitz-shifted normal mean matrix,
/// zero-mean uniform noise maps with the closing state balancing the
/// stationary average, then joint spectral normalization. Deterministic in
/// `(n, d, seed)`.
pub fn random_problem(n: usize, d: usize, seed: u64) -> Result<(FiniteChain, LsaProblem)> {
    if n < 2 || d < 1 {
        return Err(Error::InvalidParameter(format!(
            "need n >= 2 and d >= 1, got n={n}, d={d}"
        )));
    }
    let chain = chain::random_ergodic_chain(n, seed)?;
    let mut rng = stream(seed, StreamId::ProblemGen);

    let mut mean: DMatrix<f64> =
        DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let max_re = linalg::max_eigenvalue_real_part(&mean)?;
    if max_re >= 0.0 {
        mean -= DMatrix::identity(d, d) * (2.0 * max_re);
    }

    // Noise maps with stationary mean zero: the last state closes the
    // weighted sum, divided by its stationary mass.
    let mut noise: Vec<DMatrix<f64>> = (0..n - 1)
        .map(|_| DMatrix::from_fn(d, d, |_, _| rng.gen::<f64>() * 2.0 - 1.0))
        .collect();
    let mut weighted = DMatrix::zeros(d, d);
    for (x, e) in noise.iter().enumerate() {
        weighted += e * chain.pi[x];
    }
    noise.push(-weighted / chain.pi[n - 1]);

    let a_maps: Vec<DMatrix<f64>> = noise.iter().map(|e| &mean + e).collect();
    let b_maps: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0))
        .collect();

    let problem = build_problem(&chain, a_maps, b_maps, true)?;
    Ok((chain, problem))
}
