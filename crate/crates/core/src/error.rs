//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building or analyzing an instance.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// The transition matrix has more than one recurrent class, so the
    /// stationary distribution is not unique.
    #[error("stationary distribution is not unique ({classes} recurrent classes)")]
    NonUniqueStationary { classes: usize },

    /// A state carries zero stationary mass, so the time reversal is undefined.
    #[error("stationary distribution vanishes at state {state}; time reversal undefined")]
    DegenerateStationary { state: usize },

    /// The eigensolver did not converge.
    #[error("eigenvalue computation failed: {0}")]
    SpectralFailure(String),

    /// The mixing-time search passed its iteration cap.
    #[error("mixing-time search exceeded cap of {cap} steps (near-periodic or near-reducible chain)")]
    MixingTimeout { cap: u64 },

    /// A scalar argument was outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The mean matrix is numerically singular; no target vector exists.
    #[error("mean matrix is singular (rcond {rcond:.3e}); target vector undefined")]
    SingularMeanMatrix { rcond: f64 },

    /// The mean matrix has an eigenvalue with nonnegative real part.
    #[error("mean matrix is not Hurwitz (max eigenvalue real part {max_re:.6e})")]
    NotHurwitz { max_re: f64 },

    /// The vectorized Lyapunov system could not be solved.
    #[error("Lyapunov equation solve failed: {0}")]
    LyapunovFailure(String),

    /// A trajectory norm crossed the divergence threshold.
    #[error("trajectory diverged at iteration {k} (stepsize too large for this instance)")]
    Diverged { k: u64 },

    /// Richardson-Romberg stepsizes too close to invert the Vandermonde system.
    #[error("degenerate extrapolation scheme: stepsizes {a} and {b} coincide (relative gap < 1e-10)")]
    DegenerateScheme { a: f64, b: f64 },

    /// Summaries fed to the extrapolator do not share checkpoints or stepsizes.
    #[error("summary alignment error: {0}")]
    AlignmentError(String),

    /// The conditional-mean linear system is too ill-conditioned to trust.
    #[error("stationary-mean system is near-singular (rcond {rcond:.3e}); stepsize too large or degenerate instance")]
    OracleSingular { rcond: f64 },

    /// Stepsize at or above the radius of convergence of the series expansion.
    #[error("stepsize {alpha} is not below 1/||Xi|| = {alpha_max}; series expansion not guaranteed")]
    SeriesDivergent { alpha: f64, alpha_max: f64 },

    /// An operation that requires detailed balance was called on a
    /// non-reversible chain.
    #[error("chain is not reversible (max detailed-balance violation {violation:.3e})")]
    NotReversible { violation: f64 },

    /// Feature matrix has linearly dependent columns.
    #[error("feature matrix is rank deficient (smallest singular value {smin:.3e})")]
    RankDeficientFeatures { smin: f64 },

    /// A specification file failed to parse.
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    /// Underlying I/O failure while reading or writing a specification file.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
