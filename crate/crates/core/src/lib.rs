//! Constant-stepsize linear stochastic approximation driven by finite
//! Markov chains.
//!
//! The crate simulates the iteration
//! `theta_{k+1} = theta_k + alpha (A(x_k) theta_k + b(x_k))` over a seeded
//! state stream, and, on finite state spaces, computes the stationary mean
//! of the iterates *exactly* by dense linear algebra: the conditional-mean
//! system, the stepsize expansion of the stationary offset, and the
//! reduction achieved by tail averaging and Richardson-Romberg
//! extrapolation across stepsizes.
//!
//! Module map:
//!
//! * [`chain`] — finite chains: stationary distributions, time reversal,
//!   spectral gap, mixing times, interpolation toward independent
//!   sampling, random generation.
//! * [`problem`] — instances `(A, b)` with targets, Lyapunov
//!   certificates, stepsize admissibility.
//! * [`engine`] — seeded trajectories, streaming tail averages, coupled
//!   pairs, multi-stepsize runs on one stream.
//! * [`extrapolation`] — stepsize-combination weights and curves.
//! * [`bias`] — exact stationary means and expansion coefficients on the
//!   lifted state space.
//! * [`td`] — temporal-difference evaluation as an instance on pair
//!   states, with the semi-simulator variant.
//! * [`sgd`] — Markovian least-squares regression driven by a
//!   Metropolis-Hastings covariate stream.
//! * [`io`] — plain-text instance formats.

pub mod bias;
pub mod chain;
pub mod engine;
pub mod error;
pub mod extrapolation;
pub mod io;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod sgd;
pub mod stats;
pub mod td;

pub use chain::{FiniteChain, SpectralReport};
pub use engine::{CouplingSummary, K0Policy, RunConfig, TrajectorySummary};
pub use error::{Error, Result};
pub use extrapolation::{RrScheme, RrSummary};
pub use problem::{AdmissibilityReport, LsaProblem, LyapunovCert};
