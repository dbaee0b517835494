//! Markovian SGD for least-squares regression.
//!
//! Covariates walk on the square `[-1,1]^2` under an independence
//! Metropolis-Hastings sampler whose target is uniform; responses carry
//! either independent uniform noise or noise equal to the sign of the
//! coordinate sum. The continuous state space has no finite lifting, so
//! the stationary quantities here are measured by Monte Carlo, with the
//! population target estimated from decorrelated samples where no closed
//! form is pinned down.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

use crate::engine::{default_checkpoints, K0Policy, SummaryBuilder, TrajectorySummary, DIVERGENCE_NORM};
use crate::error::{Error, Result};
use crate::extrapolation::{rr_coefficients, rr_extrapolate, RrSummary};
use crate::rng::{stream, StreamId};

/// Burn-in steps applied to the covariate chain before any trajectory.
pub const MH_BURN_IN: u64 = 10_000;

/// Sample count behind the cached sign-noise target estimate.
const SIGN_TARGET_SAMPLES: u64 = 10_000_000;
/// Stride used to decorrelate those samples.
const SIGN_TARGET_STRIDE: u64 = 4;
/// Seed of the reference estimate (fixed: the target is an instance
/// constant, not a per-run quantity).
const SIGN_TARGET_SEED: u64 = 0x5157_4d48_5245_4631;

/// Proposal density of one coordinate: 1/4 on `[-1, 0)`, 3/4 on `[0, 1)`.
pub fn proposal_density(v: f64) -> f64 {
    if v < 0.0 {
        0.25
    } else {
        0.75
    }
}

/// Acceptance probability for moving from `g` to the proposal `h`.
pub fn acceptance_probability(g: [f64; 2], h: [f64; 2]) -> f64 {
    let ratio = (proposal_density(g[0]) * proposal_density(g[1]))
        / (proposal_density(h[0]) * proposal_density(h[1]));
    ratio.min(1.0)
}

/// Independence Metropolis-Hastings sampler targeting the uniform law on
/// `[-1,1]^2`.
#[derive(Debug, Clone)]
pub struct MhSampler {
    /// Current point.
    pub state: [f64; 2],
    rng: ChaCha8Rng,
}

impl MhSampler {
    /// Start from a uniform draw on the square (the target itself), then
    /// let callers burn in per their protocol.
    pub fn new(seed: u64) -> Self {
        let mut rng = stream(seed, StreamId::Covariates);
        let state = [
            2.0 * rng.gen::<f64>() - 1.0,
            2.0 * rng.gen::<f64>() - 1.0,
        ];
        Self { state, rng }
    }

    fn propose_coord(u: f64) -> f64 {
        if u < 0.25 {
            4.0 * u - 1.0
        } else {
            (u - 0.25) / 0.75
        }
    }

    /// Advance one step and return the new state. Consumes exactly three
    /// draws per call so parallel consumers stay aligned.
    pub fn step(&mut self) -> [f64; 2] {
        let h = [
            Self::propose_coord(self.rng.gen::<f64>()),
            Self::propose_coord(self.rng.gen::<f64>()),
        ];
        let accept = acceptance_probability(self.state, h);
        let u = self.rng.gen::<f64>();
        if u < accept {
            self.state = h;
        }
        self.state
    }

    /// Discard `steps` transitions.
    pub fn burn_in(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }
}

/// Additive-noise model of the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    /// Independent uniform noise on `[-1, 1]`.
    IidUniform,
    /// Noise equal to the sign of the coordinate sum (zero on ties).
    SignCorrelated,
}

impl std::fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseModel::IidUniform => write!(f, "iid-uniform"),
            NoiseModel::SignCorrelated => write!(f, "sign-correlated"),
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Reference estimate of the population least-squares minimizer shift for
/// the sign noise: `(E g g^T)^{-1} E[g n]`, from decorrelated samples.
#[derive(Debug, Clone)]
pub struct SignTargetEstimate {
    /// Estimated shift added to the regression vector.
    pub shift: DVector<f64>,
    /// Standard error of the shift norm (block means over the stream).
    pub se: f64,
    /// Samples retained.
    pub samples: u64,
}

/// Estimate the sign-noise target shift from `samples` retained states of
/// a strided reference chain. The moment estimator is order-insensitive;
/// the stride decorrelates the block-means standard error.
pub fn estimate_sign_correction(samples: u64, stride: u64, seed: u64) -> SignTargetEstimate {
    let mut sampler = MhSampler::new(seed);
    sampler.burn_in(MH_BURN_IN);
    const BLOCKS: usize = 10;
    let per_block = samples / BLOCKS as u64;
    let mut block_shifts = Vec::with_capacity(BLOCKS);
    let mut m = [[0.0f64; 2]; 2];
    let mut v = [0.0f64; 2];
    for _ in 0..BLOCKS {
        let mut bm = [[0.0f64; 2]; 2];
        let mut bv = [0.0f64; 2];
        for _ in 0..per_block {
            for _ in 0..stride.saturating_sub(1) {
                sampler.step();
            }
            let g = sampler.step();
            let n = sign(g[0] + g[1]);
            bm[0][0] += g[0] * g[0];
            bm[0][1] += g[0] * g[1];
            bm[1][1] += g[1] * g[1];
            bv[0] += g[0] * n;
            bv[1] += g[1] * n;
        }
        bm[1][0] = bm[0][1];
        let det = bm[0][0] * bm[1][1] - bm[0][1] * bm[1][0];
        let s0 = (bm[1][1] * bv[0] - bm[0][1] * bv[1]) / det;
        let s1 = (bm[0][0] * bv[1] - bm[1][0] * bv[0]) / det;
        block_shifts.push([s0, s1]);
        for i in 0..2 {
            v[i] += bv[i];
            for j in 0..2 {
                m[i][j] += bm[i][j];
            }
        }
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let shift = DVector::from_vec(vec![
        (m[1][1] * v[0] - m[0][1] * v[1]) / det,
        (m[0][0] * v[1] - m[1][0] * v[0]) / det,
    ]);
    let norms: Vec<f64> = block_shifts
        .iter()
        .map(|s| {
            ((s[0] - shift[0]).powi(2) + (s[1] - shift[1]).powi(2)).sqrt()
        })
        .collect();
    let (_, se_mean) = crate::stats::mean_and_se(&norms);
    SignTargetEstimate {
        shift,
        se: se_mean,
        samples: per_block * BLOCKS as u64,
    }
}

fn cached_sign_correction() -> &'static SignTargetEstimate {
    static CACHE: OnceLock<SignTargetEstimate> = OnceLock::new();
    CACHE.get_or_init(|| {
        estimate_sign_correction(SIGN_TARGET_SAMPLES, SIGN_TARGET_STRIDE, SIGN_TARGET_SEED)
    })
}

/// Population least-squares minimizer for a noise model.
///
/// Independent noise leaves the regression vector itself; sign noise
/// shifts it by the cached reference estimate.
pub fn population_target(noise: NoiseModel, theta_reg: &DVector<f64>) -> (DVector<f64>, Option<f64>) {
    match noise {
        NoiseModel::IidUniform => (theta_reg.clone(), None),
        NoiseModel::SignCorrelated => {
            let est = cached_sign_correction();
            (theta_reg + &est.shift, Some(est.se))
        }
    }
}

/// One finished regression run.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdRun {
    pub summary: TrajectorySummary,
    pub noise: NoiseModel,
    /// Target the errors were measured against.
    pub theta_star: DVector<f64>,
    /// Standard error of the target estimate, when it is estimated.
    pub theta_star_se: Option<f64>,
}

struct SgdTrajectory {
    alpha: f64,
    theta: [f64; 2],
    builder: SummaryBuilder,
    diverged: Option<u64>,
}

fn run_noise_fn(
    theta_reg: &DVector<f64>,
    theta_star: &DVector<f64>,
    alphas: &[f64],
    total_iters: u64,
    seed: u64,
    k0_policy: K0Policy,
    mut noise_at: impl FnMut(&mut ChaCha8Rng, [f64; 2]) -> f64,
) -> Vec<std::result::Result<TrajectorySummary, u64>> {
    let checkpoints = default_checkpoints(total_iters);
    let mut sampler = MhSampler::new(seed);
    sampler.burn_in(MH_BURN_IN);
    let mut noise_rng = stream(seed, StreamId::Noise);

    let mut trajs: Vec<SgdTrajectory> = alphas
        .iter()
        .map(|&alpha| SgdTrajectory {
            alpha,
            theta: [0.0, 0.0],
            builder: SummaryBuilder::new(checkpoints.clone(), k0_policy, theta_star.clone()),
            diverged: None,
        })
        .collect();

    let mut scratch = DVector::zeros(2);
    for k in 0..=total_iters {
        for t in trajs.iter_mut() {
            if t.diverged.is_none() {
                scratch[0] = t.theta[0];
                scratch[1] = t.theta[1];
                t.builder.observe(k, &scratch);
            }
        }
        if k < total_iters {
            let g = sampler.step();
            let n = noise_at(&mut noise_rng, g);
            let y = g[0] * theta_reg[0] + g[1] * theta_reg[1] + n;
            for t in trajs.iter_mut() {
                if t.diverged.is_some() {
                    continue;
                }
                let resid = g[0] * t.theta[0] + g[1] * t.theta[1] - y;
                t.theta[0] -= t.alpha * g[0] * resid;
                t.theta[1] -= t.alpha * g[1] * resid;
                if t.theta[0] * t.theta[0] + t.theta[1] * t.theta[1]
                    > DIVERGENCE_NORM * DIVERGENCE_NORM
                {
                    t.diverged = Some(k + 1);
                }
            }
        }
    }

    trajs
        .into_iter()
        .map(|t| match t.diverged {
            Some(k) => Err(k),
            None => Ok(t.builder.finish(seed, t.alpha, false)),
        })
        .collect()
}

fn noise_fn(noise: NoiseModel) -> impl FnMut(&mut ChaCha8Rng, [f64; 2]) -> f64 {
    move |rng, g| match noise {
        // The independent stream is consumed only by this model, so the
        // covariate stream is identical across models for one seed.
        NoiseModel::IidUniform => 2.0 * rng.gen::<f64>() - 1.0,
        NoiseModel::SignCorrelated => sign(g[0] + g[1]),
    }
}

/// Run constant-stepsize SGD on the regression stream.
pub fn regression_run(
    noise: NoiseModel,
    theta_reg: &DVector<f64>,
    alpha: f64,
    total_iters: u64,
    seed: u64,
    k0_policy: K0Policy,
) -> Result<SgdRun> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "stepsize must be finite and nonnegative, got {alpha}"
        )));
    }
    let (theta_star, theta_star_se) = population_target(noise, theta_reg);
    let mut out = run_noise_fn(
        theta_reg,
        &theta_star,
        &[alpha],
        total_iters,
        seed,
        k0_policy,
        noise_fn(noise),
    );
    match out.pop().unwrap() {
        Ok(summary) => Ok(SgdRun {
            summary,
            noise,
            theta_star,
            theta_star_se,
        }),
        Err(k) => Err(Error::Diverged { k }),
    }
}

/// Run several stepsizes against one shared covariate/noise stream.
pub fn regression_multi(
    noise: NoiseModel,
    theta_reg: &DVector<f64>,
    alphas: &[f64],
    total_iters: u64,
    seed: u64,
    k0_policy: K0Policy,
) -> Result<Vec<SgdRun>> {
    let (theta_star, theta_star_se) = population_target(noise, theta_reg);
    let outs = run_noise_fn(
        theta_reg,
        &theta_star,
        alphas,
        total_iters,
        seed,
        k0_policy,
        noise_fn(noise),
    );
    outs.into_iter()
        .map(|out| match out {
            Ok(summary) => Ok(SgdRun {
                summary,
                noise,
                theta_star: theta_star.clone(),
                theta_star_se,
            }),
            Err(k) => Err(Error::Diverged { k }),
        })
        .collect()
}

/// Diminishing-stepsize baseline `alpha_k = alpha0 / (k+1)^power` on the
/// regression stream (comparison curve; raw iterates are what matters).
pub fn regression_diminishing(
    noise: NoiseModel,
    theta_reg: &DVector<f64>,
    alpha0: f64,
    power: f64,
    total_iters: u64,
    seed: u64,
) -> Result<SgdRun> {
    let (theta_star, theta_star_se) = population_target(noise, theta_reg);
    let checkpoints = default_checkpoints(total_iters);
    let mut sampler = MhSampler::new(seed);
    sampler.burn_in(MH_BURN_IN);
    let mut noise_rng = stream(seed, StreamId::Noise);
    let mut noise_at = noise_fn(noise);
    let mut builder = SummaryBuilder::new(checkpoints, K0Policy::Half, theta_star.clone());
    let mut theta = [0.0f64, 0.0];
    let mut scratch = DVector::zeros(2);
    for k in 0..=total_iters {
        scratch[0] = theta[0];
        scratch[1] = theta[1];
        builder.observe(k, &scratch);
        if k < total_iters {
            let g = sampler.step();
            let n = noise_at(&mut noise_rng, g);
            let y = g[0] * theta_reg[0] + g[1] * theta_reg[1] + n;
            let alpha_k = alpha0 / ((k + 1) as f64).powf(power);
            let resid = g[0] * theta[0] + g[1] * theta[1] - y;
            theta[0] -= alpha_k * g[0] * resid;
            theta[1] -= alpha_k * g[1] * resid;
            if theta[0] * theta[0] + theta[1] * theta[1] > DIVERGENCE_NORM * DIVERGENCE_NORM {
                return Err(Error::Diverged { k: k + 1 });
            }
        }
    }
    Ok(SgdRun {
        summary: builder.finish(seed, alpha0, false),
        noise,
        theta_star,
        theta_star_se,
    })
}

/// Run several stepsizes on one shared covariate/noise stream and combine
/// their tail averages by Richardson-Romberg extrapolation.
pub fn rr_regression(
    noise: NoiseModel,
    theta_reg: &DVector<f64>,
    alphas: &[f64],
    total_iters: u64,
    seed: u64,
    k0_policy: K0Policy,
) -> Result<(Vec<SgdRun>, RrSummary)> {
    let scheme = rr_coefficients(alphas)?;
    let runs = regression_multi(noise, theta_reg, alphas, total_iters, seed, k0_policy)?;
    let theta_star = runs[0].theta_star.clone();
    let refs: Vec<&TrajectorySummary> = runs.iter().map(|r| &r.summary).collect();
    let rr = rr_extrapolate(&refs, &scheme, &theta_star)?;
    Ok((runs, rr))
}

/// Thinned post-burn-in marginal samples of the covariate chain, one
/// vector per coordinate.
pub fn marginal_samples(seed: u64, count: usize, stride: u64) -> (Vec<f64>, Vec<f64>) {
    let mut sampler = MhSampler::new(seed);
    sampler.burn_in(MH_BURN_IN);
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..stride.saturating_sub(1) {
            sampler.step();
        }
        let g = sampler.step();
        xs.push(g[0]);
        ys.push(g[1]);
    }
    (xs, ys)
}

/// Kolmogorov-Smirnov statistic of a sample against the uniform law on
/// `[-1, 1]`.
pub fn ks_statistic_uniform(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, &v) in sorted.iter().enumerate() {
        let cdf = (v + 1.0) / 2.0;
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        worst = worst.max(hi).max(lo);
    }
    worst
}

/// One-sample KS critical value at level `p` (asymptotic form).
pub fn ks_critical(n: usize, p: f64) -> f64 {
    ((2.0 / p).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
