//! Seeded trajectory simulation.
//!
//! The iteration is `theta_{k+1} = theta_k + alpha (A(x_k) theta_k + b(x_k))`
//! with states sampled from the chain by inverse CDF. Trajectories are
//! bit-deterministic in the seed: the state stream is derived from the seed
//! alone, so worker count and scheduling cannot change any output.
//!
//! Tail averages are maintained by compensated streaming prefix sums; the
//! burn-in `k/2` variant reuses the prefix sum recorded at the checkpoint
//! nearest `k/2`, trading an `O(spacing/k)` window offset (recorded in the
//! summary) for `O(checkpoints)` memory.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::{self, sample_cumulative, FiniteChain};
use crate::error::{Error, Result};
use crate::linalg::{Kahan, KahanVec};
use crate::problem::{lyapunov_certificate, LsaProblem, LyapunovCert};
use crate::rng::{stream, StreamId};
use crate::stats;

/// Norm threshold past which a trajectory is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Burn-in rule for tail averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum K0Policy {
    /// Average over `[k0, k)` for a fixed burn-in.
    Fixed(u64),
    /// Average over `[k0(k), k)` with `k0(k)` the recorded checkpoint
    /// nearest `k/2`.
    Half,
}

impl std::fmt::Display for K0Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            K0Policy::Fixed(k0) => write!(f, "fixed:{k0}"),
            K0Policy::Half => write!(f, "half"),
        }
    }
}

/// A seeded simulation request.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Constant stepsize (zero allowed for diagnostics; negative rejected).
    pub alpha: f64,
    /// Total iteration count.
    pub total_iters: u64,
    /// Burn-in rule.
    pub k0_policy: K0Policy,
    /// Stream seed.
    pub seed: u64,
    /// Initial iterate; zero vector when absent.
    pub theta0: Option<DVector<f64>>,
    /// Recording points; empty means ~50 log-spaced points per decade.
    pub checkpoints: Vec<u64>,
    /// Start the chain at a fixed state instead of a stationary draw.
    pub fixed_start: Option<usize>,
}

impl RunConfig {
    /// Config with default checkpoints and a zero start.
    pub fn new(alpha: f64, total_iters: u64, k0_policy: K0Policy, seed: u64) -> Self {
        Self {
            alpha,
            total_iters,
            k0_policy,
            seed,
            theta0: None,
            checkpoints: Vec::new(),
            fixed_start: None,
        }
    }

    fn validate(&self, d: usize, n: usize) -> Result<Vec<u64>> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "stepsize must be finite and nonnegative, got {}",
                self.alpha
            )));
        }
        if self.total_iters == 0 {
            return Err(Error::InvalidParameter("need at least one iteration".into()));
        }
        if let Some(t0) = &self.theta0 {
            if t0.len() != d {
                return Err(Error::InvalidParameter(format!(
                    "initial iterate has dimension {}, expected {d}",
                    t0.len()
                )));
            }
        }
        if let Some(x0) = self.fixed_start {
            if x0 >= n {
                return Err(Error::InvalidParameter(format!(
                    "fixed start state {x0} out of range for {n} states"
                )));
            }
        }
        let cps = if self.checkpoints.is_empty() {
            default_checkpoints(self.total_iters)
        } else {
            self.checkpoints.clone()
        };
        if cps[0] < 1
            || cps.windows(2).any(|w| w[0] >= w[1])
            || *cps.last().unwrap() > self.total_iters
        {
            return Err(Error::InvalidParameter(
                "checkpoints must be strictly increasing, start at >= 1, end <= total iterations"
                    .into(),
            ));
        }
        Ok(cps)
    }
}

/// ~50 log-spaced checkpoints per decade, always ending at `total`.
pub fn default_checkpoints(total: u64) -> Vec<u64> {
    let mut cps = Vec::new();
    let mut last = 0u64;
    let mut j = 0u32;
    loop {
        let k = 10f64.powf(j as f64 / 50.0).round() as u64;
        if k > total {
            break;
        }
        if k > last {
            cps.push(k);
            last = k;
        }
        j += 1;
    }
    if cps.last() != Some(&total) {
        cps.push(total);
    }
    cps
}

/// Checkpointed error curves of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    /// Stream seed.
    pub seed: u64,
    /// Stepsize.
    pub alpha: f64,
    /// Burn-in rule used.
    pub k0_policy: K0Policy,
    /// Chain started from a fixed state rather than a stationary draw.
    pub nonstationary_start: bool,
    /// Recording points.
    pub checkpoints: Vec<u64>,
    /// Start of the averaging window actually used at each checkpoint.
    pub window_start: Vec<u64>,
    /// Raw iterate at each checkpoint.
    pub theta: Vec<DVector<f64>>,
    /// Tail average at each checkpoint.
    pub theta_bar: Vec<DVector<f64>>,
    /// `|theta_k - theta_star|` per checkpoint.
    pub err_raw: Vec<f64>,
    /// `|theta_bar_k - theta_star|` per checkpoint.
    pub err_ta: Vec<f64>,
}

impl TrajectorySummary {
    /// Tail-average error at the final checkpoint.
    pub fn final_err_ta(&self) -> f64 {
        *self.err_ta.last().unwrap()
    }

    /// Raw error at the final checkpoint.
    pub fn final_err_raw(&self) -> f64 {
        *self.err_raw.last().unwrap()
    }

    /// Median tail-average error over the last half decade of checkpoints.
    pub fn plateau(&self) -> f64 {
        stats::plateau(&self.checkpoints, &self.err_ta)
    }
}

/// Streaming bookkeeping shared by the finite-chain and SGD simulators.
#[derive(Debug)]
pub struct SummaryBuilder {
    checkpoints: Vec<u64>,
    next: usize,
    policy: K0Policy,
    theta_star: DVector<f64>,
    sum: KahanVec,
    prefix_records: Vec<(u64, DVector<f64>)>,
    sum_at_k0: Option<DVector<f64>>,
    window_start: Vec<u64>,
    theta: Vec<DVector<f64>>,
    theta_bar: Vec<DVector<f64>>,
    err_raw: Vec<f64>,
    err_ta: Vec<f64>,
}

impl SummaryBuilder {
    pub fn new(checkpoints: Vec<u64>, policy: K0Policy, theta_star: DVector<f64>) -> Self {
        let d = theta_star.len();
        Self {
            checkpoints,
            next: 0,
            policy,
            theta_star,
            sum: KahanVec::zeros(d),
            prefix_records: vec![(0, DVector::zeros(d))],
            sum_at_k0: None,
            window_start: Vec::new(),
            theta: Vec::new(),
            theta_bar: Vec::new(),
            err_raw: Vec::new(),
            err_ta: Vec::new(),
        }
    }

    /// Feed `theta_k`; call once per iteration index `k = 0..=K`, before
    /// the update that produces `theta_{k+1}`.
    pub fn observe(&mut self, k: u64, theta: &DVector<f64>) {
        if let K0Policy::Fixed(k0) = self.policy {
            if k == k0 {
                self.sum_at_k0 = Some(self.sum.value());
            }
        }
        if self.next < self.checkpoints.len() && self.checkpoints[self.next] == k {
            self.record(k, theta);
            self.next += 1;
        }
        self.sum.add(theta);
    }

    fn record(&mut self, k: u64, theta: &DVector<f64>) {
        let prefix = self.sum.value();
        let (start, bar) = match self.policy {
            K0Policy::Half => {
                let half = k as f64 / 2.0;
                let (rk, rs) = self
                    .prefix_records
                    .iter()
                    .min_by(|a, b| {
                        (a.0 as f64 - half)
                            .abs()
                            .total_cmp(&(b.0 as f64 - half).abs())
                    })
                    .expect("record list holds at least the origin");
                let span = (k - rk) as f64;
                (*rk, (&prefix - rs) / span)
            }
            K0Policy::Fixed(k0) if k > k0 => {
                let base = self
                    .sum_at_k0
                    .as_ref()
                    .expect("prefix at fixed burn-in was captured");
                let span = (k - k0) as f64;
                (k0, (&prefix - base) / span)
            }
            // Empty averaging window: fall back to the raw iterate.
            K0Policy::Fixed(_) => (k, theta.clone()),
        };
        self.window_start.push(start);
        self.err_raw.push((theta - &self.theta_star).norm());
        self.err_ta.push((&bar - &self.theta_star).norm());
        self.theta.push(theta.clone());
        self.theta_bar.push(bar);
        if matches!(self.policy, K0Policy::Half) {
            self.prefix_records.push((k, prefix));
        }
    }

    pub fn finish(
        self,
        seed: u64,
        alpha: f64,
        nonstationary_start: bool,
    ) -> TrajectorySummary {
        TrajectorySummary {
            seed,
            alpha,
            k0_policy: self.policy,
            nonstationary_start,
            checkpoints: self.checkpoints,
            window_start: self.window_start,
            theta: self.theta,
            theta_bar: self.theta_bar,
            err_raw: self.err_raw,
            err_ta: self.err_ta,
        }
    }
}

/// Inverse-CDF state stream for a chain.
pub struct StateStream {
    rng: ChaCha8Rng,
    cum_rows: Vec<Vec<f64>>,
    current: usize,
}

impl StateStream {
    /// Derive the stream for `seed`; the start state is a stationary draw
    /// unless pinned.
    pub fn new(chain: &FiniteChain, seed: u64, fixed_start: Option<usize>) -> Self {
        let mut rng = stream(seed, StreamId::ChainStates);
        let current = match fixed_start {
            Some(x0) => x0,
            None => sample_cumulative(&chain.cumulative_pi(), rng.gen::<f64>()),
        };
        Self {
            rng,
            cum_rows: chain.cumulative_rows(),
            current,
        }
    }

    /// Return `x_k` and advance to `x_{k+1}`.
    pub fn step(&mut self) -> usize {
        let x = self.current;
        self.current = sample_cumulative(&self.cum_rows[x], self.rng.gen::<f64>());
        x
    }
}

struct Trajectory {
    alpha: f64,
    theta: DVector<f64>,
    scratch: DVector<f64>,
    builder: SummaryBuilder,
    diverged: Option<u64>,
}

impl Trajectory {
    fn update(&mut self, problem: &LsaProblem, x: usize, k: u64) {
        if self.diverged.is_some() {
            return;
        }
        self.scratch.copy_from(&problem.b_maps[x]);
        self.scratch.gemv(1.0, &problem.a_maps[x], &self.theta, 1.0);
        self.theta.axpy(self.alpha, &self.scratch, 1.0);
        if self.theta.norm_squared() > DIVERGENCE_NORM * DIVERGENCE_NORM {
            self.diverged = Some(k + 1);
        }
    }
}

fn run_shared_stream(
    problem: &LsaProblem,
    chain: &FiniteChain,
    configs: &[RunConfig],
) -> Result<Vec<Result<TrajectorySummary>>> {
    let first = &configs[0];
    let total = first.total_iters;
    let mut trajs = Vec::with_capacity(configs.len());
    let mut checkpoints = Vec::new();
    for cfg in configs {
        let cps = cfg.validate(problem.d, chain.n)?;
        if cfg.seed != first.seed
            || cfg.total_iters != total
            || cfg.fixed_start != first.fixed_start
        {
            return Err(Error::InvalidParameter(
                "shared-stream runs must agree on seed, length, and start".into(),
            ));
        }
        let theta0 = cfg
            .theta0
            .clone()
            .unwrap_or_else(|| DVector::zeros(problem.d));
        trajs.push(Trajectory {
            alpha: cfg.alpha,
            theta: theta0,
            scratch: DVector::zeros(problem.d),
            builder: SummaryBuilder::new(cps.clone(), cfg.k0_policy, problem.theta_star.clone()),
            diverged: None,
        });
        checkpoints = cps;
    }
    let _ = checkpoints;

    let mut states = StateStream::new(chain, first.seed, first.fixed_start);
    for k in 0..=total {
        for t in trajs.iter_mut() {
            if t.diverged.is_none() {
                t.builder.observe(k, &t.theta);
            }
        }
        if k < total {
            let x = states.step();
            for t in trajs.iter_mut() {
                t.update(problem, x, k);
            }
        }
    }

    Ok(trajs
        .into_iter()
        .zip(configs)
        .map(|(t, cfg)| match t.diverged {
            Some(k) => Err(Error::Diverged { k }),
            None => Ok(t.builder.finish(cfg.seed, cfg.alpha, cfg.fixed_start.is_some())),
        })
        .collect())
}

/// Run one seeded trajectory.
pub fn simulate(
    problem: &LsaProblem,
    chain: &FiniteChain,
    config: &RunConfig,
) -> Result<TrajectorySummary> {
    run_shared_stream(problem, chain, std::slice::from_ref(config))?
        .pop()
        .expect("one summary per config")
}

/// Run several stepsizes against one shared state stream.
///
/// Outputs are ordered like the input stepsizes; a divergence in one
/// trajectory does not abort the others. Trajectories are advanced in
/// lockstep, which is bit-identical to running them one at a time because
/// each consumes the identical stream.
pub fn simulate_multi(
    problem: &LsaProblem,
    chain: &FiniteChain,
    alphas: &[f64],
    total_iters: u64,
    seed: u64,
    k0_policy: K0Policy,
) -> Result<Vec<Result<TrajectorySummary>>> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("need at least one stepsize".into()));
    }
    for (i, a) in alphas.iter().enumerate() {
        for b in alphas.iter().skip(i + 1) {
            if (a - b).abs() <= 1e-10 * a.abs().max(b.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "stepsizes must be distinct, got {a} and {b}"
                )));
            }
        }
    }
    let configs: Vec<RunConfig> = alphas
        .iter()
        .map(|&alpha| RunConfig::new(alpha, total_iters, k0_policy, seed))
        .collect();
    run_shared_stream(problem, chain, &configs)
}

/// Diminishing-stepsize baseline `alpha_k = alpha0 / (k+1)^power`.
///
/// Used only as a comparison curve; the raw iterates are the quantity of
/// interest.
pub fn simulate_diminishing(
    problem: &LsaProblem,
    chain: &FiniteChain,
    alpha0: f64,
    power: f64,
    total_iters: u64,
    seed: u64,
) -> Result<TrajectorySummary> {
    let config = RunConfig::new(alpha0, total_iters, K0Policy::Half, seed);
    let cps = config.validate(problem.d, chain.n)?;
    let mut builder = SummaryBuilder::new(cps, K0Policy::Half, problem.theta_star.clone());
    let mut states = StateStream::new(chain, seed, None);
    let mut theta = DVector::zeros(problem.d);
    let mut scratch = DVector::zeros(problem.d);
    for k in 0..=total_iters {
        builder.observe(k, &theta);
        if k < total_iters {
            let x = states.step();
            let alpha_k = alpha0 / ((k + 1) as f64).powf(power);
            scratch.copy_from(&problem.b_maps[x]);
            scratch.gemv(1.0, &problem.a_maps[x], &theta, 1.0);
            theta.axpy(alpha_k, &scratch, 1.0);
            if theta.norm_squared() > DIVERGENCE_NORM * DIVERGENCE_NORM {
                return Err(Error::Diverged { k: k + 1 });
            }
        }
    }
    Ok(builder.finish(seed, alpha0, false))
}

/// Mean squared coupled difference per checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSummary {
    /// Recording points (0 included so the initial separation is visible).
    pub checkpoints: Vec<u64>,
    /// Mean of the squared difference norm over the duos.
    pub mean_sq_diff: Vec<f64>,
    /// Geometric rate fitted on `log m_k` over checkpoints at or past the
    /// mixing time; absent when every recorded value is zero.
    pub rho_hat: Option<f64>,
    /// Delta-method standard error of the fitted rate.
    pub rho_se: Option<f64>,
    /// Mixing time at tolerance `alpha` used as the fit's left edge.
    pub tau: u64,
    /// Number of duos.
    pub pairs: u64,
    /// Strict stepsize condition held.
    pub admissible: bool,
}

/// Simulate coupled trajectory duos sharing their state stream.
///
/// Within a duo both iterates see identical states, so their difference
/// follows the multiplicative recursion `w_{k+1} = (I + alpha A(x_k)) w_k`,
/// which is what is iterated here (it is exact and offset-free).
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled(
    problem: &LsaProblem,
    chain: &FiniteChain,
    alpha: f64,
    total_iters: u64,
    seed: u64,
    theta0_a: &DVector<f64>,
    theta0_b: &DVector<f64>,
    pairs: u64,
) -> Result<CouplingSummary> {
    simulate_coupled_at(
        problem,
        chain,
        alpha,
        total_iters,
        seed,
        theta0_a,
        theta0_b,
        pairs,
        &[],
    )
}

/// [`simulate_coupled`] with explicit checkpoints (empty for defaults).
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled_at(
    problem: &LsaProblem,
    chain: &FiniteChain,
    alpha: f64,
    total_iters: u64,
    seed: u64,
    theta0_a: &DVector<f64>,
    theta0_b: &DVector<f64>,
    pairs: u64,
    checkpoints: &[u64],
) -> Result<CouplingSummary> {
    if alpha <= 0.0 || pairs == 0 {
        return Err(Error::InvalidParameter(
            "need a positive stepsize and at least one duo".into(),
        ));
    }
    let cert = lyapunov_certificate(problem)?;
    let report =
        crate::problem::stepsize_admissible(problem, chain, &cert, alpha)?;
    let tau = report.tau_alpha;

    let mut cps = if checkpoints.is_empty() {
        default_checkpoints(total_iters)
    } else {
        checkpoints.to_vec()
    };
    if cps.first() != Some(&0) {
        cps.insert(0, 0);
    }
    if cps.windows(2).any(|w| w[0] >= w[1]) || *cps.last().unwrap() > total_iters {
        return Err(Error::InvalidParameter(
            "coupling checkpoints must be strictly increasing and end <= total iterations".into(),
        ));
    }

    let omega0 = theta0_a - theta0_b;
    let per_pair: Vec<Vec<f64>> = (0..pairs)
        .into_par_iter()
        .map(|p| -> Result<Vec<f64>> {
            let mut rng = stream(seed, StreamId::CouplingPair(p));
            let cum_pi = chain.cumulative_pi();
            let cum_rows = chain.cumulative_rows();
            let mut x = sample_cumulative(&cum_pi, rng.gen::<f64>());
            let mut omega = omega0.clone();
            let mut scratch = DVector::zeros(problem.d);
            let mut out = Vec::with_capacity(cps.len());
            let mut next = 0usize;
            for k in 0..=total_iters {
                if next < cps.len() && cps[next] == k {
                    out.push(omega.norm_squared());
                    next += 1;
                }
                if k < total_iters {
                    scratch.gemv(1.0, &problem.a_maps[x], &omega, 0.0);
                    omega.axpy(alpha, &scratch, 1.0);
                    if omega.norm_squared() > DIVERGENCE_NORM * DIVERGENCE_NORM {
                        return Err(Error::Diverged { k: k + 1 });
                    }
                    x = sample_cumulative(&cum_rows[x], rng.gen::<f64>());
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    // Order-insensitive aggregation: fixed pair order, compensated sums.
    let mut mean_sq_diff = Vec::with_capacity(cps.len());
    for i in 0..cps.len() {
        let mut acc = Kahan::default();
        for row in &per_pair {
            acc.add(row[i]);
        }
        mean_sq_diff.push(acc.value() / pairs as f64);
    }

    let fit_points: Vec<(f64, f64)> = cps
        .iter()
        .zip(&mean_sq_diff)
        .filter(|(k, m)| **k >= tau && **m > 0.0)
        .map(|(k, m)| (*k as f64, m.ln()))
        .collect();
    let (rho_hat, rho_se) = if fit_points.len() >= 2 {
        let fit = stats::ols(&fit_points);
        let rho = fit.slope.exp();
        (Some(rho), Some(rho * fit.slope_se))
    } else {
        (None, None)
    };

    Ok(CouplingSummary {
        checkpoints: cps,
        mean_sq_diff,
        rho_hat,
        rho_se,
        tau,
        pairs,
        admissible: report.admissible,
    })
}

/// Monte Carlo mean squared error across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MseSummary {
    pub checkpoints: Vec<u64>,
    /// Mean over seeds of the squared raw error.
    pub mse: Vec<f64>,
    /// Standard error of that mean.
    pub se: Vec<f64>,
    pub seeds: u64,
}

/// Run `seeds` trajectories (seeds `base_seed..base_seed+seeds`) and
/// aggregate the squared raw error per checkpoint.
pub fn mse_over_seeds(
    problem: &LsaProblem,
    chain: &FiniteChain,
    base: &RunConfig,
    seeds: u64,
) -> Result<MseSummary> {
    if seeds == 0 {
        return Err(Error::InvalidParameter("need at least one seed".into()));
    }
    let summaries: Vec<TrajectorySummary> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let mut cfg = base.clone();
            cfg.seed = base.seed + i;
            simulate(problem, chain, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let cps = summaries[0].checkpoints.clone();
    let mut mse = Vec::with_capacity(cps.len());
    let mut se = Vec::with_capacity(cps.len());
    for i in 0..cps.len() {
        let samples: Vec<f64> = summaries.iter().map(|s| s.err_raw[i].powi(2)).collect();
        let (m, s) = stats::mean_and_se(&samples);
        mse.push(m);
        se.push(s);
    }
    Ok(MseSummary {
        checkpoints: cps,
        mse,
        se,
        seeds,
    })
}

/// One row of the mean-squared-error bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseCheckRow {
    pub k: u64,
    pub mse: f64,
    pub bound: f64,
    pub rel_se: f64,
    pub pass: bool,
}

/// Evaluate the finite-time bound
/// `10 (gmax/gmin) (1 - 0.9 a/gmax)^k (|theta0 - theta*|^2 + smin^-2 bmax^2) + a tau kappa`
/// at every checkpoint at or past the mixing time and compare against the
/// Monte Carlo estimate inflated by three relative standard errors.
pub fn mse_bound_check(
    problem: &LsaProblem,
    chain: &FiniteChain,
    cert: &LyapunovCert,
    alpha: f64,
    theta0: &DVector<f64>,
    summary: &MseSummary,
) -> Result<Vec<MseCheckRow>> {
    let eps = alpha.min(1.0 - 1e-9);
    let tau = chain::mixing_time(chain, &problem.a_maps, &problem.b_maps, eps)?;
    let smin = crate::linalg::smin(&problem.a_bar);
    let front = 10.0 * cert.gamma_max / cert.gamma_min;
    let offset = (theta0 - &problem.theta_star).norm_squared()
        + problem.b_max.powi(2) / (smin * smin);
    let rate = 1.0 - 0.9 * alpha / cert.gamma_max;
    let tail = alpha * tau as f64 * cert.kappa;

    Ok(summary
        .checkpoints
        .iter()
        .zip(summary.mse.iter().zip(&summary.se))
        .filter(|(k, _)| **k >= tau)
        .map(|(&k, (&mse, &se))| {
            let bound = front * rate.powf(k as f64) * offset + tail;
            let rel_se = if mse > 0.0 { se / mse } else { 0.0 };
            MseCheckRow {
                k,
                mse,
                bound,
                rel_se,
                pass: mse <= bound * (1.0 + 3.0 * rel_se),
            }
        })
        .collect())
}
