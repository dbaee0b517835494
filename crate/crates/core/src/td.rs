//! Temporal-difference policy evaluation as an LSA instance.
//!
//! The data stream is the pair of consecutive states `(s_k, s_{k+1})`, so
//! the instance lives on a pair state space; pairs the kernel cannot
//! produce carry no stationary mass and are pruned. The semi-simulator
//! variant redraws the bootstrap state independently at each step, which
//! changes the pair kernel but not the per-pair update maps.

use nalgebra::{DMatrix, DVector};

use crate::chain::FiniteChain;
use crate::error::{Error, Result};
use crate::problem::{build_problem, LsaProblem};

/// A Markov reward process.
#[derive(Debug, Clone, PartialEq)]
pub struct Mrp {
    /// State count.
    pub n_states: usize,
    /// Row-stochastic state kernel.
    pub kernel: DMatrix<f64>,
    /// One reward per state.
    pub rewards: DVector<f64>,
    /// Discount in `[0, 1)`.
    pub gamma: f64,
    /// Optional display label.
    pub label: Option<String>,
}

impl Mrp {
    pub fn new(kernel: DMatrix<f64>, rewards: DVector<f64>, gamma: f64) -> Result<Self> {
        let n_states = kernel.nrows();
        if rewards.len() != n_states {
            return Err(Error::InvalidParameter(format!(
                "{} rewards for {n_states} states",
                rewards.len()
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "discount must lie in [0,1), got {gamma}"
            )));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidParameter("rewards must be finite".into()));
        }
        // Kernel validity is established by the chain construction below.
        FiniteChain::new(kernel.clone())?;
        Ok(Self {
            n_states,
            kernel,
            rewards,
            gamma,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// The underlying state chain.
    pub fn state_chain(&self) -> Result<FiniteChain> {
        FiniteChain::new(self.kernel.clone())
    }

    /// Exact value function `(I - gamma P)^{-1} r`.
    pub fn value_function(&self) -> Result<DVector<f64>> {
        let system = DMatrix::<f64>::identity(self.n_states, self.n_states)
            - &self.kernel * self.gamma;
        crate::linalg::solve_checked(&system, &self.rewards, 1e-14)
            .map_err(|rcond| Error::SingularMeanMatrix { rcond })
    }
}

/// The four-state chain induced by the right-right-left-left policy on the
/// classic problematic decision process: rewards `(0, 1, 3, 0)`, discount
/// `0.9`, and a 0.9/0.1 split between the intended and opposite move with
/// reflection at the ends.
pub fn problematic_mrp() -> Mrp {
    let kernel = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.1, 0.9, 0.0, 0.0, //
            0.1, 0.0, 0.9, 0.0, //
            0.0, 0.9, 0.0, 0.1, //
            0.0, 0.0, 0.9, 0.1, //
        ],
    );
    Mrp::new(kernel, DVector::from_vec(vec![0.0, 1.0, 3.0, 0.0]), 0.9)
        .expect("built-in process is valid")
        .with_label("problematic")
}

/// A feature map: row `s` holds the feature vector of state `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub matrix: DMatrix<f64>,
}

impl FeatureMap {
    /// Validate full column rank.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let smin = crate::linalg::smin(&matrix);
        if smin <= 1e-10 {
            return Err(Error::RankDeficientFeatures { smin });
        }
        Ok(Self { matrix })
    }

    /// Indicator features: the identity map on `n` states.
    pub fn tabular(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    /// Column-sum normalization `phi(s)_i <- phi(s)_i / sum_s phi(s)_i`.
    pub fn column_normalized(raw: DMatrix<f64>) -> Result<Self> {
        let mut m = raw;
        for j in 0..m.ncols() {
            let total: f64 = m.column(j).iter().sum();
            if total.abs() < 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "feature column {j} sums to zero; cannot normalize"
                )));
            }
            for i in 0..m.nrows() {
                m[(i, j)] /= total;
            }
        }
        Self::new(m)
    }

    /// Global rescale so the largest per-state feature norm is
    /// `1/sqrt(1 + gamma)`. Equivalent to rescaling the stepsize, so it is
    /// opt-in rather than applied by default.
    pub fn rescaled_to_unit_bound(&self, gamma: f64) -> Self {
        let phi_max = (0..self.matrix.nrows())
            .map(|s| self.matrix.row(s).norm())
            .fold(0.0, f64::max);
        let target = 1.0 / (1.0 + gamma).sqrt();
        Self {
            matrix: &self.matrix * (target / phi_max),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn row(&self, s: usize) -> DVector<f64> {
        self.matrix.row(s).transpose()
    }
}

/// Quadratic features `(1, s, s^2)` for the four-state process, with the
/// column-sum normalization applied.
pub fn problematic_features() -> FeatureMap {
    let raw = DMatrix::from_fn(4, 3, |s, j| ((s + 1) as f64).powi(j as i32));
    FeatureMap::column_normalized(raw).expect("quadratic features have full rank")
}

/// Pair state space with its index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpace {
    /// Retained pairs in lexicographic order.
    pub pairs: Vec<(usize, usize)>,
}

impl PairSpace {
    /// Pairs with positive one-step probability; others carry no
    /// stationary mass.
    pub fn from_kernel(kernel: &DMatrix<f64>) -> Self {
        let n = kernel.nrows();
        let mut pairs = Vec::new();
        for s in 0..n {
            for t in 0..n {
                if kernel[(s, t)] > 0.0 {
                    pairs.push((s, t));
                }
            }
        }
        Self { pairs }
    }

    pub fn index_of(&self, pair: (usize, usize)) -> Option<usize> {
        self.pairs.binary_search(&pair).ok()
    }
}

fn pair_update_maps(
    space: &PairSpace,
    features: &FeatureMap,
    rewards: &DVector<f64>,
    gamma: f64,
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let a_maps = space
        .pairs
        .iter()
        .map(|&(s, t)| {
            let phi_s = features.row(s);
            let phi_t = features.row(t);
            &phi_s * (&phi_t * gamma - &phi_s).transpose()
        })
        .collect();
    let b_maps = space
        .pairs
        .iter()
        .map(|&(s, _)| features.row(s) * rewards[s])
        .collect();
    (a_maps, b_maps)
}

fn pair_stationary(space: &PairSpace, chain: &FiniteChain) -> DVector<f64> {
    DVector::from_iterator(
        space.pairs.len(),
        space
            .pairs
            .iter()
            .map(|&(s, t)| chain.pi[s] * chain.kernel[(s, t)]),
    )
}

fn check_negative_definite(problem: &LsaProblem) -> Result<()> {
    let sym = -(problem.a_bar.clone() + problem.a_bar.transpose()) * 0.5;
    let min_eig = crate::linalg::symmetric_eigenvalues(&sym)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(Error::NotHurwitz { max_re: -min_eig });
    }
    Ok(())
}

/// TD(0) on the Markovian pair stream `(s_k, s_{k+1})`.
///
/// Returns the pair chain (kernel `(s,t) -> (t,u)` with probability
/// `P[t][u]`, stationary mass `pi(s) P[s][t]`) and the LSA instance with
/// `A = phi(s)(gamma phi(t) - phi(s))^T`, `b = r(s) phi(s)`. The mean
/// update matrix is verified negative definite.
pub fn td_problem(mrp: &Mrp, features: &FeatureMap) -> Result<(FiniteChain, LsaProblem)> {
    if features.matrix.nrows() != mrp.n_states {
        return Err(Error::InvalidParameter(
            "feature rows must match the state count".into(),
        ));
    }
    let state_chain = mrp.state_chain()?;
    if !state_chain.ergodic {
        return Err(Error::InvalidParameter(
            "state chain must be irreducible and aperiodic".into(),
        ));
    }
    let space = PairSpace::from_kernel(&mrp.kernel);
    let m = space.pairs.len();
    let mut kernel = DMatrix::zeros(m, m);
    for (i, &(_, t)) in space.pairs.iter().enumerate() {
        for (j, &(t2, u)) in space.pairs.iter().enumerate() {
            if t2 == t {
                kernel[(i, j)] = mrp.kernel[(t, u)];
            }
        }
    }
    let pi = pair_stationary(&space, &state_chain);
    let chain = FiniteChain::with_stationary(kernel, pi)?;
    let (a_maps, b_maps) = pair_update_maps(&space, features, &mrp.rewards, mrp.gamma);
    let problem = build_problem(&chain, a_maps, b_maps, false)?;
    check_negative_definite(&problem)?;
    Ok((chain, problem))
}

/// TD(0) with an independently redrawn bootstrap state (tabular features).
///
/// From `(s, u)` the next pair is `(t, u')` with probability
/// `P[s][t] P[t][u']`; the stationary mass is again `pi(s) P[s][u]`, and
/// the update maps are those of [`td_problem`] with the redrawn state in
/// the bootstrap slot.
pub fn semi_simulator_problem(mrp: &Mrp) -> Result<(FiniteChain, LsaProblem)> {
    let state_chain = mrp.state_chain()?;
    if !state_chain.ergodic {
        return Err(Error::InvalidParameter(
            "state chain must be irreducible and aperiodic".into(),
        ));
    }
    let features = FeatureMap::tabular(mrp.n_states);
    let space = PairSpace::from_kernel(&mrp.kernel);
    let m = space.pairs.len();
    let mut kernel = DMatrix::zeros(m, m);
    for (i, &(s, _)) in space.pairs.iter().enumerate() {
        for (j, &(t, u)) in space.pairs.iter().enumerate() {
            kernel[(i, j)] = mrp.kernel[(s, t)] * mrp.kernel[(t, u)];
        }
    }
    let pi = pair_stationary(&space, &state_chain);
    let chain = FiniteChain::with_stationary(kernel, pi)?;
    let (a_maps, b_maps) = pair_update_maps(&space, &features, &mrp.rewards, mrp.gamma);
    let problem = build_problem(&chain, a_maps, b_maps, false)?;
    check_negative_definite(&problem)?;
    Ok((chain, problem))
}

/// Fixed point of the projected evaluation equation plus the
/// function-approximation error `|Phi theta - V|` in the pi-weighted norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFixedPoint {
    pub theta_star: DVector<f64>,
    /// Exact value function.
    pub value: DVector<f64>,
    /// `(sum_s pi(s) (phi(s)^T theta - V(s))^2)^{1/2}`.
    pub value_error: f64,
}

/// Solve for the projected fixed point through the pair-chain instance.
pub fn projected_fixed_point(mrp: &Mrp, features: &FeatureMap) -> Result<ProjectedFixedPoint> {
    let (_, problem) = td_problem(mrp, features)?;
    let state_chain = mrp.state_chain()?;
    let value = mrp.value_function()?;
    let approx = &features.matrix * &problem.theta_star;
    let mut err_sq = 0.0;
    for s in 0..mrp.n_states {
        err_sq += state_chain.pi[s] * (approx[s] - value[s]).powi(2);
    }
    Ok(ProjectedFixedPoint {
        theta_star: problem.theta_star.clone(),
        value,
        value_error: err_sq.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias;
    use crate::engine::{self, K0Policy, RunConfig, StateStream};
    use approx::assert_abs_diff_eq;

    #[test]
    fn problematic_process_pins_its_data() {
        let mrp = problematic_mrp();
        assert_eq!(mrp.n_states, 4);
        assert_eq!(mrp.gamma, 0.9);
        assert_eq!(
            mrp.rewards,
            DVector::from_vec(vec![0.0, 1.0, 3.0, 0.0])
        );
        for s in 0..4 {
            let sum: f64 = (0..4).map(|t| mrp.kernel[(s, t)]).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-15);
        }
        let chain = mrp.state_chain().unwrap();
        assert!(chain.ergodic, "self-loops at the ends keep it aperiodic");
    }

    #[test]
    fn pair_space_prunes_zero_probability_pairs() {
        let mrp = problematic_mrp();
        let space = PairSpace::from_kernel(&mrp.kernel);
        assert_eq!(space.pairs.len(), 8);
        assert!(space.index_of((0, 3)).is_none());
        assert!(space.index_of((0, 1)).is_some());
    }

    #[test]
    fn pair_stationary_marginalizes_to_state_stationary() {
        let mrp = problematic_mrp();
        let state_chain = mrp.state_chain().unwrap();
        let (pair_chain, _) = td_problem(&mrp, &problematic_features()).unwrap();
        let space = PairSpace::from_kernel(&mrp.kernel);
        for s in 0..4 {
            let marginal: f64 = space
                .pairs
                .iter()
                .zip(pair_chain.pi.iter())
                .filter(|(&(s1, _), _)| s1 == s)
                .map(|(_, &p)| p)
                .sum();
            assert_abs_diff_eq!(marginal, state_chain.pi[s], epsilon = 1e-12);
        }
    }

    #[test]
    fn mean_update_matrix_is_negative_definite() {
        let mrp = problematic_mrp();
        let (_, problem) = td_problem(&mrp, &problematic_features()).unwrap();
        let sym = -(problem.a_bar.clone() + problem.a_bar.transpose()) * 0.5;
        let min_eig = crate::linalg::symmetric_eigenvalues(&sym)
            .unwrap()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig > 0.0);

        // Lower bound through the feature Gram matrix.
        let state_chain = mrp.state_chain().unwrap();
        let phi = &problematic_features().matrix;
        let gram = phi.transpose() * DMatrix::from_diagonal(&state_chain.pi) * phi;
        let rho = crate::linalg::symmetric_eigenvalues(&gram)
            .unwrap()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= (1.0 - mrp.gamma) * rho * (1.0 - 1e-9));
    }

    #[test]
    fn tabular_features_recover_the_value_function() {
        let mrp = problematic_mrp();
        let features = FeatureMap::tabular(4);
        let fixed = projected_fixed_point(&mrp, &features).unwrap();
        assert!(
            (fixed.theta_star.clone() - &fixed.value).norm() < 1e-9,
            "tabular projection is the identity"
        );
        assert!(fixed.value_error < 1e-9);
    }

    #[test]
    fn zero_discount_reduces_to_weighted_regression() {
        let mut mrp = problematic_mrp();
        mrp.gamma = 0.0;
        let features = problematic_features();
        let fixed = projected_fixed_point(&mrp, &features).unwrap();
        // Normal equations for the pi-weighted fit of the rewards.
        let chain = mrp.state_chain().unwrap();
        let w = DMatrix::from_diagonal(&chain.pi);
        let phi = &features.matrix;
        let lhs = phi.transpose() * &w * phi;
        let rhs = phi.transpose() * &w * &mrp.rewards;
        let direct = lhs.lu().solve(&rhs).unwrap();
        assert!((fixed.theta_star - direct).norm() < 1e-10);
    }

    #[test]
    fn quadratic_features_give_finite_fixed_point() {
        let mrp = problematic_mrp();
        let fixed = projected_fixed_point(&mrp, &problematic_features()).unwrap();
        assert!(fixed.theta_star.iter().all(|v| v.is_finite()));
        assert!(fixed.value_error.is_finite());
    }

    #[test]
    fn semi_simulator_satisfies_zero_bias_condition() {
        let mrp = problematic_mrp();
        let (chain, problem) = semi_simulator_problem(&mrp).unwrap();
        let report = bias::zero_bias_condition(&problem, &chain, 1e-10).unwrap();
        assert!(
            report.holds,
            "violation {}",
            report.max_violation
        );
        for alpha in [0.01, 0.02, 0.05] {
            let sol = bias::exact_stationary_mean(&problem, &chain, alpha).unwrap();
            assert!(sol.bias.norm() < 1e-9, "alpha {alpha}: {}", sol.bias.norm());
        }
    }

    #[test]
    fn markovian_stream_has_nonzero_offset() {
        let mrp = problematic_mrp();
        let (chain, problem) = td_problem(&mrp, &problematic_features()).unwrap();
        let sol = bias::exact_stationary_mean(&problem, &chain, 0.1).unwrap();
        assert!(sol.bias.norm() > 1e-6, "offset {}", sol.bias.norm());
        // And it scales linearly at small stepsizes.
        let b1 = bias::exact_stationary_mean(&problem, &chain, 0.02)
            .unwrap()
            .bias
            .norm();
        let b2 = bias::exact_stationary_mean(&problem, &chain, 0.01)
            .unwrap()
            .bias
            .norm();
        let ratio = b1 / b2;
        assert!(ratio > 1.8 && ratio < 2.2, "ratio {ratio}");
    }

    #[test]
    fn semi_simulator_tabular_target_is_the_value_function() {
        let mrp = problematic_mrp();
        let (_, problem) = semi_simulator_problem(&mrp).unwrap();
        let value = mrp.value_function().unwrap();
        assert!((problem.theta_star.clone() - value).norm() < 1e-9);
    }

    #[test]
    fn pair_chain_stream_matches_direct_mrp_stream() {
        // Means of the update matrix sampled along the pair chain and along
        // the raw state stream must agree within Monte Carlo error.
        let mrp = problematic_mrp();
        let features = problematic_features();
        let (pair_chain, problem) = td_problem(&mrp, &features).unwrap();
        let steps = 100_000usize;

        let mut stream = StateStream::new(&pair_chain, 77, None);
        let d = problem.d;
        let mut mean_pair = DMatrix::<f64>::zeros(d, d);
        for _ in 0..steps {
            let x = stream.step();
            mean_pair += &problem.a_maps[x];
        }
        mean_pair /= steps as f64;

        let state_chain = mrp.state_chain().unwrap();
        let mut sstream = StateStream::new(&state_chain, 177, None);
        let mut mean_direct = DMatrix::<f64>::zeros(d, d);
        let mut s = sstream.step();
        for _ in 0..steps {
            let t = sstream.step();
            let phi_s = features.row(s);
            let phi_t = features.row(t);
            mean_direct += &phi_s * (&phi_t * mrp.gamma - &phi_s).transpose();
            s = t;
        }
        mean_direct /= steps as f64;

        // Both estimate the same stationary mean; allow 3x a generous
        // standard-error scale for entries of order 1e-2.
        let diff = (mean_pair - mean_direct).amax();
        assert!(diff < 3e-3, "stream means differ by {diff}");
    }

    #[test]
    fn td_trajectories_settle_at_the_oracle_offset() {
        // Normalized features make the update maps small, so realistic
        // stepsizes sit near 1; the tail-average plateau then matches the
        // exact stationary offset.
        let mrp = problematic_mrp();
        let (chain, problem) = td_problem(&mrp, &problematic_features()).unwrap();
        let alpha = 1.0;
        let oracle = bias::exact_stationary_mean(&problem, &chain, alpha)
            .unwrap()
            .bias
            .norm();
        let cfg = RunConfig::new(alpha, 200_000, K0Policy::Half, 5);
        let summary = engine::simulate(&problem, &chain, &cfg).unwrap();
        let early = summary.err_ta[10];
        let late = summary.final_err_ta();
        assert!(late < early, "tail average should approach the target");
        assert!(
            late > 0.5 * oracle && late < 2.0 * oracle,
            "late error {late} vs oracle offset {oracle}"
        );
    }

    #[test]
    fn rank_deficient_features_are_rejected() {
        let raw = DMatrix::from_fn(4, 2, |s, _| s as f64);
        assert!(matches!(
            FeatureMap::new(raw),
            Err(Error::RankDeficientFeatures { .. })
        ));
    }

    #[test]
    fn rescaled_features_meet_the_norm_bound() {
        let f = problematic_features().rescaled_to_unit_bound(0.9);
        let phi_max = (0..4).map(|s| f.matrix.row(s).norm()).fold(0.0, f64::max);
        assert_abs_diff_eq!(phi_max, 1.0 / (1.9f64).sqrt(), epsilon = 1e-12);
    }
}
