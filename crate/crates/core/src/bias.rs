//! Exact stationary-mean analysis on finite state spaces.
//!
//! Functions `f : X -> R^d` are stacked into `(n d)`-vectors (block `x`
//! holds `f(x)`), and the kernels and multiplication operators acting on
//! them become explicit `(n d) x (n d)` matrices:
//!
//! * the reversed kernel lifts to `P* (x) I_d`,
//! * the stationary projector has block `(x, y) = pi_y I_d`,
//! * the update maps lift block-diagonally, plain and premultiplied by the
//!   inverse mean.
//!
//! On these liftings the module solves the stationarity identity for the
//! conditional mean `z(x) = E[theta_inf | x_inf = x]` as one dense linear
//! system, extracts the stepsize-expansion coefficients of the stationary
//! offset, evaluates the closed-form resolvent route to the same mean, and
//! checks the reversible-chain bound and the zero-offset sufficient
//! condition. All norms written `pi-weighted` are realized as ordinary
//! spectral norms after the similarity `W M W^{-1}` with
//! `W = diag(sqrt(pi_x)) (x) I_d`.

use nalgebra::{DMatrix, DVector};

use crate::chain::{self, FiniteChain};
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::LsaProblem;

/// rcond floor for the conditional-mean system.
const ORACLE_RCOND_FLOOR: f64 = 1e-13;

/// Which lifting a matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftKind {
    /// Reversed kernel `P* (x) I_d`.
    ReversedKernel,
    /// Stationary projector `1 (x) pi`.
    Projector,
    /// Block-diagonal update maps.
    UpdateMaps,
    /// Block-diagonal normalized update maps `a_bar^{-1} A(x)`.
    NormalizedUpdateMaps,
    /// Product of liftings.
    Composite,
}

/// An explicit lifted operator.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedOperator {
    pub matrix: DMatrix<f64>,
    pub kind: LiftKind,
}

/// The lifted workspace for one `(problem, chain)` pair.
#[derive(Debug, Clone)]
pub struct Lifting {
    pub n: usize,
    pub d: usize,
    pub pi: DVector<f64>,
    /// `P* (x) I_d`.
    pub reversed: DMatrix<f64>,
    /// Block `(x, y) = pi_y I_d`.
    pub projector: DMatrix<f64>,
    /// Block-diagonal `A(x)`.
    pub update: DMatrix<f64>,
    /// Block-diagonal `a_bar^{-1} A(x)`.
    pub normalized_update: DMatrix<f64>,
    /// Stacked `A(x) theta* + b(x)`.
    pub drive: DVector<f64>,
    /// Stacked `b(x)`.
    pub offset: DVector<f64>,
}

/// Kronecker lift of a kernel: block `(x, y) = K[x][y] I_d`.
pub fn lift_kernel(kernel: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let n = kernel.nrows();
    let mut out = DMatrix::zeros(n * d, n * d);
    for x in 0..n {
        for y in 0..n {
            let v = kernel[(x, y)];
            if v != 0.0 {
                for i in 0..d {
                    out[(x * d + i, y * d + i)] = v;
                }
            }
        }
    }
    out
}

/// Block-diagonal lift of per-state matrices.
pub fn lift_block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks.len();
    let d = blocks[0].nrows();
    let mut out = DMatrix::zeros(n * d, n * d);
    for (x, blk) in blocks.iter().enumerate() {
        out.view_mut((x * d, x * d), (d, d)).copy_from(blk);
    }
    out
}

/// Stack per-state vectors.
pub fn stack(vectors: &[DVector<f64>]) -> DVector<f64> {
    let n = vectors.len();
    let d = vectors[0].len();
    let mut out = DVector::zeros(n * d);
    for (x, v) in vectors.iter().enumerate() {
        out.rows_mut(x * d, d).copy_from(v);
    }
    out
}

/// Apply the stationary distribution to a stacked vector:
/// `sum_x pi_x (block x)`.
pub fn pi_apply(pi: &DVector<f64>, stacked: &DVector<f64>, d: usize) -> DVector<f64> {
    let mut out = DVector::zeros(d);
    for (x, &p) in pi.iter().enumerate() {
        out.axpy(p, &stacked.rows(x * d, d).into_owned(), 1.0);
    }
    out
}

impl Lifting {
    /// Build the liftings for an instance. Requires a strictly positive
    /// stationary distribution (for the reversal) and an ergodic chain.
    pub fn new(problem: &LsaProblem, chain: &FiniteChain) -> Result<Self> {
        if problem.n != chain.n {
            return Err(Error::InvalidParameter(format!(
                "problem has {} states, chain has {}",
                problem.n, chain.n
            )));
        }
        if !chain.ergodic {
            return Err(Error::NonUniqueStationary { classes: 0 });
        }
        let d = problem.d;
        let reversed_kernel = chain::time_reversal(chain)?;
        let reversed = lift_kernel(&reversed_kernel, d);
        let projector = lift_kernel(&chain::independent_sampling_kernel(&chain.pi), d);
        let update = lift_block_diagonal(&problem.a_maps);
        let inv_mean = problem
            .a_bar
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMeanMatrix { rcond: 0.0 })?;
        let normalized: Vec<DMatrix<f64>> =
            problem.a_maps.iter().map(|a| &inv_mean * a).collect();
        let normalized_update = lift_block_diagonal(&normalized);
        let drive_blocks: Vec<DVector<f64>> = problem
            .a_maps
            .iter()
            .zip(&problem.b_maps)
            .map(|(a, b)| a * &problem.theta_star + b)
            .collect();
        Ok(Self {
            n: problem.n,
            d,
            pi: chain.pi.clone(),
            reversed,
            projector,
            update,
            normalized_update,
            drive: stack(&drive_blocks),
            offset: stack(&problem.b_maps),
        })
    }

    /// Weighted similarity `W M W^{-1}`, `W = diag(sqrt(pi_x)) (x) I_d`.
    fn weighted(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for x in 0..self.n {
            let wx = self.pi[x].sqrt();
            for i in 0..self.d {
                let row = x * self.d + i;
                for col in 0..self.n * self.d {
                    out[(row, col)] *= wx;
                }
            }
        }
        for y in 0..self.n {
            let wy = self.pi[y].sqrt();
            for i in 0..self.d {
                let col = y * self.d + i;
                for row in 0..self.n * self.d {
                    out[(row, col)] /= wy;
                }
            }
        }
        out
    }

    /// Operator norm in the pi-weighted sense.
    pub fn weighted_norm(&self, m: &DMatrix<f64>) -> f64 {
        linalg::spectral_norm(&self.weighted(m))
    }

    /// `(sum_x pi_x |block_x|^2)^{1/2}` for a stacked vector.
    pub fn weighted_vec_norm(&self, v: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for x in 0..self.n {
            total += self.pi[x] * v.rows(x * self.d, self.d).norm_squared();
        }
        total.sqrt()
    }
}

/// Conditional stationary mean from the stationarity identity.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    /// Stacked conditional means, block `x` holding
    /// `E[theta_inf | x_inf = x]`.
    pub z: DVector<f64>,
    /// Stationary mean `pi z`.
    pub mean: DVector<f64>,
    /// `pi z - theta_star`.
    pub bias: DVector<f64>,
    /// Residual of the defining linear system at the solution.
    pub residual: f64,
    /// Stepsize the system was solved at.
    pub alpha: f64,
}

/// Solve `(I - P*(I + alpha D)) z = alpha P* b` for the conditional means.
pub fn exact_stationary_mean(
    problem: &LsaProblem,
    chain: &FiniteChain,
    alpha: f64,
) -> Result<StationarySolution> {
    let lift = Lifting::new(problem, chain)?;
    exact_stationary_mean_with(&lift, problem, alpha)
}

/// [`exact_stationary_mean`] against a prebuilt lifting.
pub fn exact_stationary_mean_with(
    lift: &Lifting,
    problem: &LsaProblem,
    alpha: f64,
) -> Result<StationarySolution> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "stepsize must be positive, got {alpha}"
        )));
    }
    let nd = lift.n * lift.d;
    let eye = DMatrix::<f64>::identity(nd, nd);
    let system = &eye - &lift.reversed * (&eye + &lift.update * alpha);
    let rhs = &lift.reversed * &lift.offset * alpha;
    let z = linalg::solve_checked(&system, &rhs, ORACLE_RCOND_FLOOR)
        .map_err(|rcond| Error::OracleSingular { rcond })?;
    let residual = (&system * &z - &rhs).norm();
    let mean = pi_apply(&lift.pi, &z, lift.d);
    let bias = &mean - &problem.theta_star;
    Ok(StationarySolution {
        z,
        mean,
        bias,
        residual,
        alpha,
    })
}

/// Expansion data: source vector, expansion operator, leading
/// coefficients, and the operator's pi-weighted norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasExpansion {
    /// Stacked source vector.
    pub upsilon: DVector<f64>,
    /// Expansion operator on stacked functions.
    pub xi: DMatrix<f64>,
    /// Coefficients of the stepsize powers `1..=m`.
    pub coefficients: Vec<DVector<f64>>,
    /// pi-weighted operator norm of the expansion operator.
    pub xi_norm: f64,
}

/// Compute the expansion data with `m` leading coefficients.
pub fn bias_expansion(
    problem: &LsaProblem,
    chain: &FiniteChain,
    m: usize,
) -> Result<BiasExpansion> {
    let lift = Lifting::new(problem, chain)?;
    bias_expansion_with(&lift, m)
}

/// [`bias_expansion`] against a prebuilt lifting.
pub fn bias_expansion_with(lift: &Lifting, m: usize) -> Result<BiasExpansion> {
    if m == 0 {
        return Err(Error::InvalidParameter(
            "need at least one expansion coefficient".into(),
        ));
    }
    let nd = lift.n * lift.d;
    let eye = DMatrix::<f64>::identity(nd, nd);
    let centered = &lift.reversed - &lift.projector;
    // The resolvent is formed by factorization; its Neumann series is a
    // proof device, not an algorithm.
    let resolvent_system = (&eye - &centered).lu();
    let solve_mat = |rhs: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        resolvent_system
            .solve(rhs)
            .ok_or_else(|| Error::SpectralFailure("resolvent solve failed".into()))
    };
    let solve_vec = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
        resolvent_system
            .solve(rhs)
            .ok_or_else(|| Error::SpectralFailure("resolvent solve failed".into()))
    };

    let xi_rhs = &centered * &lift.update * (&eye - &lift.projector * &lift.normalized_update);
    let xi = solve_mat(&xi_rhs)?;
    let upsilon = solve_vec(&(&centered * &lift.drive))?;
    let xi_norm = lift.weighted_norm(&xi);

    let mut coefficients = Vec::with_capacity(m);
    let mut power = upsilon.clone();
    for i in 0..m {
        if i > 0 {
            power = &xi * &power;
        }
        let coeff = -pi_apply(&lift.pi, &(&lift.normalized_update * &power), lift.d);
        coefficients.push(coeff);
    }

    Ok(BiasExpansion {
        upsilon,
        xi,
        coefficients,
        xi_norm,
    })
}

/// Stationary mean through the resolvent route.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMean {
    /// `theta_star - alpha pi Dbar (I - alpha Xi)^{-1} Upsilon`.
    pub mean: DVector<f64>,
    /// Radius `1 / |Xi|` of the guaranteed regime.
    pub alpha_max: f64,
    /// Stepsize strictly inside the guaranteed regime.
    pub guaranteed: bool,
}

/// Evaluate the closed-form series limit in one linear solve.
///
/// Outside `alpha < 1/|Xi|` the value is still computed when the system is
/// invertible, but flagged as outside the guarantee; a singular system is
/// the hard failure.
pub fn infinite_series_mean(
    problem: &LsaProblem,
    chain: &FiniteChain,
    expansion: &BiasExpansion,
    alpha: f64,
) -> Result<SeriesMean> {
    let lift = Lifting::new(problem, chain)?;
    infinite_series_mean_with(&lift, problem, expansion, alpha)
}

/// [`infinite_series_mean`] against a prebuilt lifting.
pub fn infinite_series_mean_with(
    lift: &Lifting,
    problem: &LsaProblem,
    expansion: &BiasExpansion,
    alpha: f64,
) -> Result<SeriesMean> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "stepsize must be positive, got {alpha}"
        )));
    }
    let alpha_max = if expansion.xi_norm > 0.0 {
        1.0 / expansion.xi_norm
    } else {
        f64::INFINITY
    };
    let nd = lift.n * lift.d;
    let system = DMatrix::<f64>::identity(nd, nd) - &expansion.xi * alpha;
    let solved = linalg::solve_checked(&system, &expansion.upsilon, 1e-14).map_err(|_| {
        Error::SeriesDivergent {
            alpha,
            alpha_max,
        }
    })?;
    let correction = pi_apply(&lift.pi, &(&lift.normalized_update * &solved), lift.d);
    let mean = &problem.theta_star - correction * alpha;
    Ok(SeriesMean {
        mean,
        alpha_max,
        guaranteed: alpha < alpha_max,
    })
}

/// Zero-offset sufficient condition report.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroBiasReport {
    pub holds: bool,
    /// `max_x | sum_s P*[x][s] (A(s) theta* + b(s)) |`.
    pub max_violation: f64,
}

/// Evaluate the backward conditional mean of the stationary drive at every
/// state; the offset vanishes for every stepsize when it is zero.
pub fn zero_bias_condition(
    problem: &LsaProblem,
    chain: &FiniteChain,
    tol: f64,
) -> Result<ZeroBiasReport> {
    let reversed = chain::time_reversal(chain)?;
    let drive: Vec<DVector<f64>> = problem
        .a_maps
        .iter()
        .zip(&problem.b_maps)
        .map(|(a, b)| a * &problem.theta_star + b)
        .collect();
    let mut max_violation = 0.0f64;
    for x in 0..chain.n {
        let mut g = DVector::zeros(problem.d);
        for (s, item) in drive.iter().enumerate() {
            g.axpy(reversed[(x, s)], item, 1.0);
        }
        max_violation = max_violation.max(g.norm());
    }
    Ok(ZeroBiasReport {
        holds: max_violation <= tol,
        max_violation,
    })
}

/// One row of the reversible-chain coefficient bound report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub order: usize,
    pub coeff_norm: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Reversible bound report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversibleBoundReport {
    /// Instance constant: max of the two pi-weighted norms
    /// `|Dbar| |A theta* + b|` and `|D (I - Proj Dbar)|`.
    pub constant: f64,
    /// Absolute spectral gap used in the bound.
    pub gap: f64,
    pub rows: Vec<BoundRow>,
}

/// Check `|B^(i)| <= (C (1 - gap)/gap)^i` for `i = 1..=i_max` on a
/// reversible chain.
pub fn reversible_bias_bound(
    problem: &LsaProblem,
    chain: &FiniteChain,
    expansion: &BiasExpansion,
    i_max: usize,
) -> Result<ReversibleBoundReport> {
    let violation = chain::detailed_balance_violation(chain);
    if violation >= chain::REVERSIBLE_TOL {
        return Err(Error::NotReversible { violation });
    }
    let report = chain::spectral_report(chain)?;
    let gap = report.gap;
    let lift = Lifting::new(problem, chain)?;
    let nd = lift.n * lift.d;
    let eye = DMatrix::<f64>::identity(nd, nd);
    let dbar_norm = lift.weighted_norm(&lift.normalized_update);
    let drive_norm = lift.weighted_vec_norm(&lift.drive);
    let prod = &lift.update * (&eye - &lift.projector * &lift.normalized_update);
    let constant = f64::max(dbar_norm * drive_norm, lift.weighted_norm(&prod));

    let expansion = if expansion.coefficients.len() >= i_max {
        expansion.clone()
    } else {
        bias_expansion_with(&lift, i_max)?
    };
    let base = if gap > 0.0 {
        constant * (1.0 - gap) / gap
    } else {
        f64::INFINITY
    };
    let rows = (1..=i_max)
        .map(|i| {
            let coeff_norm = expansion.coefficients[i - 1].norm();
            let bound = base.powi(i as i32);
            BoundRow {
                order: i,
                coeff_norm,
                bound,
                satisfied: coeff_norm <= bound * (1.0 + 1e-9) + 1e-12,
            }
        })
        .collect();
    Ok(ReversibleBoundReport {
        constant,
        gap,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::independent_sampling_kernel;
    use crate::problem::{build_problem, random_problem};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// Symmetric two-state chain with flip probability `p`, scalar maps
    /// A = (-1, -0.5), b = (1, 0).
    fn two_state_scalar(p: f64) -> (FiniteChain, LsaProblem) {
        let chain = FiniteChain::new(DMatrix::from_row_slice(
            2,
            2,
            &[1.0 - p, p, p, 1.0 - p],
        ))
        .unwrap();
        let a = vec![
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, -0.5),
        ];
        let b = vec![DVector::from_element(1, 1.0), DVector::zeros(1)];
        let problem = build_problem(&chain, a, b, false).unwrap();
        (chain, problem)
    }

    fn iid_instance() -> (FiniteChain, LsaProblem) {
        let pi = DVector::from_vec(vec![0.5, 0.5]);
        let chain =
            FiniteChain::with_stationary(independent_sampling_kernel(&pi), pi).unwrap();
        let a = vec![
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, -0.5),
        ];
        let b = vec![DVector::from_element(1, 1.0), DVector::zeros(1)];
        let problem = build_problem(&chain, a, b, false).unwrap();
        (chain, problem)
    }

    #[test]
    fn independent_sampling_has_no_stationary_offset() {
        let (chain, problem) = iid_instance();
        let sol = exact_stationary_mean(&problem, &chain, 0.05).unwrap();
        assert!(sol.bias.norm() < 1e-10, "bias {}", sol.bias.norm());
        let exp = bias_expansion(&problem, &chain, 4).unwrap();
        assert!(exp.upsilon.norm() < 1e-12);
        for c in &exp.coefficients {
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn zero_offset_maps_give_zero_solution() {
        let (chain, _) = two_state_scalar(0.2);
        let a = vec![
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, -0.5),
        ];
        let b = vec![DVector::zeros(1); 2];
        let problem = build_problem(&chain, a, b, false).unwrap();
        let sol = exact_stationary_mean(&problem, &chain, 0.05).unwrap();
        assert!(sol.z.norm() < 1e-12);
        assert!(sol.mean.norm() < 1e-12);
    }

    #[test]
    fn two_state_bias_matches_hand_solved_system() {
        // Eliminating by hand at alpha = 0.05:
        //   0.24 z1 - 0.195 z2 = 0.04
        //  -0.19 z1 + 0.22  z2 = 0.01
        // gives z = (43/63, 40/63), mean 83/126, target 2/3, offset -1/126.
        let (chain, problem) = two_state_scalar(0.2);
        let sol = exact_stationary_mean(&problem, &chain, 0.05).unwrap();
        assert_abs_diff_eq!(sol.z[0], 43.0 / 63.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.z[1], 40.0 / 63.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.bias[0], -1.0 / 126.0, epsilon = 1e-12);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn first_coefficient_matches_hand_derivation() {
        // Resolvent route by hand: drive (1/3, -1/3), centered application
        // (1/5, -1/5), resolvent solve (1/2, -1/2), leading coefficient
        // -pi Dbar upsilon = -1/6.
        let (chain, problem) = two_state_scalar(0.2);
        let exp = bias_expansion(&problem, &chain, 1).unwrap();
        assert_abs_diff_eq!(exp.coefficients[0][0], -1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_update_maps_kill_every_coefficient() {
        // A(x) constant, b varying: the normalized lifting is the identity
        // and the projector annihilates the source.
        let (chain, _) = two_state_scalar(0.2);
        let a = vec![DMatrix::from_element(1, 1, -0.8); 2];
        let b = vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, -0.5),
        ];
        let problem = build_problem(&chain, a, b, false).unwrap();
        let exp = bias_expansion(&problem, &chain, 4).unwrap();
        for c in &exp.coefficients {
            assert!(c.norm() < 1e-12, "coefficient {}", c.norm());
        }
        for alpha in [0.01, 0.03, 0.05] {
            let sol = exact_stationary_mean(&problem, &chain, alpha).unwrap();
            assert!(sol.bias.norm() < 1e-9, "alpha {alpha}: {}", sol.bias.norm());
        }
    }

    #[test]
    fn expansion_truncation_error_shrinks_at_the_right_order() {
        let (chain, problem) = two_state_scalar(0.2);
        let exp = bias_expansion(&problem, &chain, 3).unwrap();
        let truncation = |alpha: f64, m: usize| -> f64 {
            let sol = exact_stationary_mean(&problem, &chain, alpha).unwrap();
            let mut acc = sol.bias.clone();
            for (i, c) in exp.coefficients.iter().take(m).enumerate() {
                acc -= c * alpha.powi(i as i32 + 1);
            }
            acc.norm()
        };
        for m in 1..=3usize {
            let big = truncation(0.04, m);
            let small = truncation(0.02, m);
            let order = (big / small).log2();
            assert!(
                order > m as f64 + 0.5 && order < m as f64 + 1.5,
                "m={m}: observed order {order}"
            );
        }
    }

    #[test]
    fn series_route_agrees_with_direct_solve() {
        let (chain, problem) = two_state_scalar(0.2);
        let exp = bias_expansion(&problem, &chain, 1).unwrap();
        let alpha = 0.05;
        assert!(alpha < 1.0 / exp.xi_norm);
        let series = infinite_series_mean(&problem, &chain, &exp, alpha).unwrap();
        assert!(series.guaranteed);
        let direct = exact_stationary_mean(&problem, &chain, alpha).unwrap();
        assert!((series.mean - direct.mean).norm() < 1e-10);
    }

    #[test]
    fn series_route_on_independent_sampling_returns_target() {
        let (chain, problem) = iid_instance();
        let exp = bias_expansion(&problem, &chain, 1).unwrap();
        let series = infinite_series_mean(&problem, &chain, &exp, 0.1).unwrap();
        assert!((series.mean - &problem.theta_star).norm() < 1e-12);
    }

    #[test]
    fn series_bias_vanishes_linearly_in_the_stepsize() {
        let (chain, problem) = two_state_scalar(0.2);
        let exp = bias_expansion(&problem, &chain, 1).unwrap();
        let b1 = exact_stationary_mean(&problem, &chain, 1e-4).unwrap().bias[0];
        let b2 = exact_stationary_mean(&problem, &chain, 5e-5).unwrap().bias[0];
        assert_abs_diff_eq!(b1 / b2, 2.0, epsilon = 1e-2);
        assert_abs_diff_eq!(b1 / 1e-4, exp.coefficients[0][0], epsilon = 1e-3);
    }

    #[test]
    fn random_instances_pass_oracle_cross_check() {
        for seed in [1u64, 2, 3] {
            let (chain, problem) = random_problem(8, 4, seed).unwrap();
            let exp = bias_expansion(&problem, &chain, 1).unwrap();
            let alpha = (0.5 / exp.xi_norm).min(0.05);
            let direct = exact_stationary_mean(&problem, &chain, alpha).unwrap();
            let series = infinite_series_mean(&problem, &chain, &exp, alpha).unwrap();
            assert!(series.guaranteed);
            let gap = (series.mean - &direct.mean).norm();
            assert!(
                gap < 1e-9 * (1.0 + problem.theta_star.norm()),
                "seed {seed}: routes differ by {gap}"
            );
            assert!(direct.residual < 1e-9 * (1.0 + direct.z.norm()));
        }
    }

    #[test]
    fn projector_annihilates_source_and_operator_range() {
        let (chain, problem) = random_problem(6, 3, 9).unwrap();
        let lift = Lifting::new(&problem, &chain).unwrap();
        let exp = bias_expansion_with(&lift, 1).unwrap();
        assert!(pi_apply(&lift.pi, &exp.upsilon, lift.d).norm() < 1e-12);
        let mut rng = crate::rng::stream(4, crate::rng::StreamId::InstanceGen);
        for _ in 0..5 {
            let v = DVector::from_fn(lift.n * lift.d, |_, _| rng.gen::<f64>() - 0.5);
            let image = &exp.xi * &v;
            assert!(pi_apply(&lift.pi, &image, lift.d).norm() < 1e-12 * v.norm());
        }
    }

    #[test]
    fn zero_bias_condition_cases() {
        let (chain, problem) = iid_instance();
        let report = zero_bias_condition(&problem, &chain, 1e-12).unwrap();
        assert!(report.holds);
        assert!(report.max_violation < 1e-12);

        let (chain2, problem2) = two_state_scalar(0.2);
        let report2 = zero_bias_condition(&problem2, &chain2, 1e-12).unwrap();
        assert!(!report2.holds);
        let sol = exact_stationary_mean(&problem2, &chain2, 0.05).unwrap();
        assert!(sol.bias.norm() > 1e-3);
    }

    #[test]
    fn zero_bias_condition_implies_zero_oracle_bias() {
        let (chain, problem) = iid_instance();
        let report = zero_bias_condition(&problem, &chain, 1e-12).unwrap();
        assert!(report.holds);
        for alpha in [0.01, 0.02, 0.05] {
            let sol = exact_stationary_mean(&problem, &chain, alpha).unwrap();
            assert!(sol.bias.norm() < 1e-9);
        }
    }

    #[test]
    fn reversible_bound_holds_across_flip_rates() {
        for p in [0.3, 0.1, 0.03] {
            let (chain, problem) = two_state_scalar(p);
            let exp = bias_expansion(&problem, &chain, 5).unwrap();
            let report = reversible_bias_bound(&problem, &chain, &exp, 5).unwrap();
            assert_abs_diff_eq!(report.gap, 2.0 * p, epsilon = 1e-10);
            for row in &report.rows {
                assert!(
                    row.satisfied,
                    "p={p}, order {}: {} > {}",
                    row.order, row.coeff_norm, row.bound
                );
            }
        }
    }

    #[test]
    fn reversible_bound_rejects_nonreversible_chain() {
        let (chain, problem) = random_problem(5, 2, 33).unwrap();
        let exp = bias_expansion(&problem, &chain, 2).unwrap();
        assert!(matches!(
            reversible_bias_bound(&problem, &chain, &exp, 2),
            Err(Error::NotReversible { .. })
        ));
    }

    #[test]
    fn reversible_bound_on_independent_sampling_is_trivial() {
        let (chain, problem) = iid_instance();
        let exp = bias_expansion(&problem, &chain, 3).unwrap();
        let report = reversible_bias_bound(&problem, &chain, &exp, 3).unwrap();
        assert_abs_diff_eq!(report.gap, 1.0, epsilon = 1e-10);
        for row in &report.rows {
            assert!(row.coeff_norm < 1e-12);
            assert!(row.bound < 1e-9);
            assert!(row.satisfied);
        }
    }

    #[test]
    fn oracle_rejects_oversized_stepsize_system() {
        // Constant scalar map A = -1 on the flip chain with p = 0.8: the
        // system matrix is I - (1 - alpha) P with P eigenvalues {1, -0.6},
        // so rank drops at (1 - alpha)(-0.6) = 1, i.e. alpha = 8/3.
        let (chain, _) = two_state_scalar(0.8);
        let a = vec![DMatrix::from_element(1, 1, -1.0); 2];
        let b = vec![DVector::from_element(1, 1.0); 2];
        let problem = build_problem(&chain, a, b, false).unwrap();
        let err = exact_stationary_mean(&problem, &chain, 8.0 / 3.0).unwrap_err();
        assert!(matches!(err, Error::OracleSingular { .. }));
    }
}
