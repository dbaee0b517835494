//! Richardson-Romberg extrapolation across stepsizes.
//!
//! Tail averages computed at `m` distinct stepsizes are combined with
//! weights that sum to one and annihilate the first `m - 1` powers of the
//! stepsize, so only the order-`m` remainder of the stationary offset
//! survives.

use nalgebra::{DMatrix, DVector};

use crate::engine::TrajectorySummary;
use crate::error::{Error, Result};

/// A stepsize set with its combination weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RrScheme {
    /// Distinct positive stepsizes.
    pub alphas: Vec<f64>,
    /// Combination weights.
    pub weights: Vec<f64>,
    /// Variance-inflation indicator `sum_i |h_i|`; grows quickly on
    /// ill-spaced stepsize sets.
    pub weight_l1: f64,
}

/// Weights for a stepsize set, by the Lagrange-basis-at-zero product
/// `h_i = prod_{j != i} (-a_j) / (a_i - a_j)`, cross-checked against a
/// direct solve of the defining linear system.
pub fn rr_coefficients(alphas: &[f64]) -> Result<RrScheme> {
    let m = alphas.len();
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one stepsize".into()));
    }
    if alphas.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidParameter(
            "stepsizes must be positive and finite".into(),
        ));
    }
    for i in 0..m {
        for j in i + 1..m {
            if (alphas[i] - alphas[j]).abs() <= 1e-10 * alphas[i].abs().max(alphas[j].abs()) {
                return Err(Error::DegenerateScheme {
                    a: alphas[i],
                    b: alphas[j],
                });
            }
        }
    }

    let weights: Vec<f64> = (0..m)
        .map(|i| {
            let mut h = 1.0;
            for j in 0..m {
                if j != i {
                    h *= -alphas[j] / (alphas[i] - alphas[j]);
                }
            }
            h
        })
        .collect();

    debug_assert!({
        // Direct route: solve the Vandermonde-in-powers system
        // sum h_i = 1, sum h_i a_i^t = 0 for t = 1..m-1.
        let mut v = DMatrix::zeros(m, m);
        for t in 0..m {
            for i in 0..m {
                v[(t, i)] = alphas[i].powi(t as i32);
            }
        }
        let mut rhs = DVector::zeros(m);
        rhs[0] = 1.0;
        let direct = v.lu().solve(&rhs).expect("distinct stepsizes");
        weights
            .iter()
            .zip(direct.iter())
            .all(|(a, b)| (a - b).abs() < 1e-8 * (1.0 + b.abs()))
    });

    let weight_l1 = weights.iter().map(|h| h.abs()).sum();
    Ok(RrScheme {
        alphas: alphas.to_vec(),
        weights,
        weight_l1,
    })
}

impl RrScheme {
    /// Residuals of the defining constraints: `|sum h_i - 1|` and
    /// `max_t |sum h_i a_i^t|` for `t = 1..m-1`.
    pub fn residuals(&self) -> (f64, f64) {
        let sum_res = (self.weights.iter().sum::<f64>() - 1.0).abs();
        let mut power_res = 0.0f64;
        for t in 1..self.alphas.len() {
            let s: f64 = self
                .weights
                .iter()
                .zip(&self.alphas)
                .map(|(h, a)| h * a.powi(t as i32))
                .sum();
            let scale = self
                .alphas
                .iter()
                .fold(0.0f64, |m, a| m.max(*a))
                .powi(t as i32);
            power_res = power_res.max(s.abs() / scale);
        }
        (sum_res, power_res)
    }
}

/// Extrapolated error curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RrSummary {
    pub checkpoints: Vec<u64>,
    /// Combined tail average per checkpoint.
    pub theta_rr: Vec<DVector<f64>>,
    /// `|theta_rr - theta_star|` per checkpoint.
    pub err_rr: Vec<f64>,
    /// The scheme that produced the curve.
    pub scheme: RrScheme,
    pub seed: u64,
}

/// Combine aligned tail-averaged summaries with a scheme's weights.
///
/// Summaries must share checkpoints and seed (one data stream) and appear
/// in the scheme's stepsize order.
pub fn rr_extrapolate(
    summaries: &[&TrajectorySummary],
    scheme: &RrScheme,
    theta_star: &DVector<f64>,
) -> Result<RrSummary> {
    if summaries.len() != scheme.alphas.len() {
        return Err(Error::AlignmentError(format!(
            "{} summaries for {} stepsizes",
            summaries.len(),
            scheme.alphas.len()
        )));
    }
    let first = summaries[0];
    for (s, &a) in summaries.iter().zip(&scheme.alphas) {
        if s.checkpoints != first.checkpoints {
            return Err(Error::AlignmentError("checkpoint grids differ".into()));
        }
        if s.seed != first.seed {
            return Err(Error::AlignmentError(
                "summaries come from different data streams".into(),
            ));
        }
        if (s.alpha - a).abs() > 1e-12 * a.max(s.alpha) {
            return Err(Error::AlignmentError(format!(
                "summary stepsize {} does not match scheme stepsize {a}",
                s.alpha
            )));
        }
    }

    let mut theta_rr = Vec::with_capacity(first.checkpoints.len());
    let mut err_rr = Vec::with_capacity(first.checkpoints.len());
    for i in 0..first.checkpoints.len() {
        let mut combo = DVector::zeros(theta_star.len());
        for (s, &h) in summaries.iter().zip(&scheme.weights) {
            combo.axpy(h, &s.theta_bar[i], 1.0);
        }
        err_rr.push((&combo - theta_star).norm());
        theta_rr.push(combo);
    }
    Ok(RrSummary {
        checkpoints: first.checkpoints.clone(),
        theta_rr,
        err_rr,
        scheme: scheme.clone(),
        seed: first.seed,
    })
}

impl RrSummary {
    pub fn final_err(&self) -> f64 {
        *self.err_rr.last().unwrap()
    }

    pub fn plateau(&self) -> f64 {
        crate::stats::plateau(&self.checkpoints, &self.err_rr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::K0Policy;
    use approx::assert_abs_diff_eq;

    fn synthetic_summary(
        alphas_coord: &DVector<f64>,
        checkpoints: &[u64],
        alpha: f64,
        seed: u64,
    ) -> TrajectorySummary {
        let n = checkpoints.len();
        TrajectorySummary {
            seed,
            alpha,
            k0_policy: K0Policy::Half,
            nonstationary_start: false,
            checkpoints: checkpoints.to_vec(),
            window_start: checkpoints.iter().map(|k| k / 2).collect(),
            theta: vec![alphas_coord.clone(); n],
            theta_bar: vec![alphas_coord.clone(); n],
            err_raw: vec![0.0; n],
            err_ta: vec![0.0; n],
        }
    }

    #[test]
    fn single_stepsize_weight_is_one() {
        let s = rr_coefficients(&[0.3]).unwrap();
        assert_eq!(s.weights, vec![1.0]);
    }

    #[test]
    fn doubled_stepsize_pair() {
        let s = rr_coefficients(&[0.2, 0.4]).unwrap();
        assert_abs_diff_eq!(s.weights[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.weights[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn one_two_three_grid() {
        let s = rr_coefficients(&[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(s.weights[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.weights[1], -3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.weights[2], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn duplicate_stepsizes_are_rejected() {
        assert!(matches!(
            rr_coefficients(&[0.2, 0.2]),
            Err(Error::DegenerateScheme { .. })
        ));
    }

    #[test]
    fn residuals_vanish_up_to_size_six() {
        for m in 1..=6usize {
            let alphas: Vec<f64> = (0..m).map(|i| 1.9 + 0.2 * i as f64).collect();
            let s = rr_coefficients(&alphas).unwrap();
            let (sum_res, pow_res) = s.residuals();
            assert!(sum_res < 1e-10, "m={m}: sum residual {sum_res}");
            assert!(pow_res < 1e-10, "m={m}: power residual {pow_res}");
        }
    }

    #[test]
    fn degenerate_single_alpha_scheme_returns_the_input() {
        let cps = [1u64, 10, 100];
        let v = DVector::from_vec(vec![0.5, -0.25]);
        let s = synthetic_summary(&v, &cps, 0.2, 7);
        let scheme = rr_coefficients(&[0.2]).unwrap();
        let rr = rr_extrapolate(&[&s], &scheme, &DVector::zeros(2)).unwrap();
        for combo in &rr.theta_rr {
            assert_abs_diff_eq!((combo - &v).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn first_order_term_is_annihilated_exactly() {
        let cps = [1u64, 10, 100];
        let star = DVector::from_vec(vec![1.0, -2.0]);
        let v = DVector::from_vec(vec![0.3, 0.7]);
        let alphas = [0.1, 0.2, 0.4];
        let scheme = rr_coefficients(&alphas).unwrap();
        let summaries: Vec<TrajectorySummary> = alphas
            .iter()
            .map(|&a| synthetic_summary(&(&star + &v * a), &cps, a, 3))
            .collect();
        let refs: Vec<&TrajectorySummary> = summaries.iter().collect();
        let rr = rr_extrapolate(&refs, &scheme, &star).unwrap();
        for err in &rr.err_rr {
            assert!(*err < 1e-12);
        }
    }

    #[test]
    fn quadratic_terms_fall_to_solver_tolerance() {
        let cps = [1u64, 10];
        let star = DVector::from_vec(vec![0.5, 0.5]);
        let v1 = DVector::from_vec(vec![1.0, -1.0]);
        let v2 = DVector::from_vec(vec![-0.3, 0.8]);
        let alphas = [0.1, 0.2, 0.3];
        let scheme = rr_coefficients(&alphas).unwrap();
        let summaries: Vec<TrajectorySummary> = alphas
            .iter()
            .map(|&a| synthetic_summary(&(&star + &v1 * a + &v2 * (a * a)), &cps, a, 3))
            .collect();
        let refs: Vec<&TrajectorySummary> = summaries.iter().collect();
        let rr = rr_extrapolate(&refs, &scheme, &star).unwrap();
        for err in &rr.err_rr {
            assert!(*err < 1e-10);
        }
    }

    #[test]
    fn affine_shift_passes_through() {
        // Adding a constant to every input adds exactly that constant.
        let cps = [1u64, 10];
        let star = DVector::zeros(1);
        let alphas = [0.1, 0.2];
        let scheme = rr_coefficients(&alphas).unwrap();
        let base: Vec<TrajectorySummary> = alphas
            .iter()
            .map(|&a| synthetic_summary(&DVector::from_vec(vec![a]), &cps, a, 3))
            .collect();
        let shifted: Vec<TrajectorySummary> = alphas
            .iter()
            .map(|&a| synthetic_summary(&DVector::from_vec(vec![a + 5.0]), &cps, a, 3))
            .collect();
        let rr0 = rr_extrapolate(&base.iter().collect::<Vec<_>>(), &scheme, &star).unwrap();
        let rr1 = rr_extrapolate(&shifted.iter().collect::<Vec<_>>(), &scheme, &star).unwrap();
        for (a, b) in rr0.theta_rr.iter().zip(&rr1.theta_rr) {
            assert_abs_diff_eq!(b[0] - a[0], 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let star = DVector::zeros(1);
        let v = DVector::from_vec(vec![1.0]);
        let a = synthetic_summary(&v, &[1, 10], 0.1, 3);
        let b = synthetic_summary(&v, &[1, 20], 0.2, 3);
        let scheme = rr_coefficients(&[0.1, 0.2]).unwrap();
        assert!(matches!(
            rr_extrapolate(&[&a, &b], &scheme, &star),
            Err(Error::AlignmentError(_))
        ));
        let c = synthetic_summary(&v, &[1, 10], 0.2, 4);
        assert!(matches!(
            rr_extrapolate(&[&a, &c], &scheme, &star),
            Err(Error::AlignmentError(_))
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn weights_satisfy_defining_system(
                raw in proptest::collection::vec(0.05f64..3.0, 1..=6)
            ) {
                // Spread duplicates apart instead of rejecting.
                let mut alphas = raw.clone();
                alphas.sort_by(f64::total_cmp);
                for i in 1..alphas.len() {
                    if alphas[i] - alphas[i - 1] < 1e-3 {
                        alphas[i] = alphas[i - 1] * 1.1 + 1e-3;
                    }
                }
                let scheme = rr_coefficients(&alphas).unwrap();
                let (sum_res, pow_res) = scheme.residuals();
                prop_assert!(sum_res < 1e-9);
                prop_assert!(pow_res < 1e-9);
            }
        }
    }
}
