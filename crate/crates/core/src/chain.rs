//! Finite-state Markov chain toolkit.
//!
//! A [`FiniteChain`] couples a row-stochastic kernel with its stationary
//! distribution and a structural ergodicity flag. On top of it the module
//! provides time reversal, the absolute spectral gap, the mixing time of a
//! pair of state functions, convex interpolation toward the rank-one
//! independent-sampling kernel, and seeded random chain generation.

use nalgebra::{DMatrix, DVector};
use petgraph::graph::DiGraph;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{stream, StreamId};

/// Row-sum slack accepted on input kernels.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Residual accepted on the stationary equation.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Detailed-balance slack below which a chain is flagged reversible.
pub const REVERSIBLE_TOL: f64 = 1e-10;
/// Eigenvalue-1 multiplicity tolerance for the spectral gap.
const UNIT_EIG_TOL: f64 = 1e-9;
/// Default cap on the mixing-time search.
pub const MIXING_CAP: u64 = 1_000_000;

/// A finite-state chain: kernel, stationary distribution, and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    /// State count.
    pub n: usize,
    /// Row-stochastic transition matrix.
    pub kernel: DMatrix<f64>,
    /// Stationary probability vector.
    pub pi: DVector<f64>,
    /// True iff the positive-entry digraph is irreducible and aperiodic.
    pub ergodic: bool,
    /// Sup-norm residual of `pi * P - pi` at construction time.
    pub stationary_residual: f64,
    /// Optional display label (carried through file round trips).
    pub label: Option<String>,
}

impl FiniteChain {
    /// Build a chain from a row-stochastic kernel, computing its stationary
    /// distribution.
    pub fn new(kernel: DMatrix<f64>) -> Result<Self> {
        validate_kernel(&kernel)?;
        let pi = stationary_distribution(&kernel)?;
        Self::with_stationary(kernel, pi)
    }

    /// Build a chain from a kernel and a known stationary distribution.
    ///
    /// The pair is still validated: rows must sum to one and `pi` must be
    /// stationary within tolerance.
    pub fn with_stationary(kernel: DMatrix<f64>, pi: DVector<f64>) -> Result<Self> {
        validate_kernel(&kernel)?;
        let n = kernel.nrows();
        if pi.len() != n {
            return Err(Error::InvalidParameter(format!(
                "stationary vector has length {} for an {n}-state kernel",
                pi.len()
            )));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > ROW_SUM_TOL || pi.iter().any(|&p| p < -ROW_SUM_TOL) {
            return Err(Error::InvalidParameter(
                "stationary vector is not a probability distribution".into(),
            ));
        }
        let residual = stationary_residual(&kernel, &pi);
        if residual > STATIONARY_TOL {
            return Err(Error::InvalidParameter(format!(
                "vector is not stationary: residual {residual:.3e}"
            )));
        }
        let ergodic = is_irreducible(&kernel) && is_aperiodic(&kernel);
        Ok(Self {
            n,
            kernel,
            pi,
            ergodic,
            stationary_residual: residual,
            label: None,
        })
    }

    /// Attach a label (used by the file formats and CSV headers).
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Per-row cumulative probability tables for inverse-CDF sampling.
    pub fn cumulative_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|x| {
                let mut acc = 0.0;
                let mut row: Vec<f64> = (0..self.n)
                    .map(|y| {
                        acc += self.kernel[(x, y)];
                        acc
                    })
                    .collect();
                // Guard the last entry against rounding below 1.
                if let Some(last) = row.last_mut() {
                    *last = f64::max(*last, 1.0);
                }
                row
            })
            .collect()
    }

    /// Cumulative table of the stationary distribution.
    pub fn cumulative_pi(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cum: Vec<f64> = self
            .pi
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cum.last_mut() {
            *last = f64::max(*last, 1.0);
        }
        cum
    }
}

/// Inverse-CDF draw from a cumulative table.
pub fn sample_cumulative(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Spectral summary of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    /// Absolute spectral gap in `[0, 1]`.
    pub gap: f64,
    /// Second-largest eigenvalue modulus.
    pub slem: f64,
    /// Detailed balance holds within [`REVERSIBLE_TOL`].
    pub reversible: bool,
}

fn validate_kernel(kernel: &DMatrix<f64>) -> Result<()> {
    let n = kernel.nrows();
    if n == 0 || kernel.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "kernel must be square and nonempty, got {}x{}",
            n,
            kernel.ncols()
        )));
    }
    for x in 0..n {
        let mut sum = 0.0;
        for y in 0..n {
            let p = kernel[(x, y)];
            if !(0.0..=1.0 + ROW_SUM_TOL).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "kernel entry ({x},{y}) = {p} outside [0,1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "kernel row {x} sums to {sum}, not 1"
            )));
        }
    }
    Ok(())
}

fn positive_entry_graph(kernel: &DMatrix<f64>) -> DiGraph<(), ()> {
    let n = kernel.nrows();
    let mut g = DiGraph::new();
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for x in 0..n {
        for y in 0..n {
            if kernel[(x, y)] > 0.0 {
                g.add_edge(nodes[x], nodes[y], ());
            }
        }
    }
    g
}

/// Strongly connected components of the positive-entry digraph.
fn components(kernel: &DMatrix<f64>) -> Vec<Vec<usize>> {
    petgraph::algo::tarjan_scc(&positive_entry_graph(kernel))
        .into_iter()
        .map(|c| c.into_iter().map(|ix| ix.index()).collect())
        .collect()
}

/// Recurrent classes: components with no edge leaving them.
fn recurrent_classes(kernel: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let comps = components(kernel);
    let n = kernel.nrows();
    let mut comp_of = vec![0usize; n];
    for (ci, comp) in comps.iter().enumerate() {
        for &s in comp {
            comp_of[s] = ci;
        }
    }
    comps
        .iter()
        .enumerate()
        .filter(|(ci, comp)| {
            comp.iter().all(|&x| {
                (0..n).all(|y| kernel[(x, y)] == 0.0 || comp_of[y] == *ci)
            })
        })
        .map(|(_, comp)| comp.clone())
        .collect()
}

/// Structural irreducibility: one strongly connected component.
pub fn is_irreducible(kernel: &DMatrix<f64>) -> bool {
    components(kernel).len() == 1
}

/// Structural aperiodicity via breadth-first level labeling.
///
/// The period is the gcd over edges `(u, v)` of `level(u) + 1 - level(v)`;
/// the chain is aperiodic iff the gcd is 1. Only meaningful for
/// irreducible kernels; reducible kernels report the gcd over the
/// component of state 0.
pub fn is_aperiodic(kernel: &DMatrix<f64>) -> bool {
    let n = kernel.nrows();
    let mut level = vec![i64::MIN; n];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0usize);
    let mut g: i64 = 0;
    while let Some(x) = queue.pop_front() {
        for y in 0..n {
            if kernel[(x, y)] > 0.0 {
                if level[y] == i64::MIN {
                    level[y] = level[x] + 1;
                    queue.push_back(y);
                } else {
                    let diff = level[x] + 1 - level[y];
                    g = gcd(g, diff.abs());
                    if g == 1 {
                        return true;
                    }
                }
            }
        }
    }
    g == 1
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn stationary_residual(kernel: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    let left = kernel.transpose() * pi;
    (left - pi).amax()
}

/// Stationary distribution of a row-stochastic kernel.
///
/// Reducible kernels with a single recurrent class are accepted (the
/// distribution is supported on that class); more than one recurrent class
/// raises [`Error::NonUniqueStationary`]. The direct linear solve appends a
/// normalization row to `P^T - I`; power iteration is the fallback when the
/// solve comes back inconsistent.
pub fn stationary_distribution(kernel: &DMatrix<f64>) -> Result<DVector<f64>> {
    validate_kernel(kernel)?;
    let n = kernel.nrows();
    let classes = recurrent_classes(kernel);
    if classes.len() != 1 {
        return Err(Error::NonUniqueStationary {
            classes: classes.len(),
        });
    }
    // Transient states carry exactly zero mass; pin them so downstream
    // checks (time reversal, positivity) see exact zeros.
    let mut recurrent = vec![false; n];
    for &s in &classes[0] {
        recurrent[s] = true;
    }
    let pin_transients = |mut pi: DVector<f64>| -> DVector<f64> {
        for (x, flag) in recurrent.iter().enumerate() {
            if !flag {
                pi[x] = 0.0;
            }
        }
        let total: f64 = pi.iter().sum();
        pi / total
    };

    // Stacked system: (P^T - I) pi = 0 plus sum(pi) = 1, solved in the
    // least-squares sense.
    let mut m = DMatrix::zeros(n + 1, n);
    for x in 0..n {
        for y in 0..n {
            m[(y, x)] = kernel[(x, y)];
        }
        m[(x, x)] -= 1.0;
    }
    for y in 0..n {
        m[(n, y)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let direct = m
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::SpectralFailure(format!("least-squares solve failed: {e}")))?;

    let cleaned = clean_distribution(&direct);
    if let Some(pi) = cleaned {
        let pi = pin_transients(pi);
        if stationary_residual(kernel, &pi) <= STATIONARY_TOL {
            return Ok(pi);
        }
    }

    // Robustness net: power iteration from uniform.
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..200_000 {
        let next = kernel.transpose() * &pi;
        let diff = (&next - &pi).amax();
        pi = next;
        let total: f64 = pi.iter().sum();
        pi /= total;
        if diff < 1e-15 {
            break;
        }
    }
    let pi = clean_distribution(&pi).ok_or_else(|| {
        Error::SpectralFailure("power iteration produced an invalid distribution".into())
    })?;
    let pi = pin_transients(pi);
    let residual = stationary_residual(kernel, &pi);
    if residual > STATIONARY_TOL {
        return Err(Error::SpectralFailure(format!(
            "stationary solve residual {residual:.3e} exceeds {STATIONARY_TOL:.0e}"
        )));
    }
    Ok(pi)
}

/// Clamp roundoff negatives to zero and renormalize; reject real negatives.
fn clean_distribution(v: &DVector<f64>) -> Option<DVector<f64>> {
    let mut out = v.clone();
    for p in out.iter_mut() {
        if *p < 0.0 {
            if *p < -1e-9 {
                return None;
            }
            *p = 0.0;
        }
    }
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return None;
    }
    out /= total;
    Some(out)
}

/// Time-reversed kernel `P*[x][y] = pi[y] P[y][x] / pi[x]`.
///
/// Requires a strictly positive stationary distribution.
pub fn time_reversal(chain: &FiniteChain) -> Result<DMatrix<f64>> {
    let n = chain.n;
    for (x, &p) in chain.pi.iter().enumerate() {
        if p <= 0.0 {
            return Err(Error::DegenerateStationary { state: x });
        }
    }
    let mut rev = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            rev[(x, y)] = chain.pi[y] * chain.kernel[(y, x)] / chain.pi[x];
        }
    }
    Ok(rev)
}

/// Detailed-balance violation `max_{x,y} |pi_x P_xy - pi_y P_yx|`.
pub fn detailed_balance_violation(chain: &FiniteChain) -> f64 {
    let mut worst = 0.0f64;
    for x in 0..chain.n {
        for y in 0..chain.n {
            let v = (chain.pi[x] * chain.kernel[(x, y)] - chain.pi[y] * chain.kernel[(y, x)]).abs();
            worst = worst.max(v);
        }
    }
    worst
}

/// Absolute spectral gap, second-largest eigenvalue modulus, and the
/// reversibility flag.
///
/// For reversible chains the eigenvalues are taken from the symmetrized
/// similarity `D^{1/2} P D^{-1/2}` (exactly real); otherwise from the real
/// Schur form. The gap is `1 - slem` when eigenvalue 1 is simple and 0
/// otherwise.
pub fn spectral_report(chain: &FiniteChain) -> Result<SpectralReport> {
    let reversible = detailed_balance_violation(chain) < REVERSIBLE_TOL;
    let moduli: Vec<f64> = if reversible && chain.pi.iter().all(|&p| p > 0.0) {
        let n = chain.n;
        let mut sym = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                sym[(x, y)] = chain.pi[x].sqrt() * chain.kernel[(x, y)] / chain.pi[y].sqrt();
            }
        }
        let sym = (&sym + sym.transpose()) * 0.5;
        linalg::symmetric_eigenvalues(&sym)?
            .into_iter()
            .map(f64::abs)
            .collect()
    } else {
        linalg::eigenvalues(&chain.kernel)?
            .into_iter()
            .map(|l| l.norm())
            .collect()
    };

    // Multiplicity of eigenvalue 1 by modulus is not enough (complex
    // eigenvalues on the unit circle exist for periodic chains), so count
    // eigenvalues genuinely near +1.
    let near_one = if reversible && chain.pi.iter().all(|&p| p > 0.0) {
        // Moduli came from the symmetric solve; recount on real values.
        moduli.iter().filter(|&&m| (m - 1.0).abs() <= UNIT_EIG_TOL).count()
    } else {
        linalg::eigenvalues(&chain.kernel)?
            .iter()
            .filter(|l| (l.re - 1.0).abs() <= UNIT_EIG_TOL && l.im.abs() <= UNIT_EIG_TOL)
            .count()
    };

    // Drop a single modulus-1 entry (the stationary eigenvalue) and take
    // the largest remaining modulus.
    let mut sorted = moduli.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.pop();
    let slem = sorted.last().copied().unwrap_or(0.0).min(1.0);
    let simple = near_one == 1;
    let gap = if simple { 1.0 - slem } else { 0.0 };
    Ok(SpectralReport {
        gap,
        slem,
        reversible,
    })
}

/// Mixing time of the pair of state functions `(a_maps, b_maps)`.
///
/// Returns the smallest `tau >= 1` such that for every start state the
/// conditional means of both functions after `tau` steps deviate from
/// their stationary means by at most `eps` times the respective sup norms
/// (spectral norm for the matrices, Euclidean for the vectors). The
/// deviation at step `k+1` is the kernel applied to the deviation at step
/// `k`, so the per-step maximum is nonincreasing and the first passage is
/// exact. The search is capped at `cap` steps.
pub fn mixing_time_capped(
    chain: &FiniteChain,
    a_maps: &[DMatrix<f64>],
    b_maps: &[DVector<f64>],
    eps: f64,
    cap: u64,
) -> Result<u64> {
    if !(0.0 < eps && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mixing tolerance must lie in (0,1), got {eps}"
        )));
    }
    let n = chain.n;
    if a_maps.len() != n || b_maps.len() != n {
        return Err(Error::InvalidParameter(
            "need one matrix and one vector per state".into(),
        ));
    }
    let a_max = a_maps.iter().map(linalg::spectral_norm).fold(0.0, f64::max);
    let b_max = b_maps.iter().map(|b| b.norm()).fold(0.0, f64::max);

    let mut a_bar = DMatrix::zeros(a_maps[0].nrows(), a_maps[0].ncols());
    for (x, a) in a_maps.iter().enumerate() {
        a_bar += a * chain.pi[x];
    }
    let mut b_bar = DVector::zeros(b_maps[0].len());
    for (x, b) in b_maps.iter().enumerate() {
        b_bar += b * chain.pi[x];
    }

    // Deviations of the conditional means, propagated one step at a time.
    let mut dev_a: Vec<DMatrix<f64>> = a_maps.iter().map(|a| a - &a_bar).collect();
    let mut dev_b: Vec<DVector<f64>> = b_maps.iter().map(|b| b - &b_bar).collect();

    for k in 1..=cap {
        dev_a = apply_kernel_mat(&chain.kernel, &dev_a);
        dev_b = apply_kernel_vec(&chain.kernel, &dev_b);
        let worst_a = dev_a.iter().map(linalg::spectral_norm).fold(0.0, f64::max);
        let worst_b = dev_b.iter().map(|b| b.norm()).fold(0.0, f64::max);
        if worst_a <= eps * a_max && worst_b <= eps * b_max {
            return Ok(k);
        }
    }
    Err(Error::MixingTimeout { cap })
}

/// [`mixing_time_capped`] with the default cap.
pub fn mixing_time(
    chain: &FiniteChain,
    a_maps: &[DMatrix<f64>],
    b_maps: &[DVector<f64>],
    eps: f64,
) -> Result<u64> {
    mixing_time_capped(chain, a_maps, b_maps, eps, MIXING_CAP)
}

fn apply_kernel_mat(kernel: &DMatrix<f64>, f: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let n = kernel.nrows();
    (0..n)
        .map(|x| {
            let mut out = DMatrix::zeros(f[0].nrows(), f[0].ncols());
            for y in 0..n {
                let p = kernel[(x, y)];
                if p != 0.0 {
                    out += &f[y] * p;
                }
            }
            out
        })
        .collect()
}

fn apply_kernel_vec(kernel: &DMatrix<f64>, f: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = kernel.nrows();
    (0..n)
        .map(|x| {
            let mut out = DVector::zeros(f[0].len());
            for y in 0..n {
                let p = kernel[(x, y)];
                if p != 0.0 {
                    out += &f[y] * p;
                }
            }
            out
        })
        .collect()
}

/// Convex interpolation `P^(beta) = beta P + (1 - beta) 1 pi^T`.
///
/// The result keeps the stationary distribution of the input for every
/// `beta` in `[0, 1]`.
pub fn interpolate_kernel(chain: &FiniteChain, beta: f64) -> Result<FiniteChain> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "interpolation weight must lie in [0,1], got {beta}"
        )));
    }
    let n = chain.n;
    let mut kernel = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            kernel[(x, y)] = beta * chain.kernel[(x, y)] + (1.0 - beta) * chain.pi[y];
        }
    }
    FiniteChain::with_stationary(kernel, chain.pi.clone())
}

/// Random ergodic chain: i.i.d. uniform entries, rows normalized,
/// regenerated until irreducible and aperiodic. Deterministic in the seed.
pub fn random_ergodic_chain(n: usize, seed: u64) -> Result<FiniteChain> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 states, got {n}"
        )));
    }
    let mut rng = stream(seed, StreamId::InstanceGen);
    loop {
        let mut kernel = DMatrix::zeros(n, n);
        for x in 0..n {
            let mut row: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            // Absorb rounding into the largest entry so the row sums to 1
            // at working precision.
            let sum_after: f64 = row.iter().sum();
            let argmax = (0..n).fold(0, |m, i| if row[i] > row[m] { i } else { m });
            row[argmax] += 1.0 - sum_after;
            for (y, v) in row.iter().enumerate() {
                kernel[(x, y)] = *v;
            }
        }
        if is_irreducible(&kernel) && is_aperiodic(&kernel) {
            return FiniteChain::new(kernel);
        }
        // Positive matrices are always ergodic; this retry is defensive.
    }
}

/// Rank-one kernel `1 pi^T`: every row equals the stationary distribution.
pub fn independent_sampling_kernel(pi: &DVector<f64>) -> DMatrix<f64> {
    let n = pi.len();
    DMatrix::from_fn(n, n, |_, y| pi[y])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state(p: f64, q: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0 - p, p, q, 1.0 - q])
    }

    #[test]
    fn stationary_symmetric_two_state() {
        let pi = stationary_distribution(&two_state(0.3, 0.3)).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_asymmetric_two_state_closed_form() {
        // Closed form (q/(p+q), p/(p+q)); cross-checked by power iteration.
        let kernel = two_state(0.1, 0.2);
        let pi = stationary_distribution(&kernel).unwrap();
        assert_abs_diff_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-12);

        let mut power = DVector::from_element(2, 0.5);
        for _ in 0..10_000 {
            power = kernel.transpose() * &power;
        }
        assert_abs_diff_eq!(pi[0], power[0], epsilon = 1e-10);
    }

    #[test]
    fn identity_has_no_unique_stationary() {
        let err = stationary_distribution(&DMatrix::identity(3, 3)).unwrap_err();
        assert!(matches!(err, Error::NonUniqueStationary { classes: 3 }));
    }

    #[test]
    fn single_recurrent_class_with_transient_state_is_fine() {
        // State 0 is transient and leaks into the recurrent pair {1, 2}.
        let kernel = DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.5, 0.5],
        );
        let pi = stationary_distribution(&kernel).unwrap();
        assert_abs_diff_eq!(pi[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn reversal_of_reversible_chain_is_identity_map() {
        let chain = FiniteChain::new(two_state(0.1, 0.2)).unwrap();
        let rev = time_reversal(&chain).unwrap();
        assert_abs_diff_eq!((rev - &chain.kernel).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reversal_of_cycle_is_opposite_cycle() {
        let mut kernel = DMatrix::zeros(3, 3);
        kernel[(0, 1)] = 1.0;
        kernel[(1, 2)] = 1.0;
        kernel[(2, 0)] = 1.0;
        let pi = DVector::from_element(3, 1.0 / 3.0);
        let chain = FiniteChain::with_stationary(kernel, pi).unwrap();
        assert!(!chain.ergodic); // period 3
        let rev = time_reversal(&chain).unwrap();
        assert_abs_diff_eq!(rev[(1, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rev[(2, 1)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rev[(0, 2)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reversal_is_an_involution() {
        let chain = random_ergodic_chain(6, 7).unwrap();
        let rev = time_reversal(&chain).unwrap();
        let rev_chain = FiniteChain::with_stationary(rev, chain.pi.clone()).unwrap();
        let back = time_reversal(&rev_chain).unwrap();
        assert!((back - &chain.kernel).amax() < 1e-12);
    }

    #[test]
    fn degenerate_stationary_blocks_reversal() {
        let kernel = DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.5, 0.5],
        );
        let chain = FiniteChain::new(kernel).unwrap();
        let err = time_reversal(&chain).unwrap_err();
        assert!(matches!(err, Error::DegenerateStationary { state: 0 }));
    }

    #[test]
    fn spectral_rank_one_kernel_has_full_gap() {
        let pi = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let chain =
            FiniteChain::with_stationary(independent_sampling_kernel(&pi), pi.clone()).unwrap();
        let report = spectral_report(&chain).unwrap();
        assert_abs_diff_eq!(report.gap, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(report.slem, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn spectral_identity_has_zero_gap() {
        let kernel = DMatrix::identity(3, 3);
        let chain =
            FiniteChain::with_stationary(kernel, DVector::from_element(3, 1.0 / 3.0)).unwrap();
        let report = spectral_report(&chain).unwrap();
        assert_eq!(report.gap, 0.0);
        assert_abs_diff_eq!(report.slem, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_symmetric_two_state() {
        let chain = FiniteChain::new(two_state(0.2, 0.2)).unwrap();
        let report = spectral_report(&chain).unwrap();
        assert!(report.reversible);
        assert_abs_diff_eq!(report.slem, 0.6, epsilon = 1e-10);
        assert_abs_diff_eq!(report.gap, 0.4, epsilon = 1e-10);
    }

    #[test]
    fn mixing_time_is_one_for_independent_sampling() {
        let pi = DVector::from_vec(vec![0.25, 0.75]);
        let chain =
            FiniteChain::with_stationary(independent_sampling_kernel(&pi), pi.clone()).unwrap();
        let a = vec![
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, -0.5),
        ];
        let b = vec![DVector::from_element(1, 1.0), DVector::zeros(1)];
        for eps in [0.5, 0.1, 0.01, 1e-6] {
            assert_eq!(mixing_time(&chain, &a, &b, eps).unwrap(), 1);
        }
    }

    #[test]
    fn mixing_time_is_one_for_constant_functions() {
        let chain = FiniteChain::new(two_state(0.2, 0.2)).unwrap();
        let a = vec![DMatrix::from_element(1, 1, -0.7); 2];
        let b = vec![DVector::from_element(1, 0.3); 2];
        assert_eq!(mixing_time(&chain, &a, &b, 0.01).unwrap(), 1);
    }

    #[test]
    fn mixing_time_matches_brute_force_kernel_powers() {
        // Symmetric 2-state chain, scalar A = (-1, -0.5), b = 0, eps = 0.1.
        let kernel = two_state(0.2, 0.2);
        let chain = FiniteChain::new(kernel.clone()).unwrap();
        let a = vec![
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, -0.5),
        ];
        let b = vec![DVector::zeros(1); 2];
        let eps = 0.1;

        // Brute force: explicit matrix powers of the kernel.
        let a_vals = [-1.0, -0.5];
        let a_bar: f64 = 0.5 * a_vals[0] + 0.5 * a_vals[1];
        let a_max = 1.0;
        let mut expected = None;
        let mut pk = kernel.clone();
        for k in 1..100 {
            let worst = (0..2)
                .map(|x| {
                    ((0..2).map(|y| pk[(x, y)] * a_vals[y]).sum::<f64>() - a_bar).abs()
                })
                .fold(0.0, f64::max);
            if worst <= eps * a_max {
                expected = Some(k);
                break;
            }
            pk = &pk * &kernel;
        }
        let expected = expected.unwrap();
        assert_eq!(expected, 2); // 0.6^k * 0.25 <= 0.1 first holds at k = 2
        assert_eq!(mixing_time(&chain, &a, &b, eps).unwrap(), expected);
    }

    #[test]
    fn mixing_time_monotone_in_eps() {
        let chain = random_ergodic_chain(5, 11).unwrap();
        let mut gen = stream(3, StreamId::InstanceGen);
        let a: Vec<DMatrix<f64>> = (0..5)
            .map(|_| DMatrix::from_fn(2, 2, |_, _| gen.gen::<f64>() - 0.5))
            .collect();
        let b: Vec<DVector<f64>> = (0..5)
            .map(|_| DVector::from_fn(2, |_, _| gen.gen::<f64>() - 0.5))
            .collect();
        let mut last = u64::MAX;
        for eps in [0.01, 0.05, 0.1, 0.5] {
            let tau = mixing_time(&chain, &a, &b, eps).unwrap();
            assert!(tau <= last, "tau_eps must be nonincreasing in eps");
            last = tau;
        }
    }

    #[test]
    fn mixing_timeout_on_periodic_chain() {
        let mut kernel = DMatrix::zeros(2, 2);
        kernel[(0, 1)] = 1.0;
        kernel[(1, 0)] = 1.0;
        let chain =
            FiniteChain::with_stationary(kernel, DVector::from_element(2, 0.5)).unwrap();
        let a = vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, -1.0),
        ];
        let b = vec![DVector::zeros(1); 2];
        let err = mixing_time_capped(&chain, &a, &b, 0.5, 50).unwrap_err();
        assert!(matches!(err, Error::MixingTimeout { cap: 50 }));
    }

    #[test]
    fn interpolation_endpoints() {
        let chain = FiniteChain::new(two_state(0.1, 0.2)).unwrap();
        let at_one = interpolate_kernel(&chain, 1.0).unwrap();
        assert!((at_one.kernel.clone() - &chain.kernel).amax() < 1e-15);
        let at_zero = interpolate_kernel(&chain, 0.0).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_abs_diff_eq!(at_zero.kernel[(x, y)], chain.pi[y], epsilon = 1e-15);
            }
        }
        assert!(interpolate_kernel(&chain, 1.5).is_err());
    }

    #[test]
    fn interpolation_scales_slem_linearly() {
        let chain = FiniteChain::new(two_state(0.2, 0.2)).unwrap();
        let base = spectral_report(&chain).unwrap().slem;
        let half = interpolate_kernel(&chain, 0.5).unwrap();
        let halved = spectral_report(&half).unwrap().slem;
        assert_abs_diff_eq!(halved, 0.5 * base, epsilon = 1e-10);
    }

    #[test]
    fn interpolation_preserves_stationary() {
        let chain = random_ergodic_chain(7, 5).unwrap();
        for beta in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let interp = interpolate_kernel(&chain, beta).unwrap();
            assert!((interp.pi.clone() - &chain.pi).amax() < 1e-10);
        }
    }

    #[test]
    fn random_chain_is_deterministic_and_ergodic() {
        let a = random_ergodic_chain(8, 123).unwrap();
        let b = random_ergodic_chain(8, 123).unwrap();
        assert_eq!(a.kernel, b.kernel);
        assert!(a.ergodic);
        assert!(a.kernel.iter().all(|&p| p > 0.0));
        for x in 0..8 {
            let sum: f64 = (0..8).map(|y| a.kernel[(x, y)]).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        let report = spectral_report(&a).unwrap();
        assert!(report.gap > 0.0);
    }

    #[test]
    fn sample_cumulative_picks_correct_bucket() {
        let cum = vec![0.2, 0.5, 1.0];
        assert_eq!(sample_cumulative(&cum, 0.0), 0);
        assert_eq!(sample_cumulative(&cum, 0.19), 0);
        assert_eq!(sample_cumulative(&cum, 0.2), 1);
        assert_eq!(sample_cumulative(&cum, 0.99), 2);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_kernel(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
            proptest::collection::vec(0.01f64..1.0, n * n).prop_map(move |raw| {
                let mut m = DMatrix::from_vec(n, n, raw);
                for x in 0..n {
                    let sum: f64 = (0..n).map(|y| m[(x, y)]).sum();
                    for y in 0..n {
                        m[(x, y)] /= sum;
                    }
                    let s2: f64 = (0..n).map(|y| m[(x, y)]).sum();
                    m[(x, 0)] += 1.0 - s2;
                }
                m
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn positive_chains_have_positive_gap(kernel in arb_kernel(4)) {
                let chain = FiniteChain::new(kernel).unwrap();
                let report = spectral_report(&chain).unwrap();
                prop_assert!(report.gap > 0.0);
            }

            #[test]
            fn reversal_is_stochastic_and_pi_stationary(kernel in arb_kernel(4)) {
                let chain = FiniteChain::new(kernel).unwrap();
                let rev = time_reversal(&chain).unwrap();
                let rev_chain = FiniteChain::with_stationary(rev, chain.pi.clone()).unwrap();
                let back = time_reversal(&rev_chain).unwrap();
                prop_assert!((back - &chain.kernel).amax() < 1e-12);
            }

            #[test]
            fn interpolation_keeps_pi(kernel in arb_kernel(4), beta in 0.0f64..=1.0) {
                let chain = FiniteChain::new(kernel).unwrap();
                let interp = interpolate_kernel(&chain, beta).unwrap();
                prop_assert!((interp.pi - &chain.pi).amax() < 1e-10);
            }
        }
    }
}
