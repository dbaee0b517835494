//! Scratch probe for calibrating test constants (not part of the build).

use lsa_core::bias;
use lsa_core::engine::{self, K0Policy};
use lsa_core::extrapolation::{rr_coefficients, rr_extrapolate};
use lsa_core::problem::random_problem;
use lsa_core::td::{problematic_features, problematic_mrp, td_problem};
use nalgebra::DVector;

/// Average a curve's vectors over seeds and tail checkpoints, then take
/// the error norm.
fn tail_mean_error(
    curves: &[Vec<DVector<f64>>],
    checkpoints: &[u64],
    theta_star: &DVector<f64>,
) -> f64 {
    let last = *checkpoints.last().unwrap() as f64;
    let cutoff = last / 10f64.powf(0.5);
    let mut acc = DVector::zeros(theta_star.len());
    let mut count = 0usize;
    for curve in curves {
        for (ci, &k) in checkpoints.iter().enumerate() {
            if k as f64 >= cutoff {
                acc += &curve[ci];
                count += 1;
            }
        }
    }
    acc /= count as f64;
    (acc - theta_star).norm()
}

fn main() {
    let t0 = std::time::Instant::now();
    for &seed in &[453u64, 572] {
        let (chain, problem) = random_problem(8, 4, seed).unwrap();
        let b = |alpha: f64| {
            bias::exact_stationary_mean(&problem, &chain, alpha)
                .unwrap()
                .bias
        };
        let (b2, b4, b8) = (b(0.2), b(0.4), b(0.8));
        println!(
            "seed {seed}: oracle ta {:.3}/{:.3} rr {:.4}->{:.4} ratio {:.2}",
            b4.norm() / b2.norm(),
            b8.norm() / b4.norm(),
            (&b2 * 2.0 - &b4).norm(),
            (&b4 * 2.0 - &b8).norm(),
            (&b4 * 2.0 - &b8).norm() / (&b2 * 2.0 - &b4).norm()
        );
        let alphas = [0.2, 0.4, 0.8];
        for (nseeds, base) in [(800u64, 9000u64), (800, 50000)] {
            let mut ta_curves: Vec<Vec<Vec<DVector<f64>>>> =
                vec![Vec::new(), Vec::new(), Vec::new()];
            let mut rr_s_curves: Vec<Vec<DVector<f64>>> = Vec::new();
            let mut rr_b_curves: Vec<Vec<DVector<f64>>> = Vec::new();
            let mut cps = Vec::new();
            let scheme_s = rr_coefficients(&[0.2, 0.4]).unwrap();
            let scheme_b = rr_coefficients(&[0.4, 0.8]).unwrap();
            use rayon::prelude::*;
            let results: Vec<_> = (0..nseeds)
                .into_par_iter()
                .map(|s| {
                    let outs = engine::simulate_multi(
                        &problem, &chain, &alphas, 1_000_000, base + s, K0Policy::Half,
                    )
                    .unwrap();
                    let sums: Vec<_> = outs.into_iter().map(|o| o.unwrap()).collect();
                    let rr_s = rr_extrapolate(
                        &[&sums[0], &sums[1]], &scheme_s, &problem.theta_star,
                    )
                    .unwrap();
                    let rr_b = rr_extrapolate(
                        &[&sums[1], &sums[2]], &scheme_b, &problem.theta_star,
                    )
                    .unwrap();
                    (sums, rr_s.theta_rr, rr_b.theta_rr)
                })
                .collect();
            for (sums, rs, rb) in results {
                cps = sums[0].checkpoints.clone();
                for i in 0..3 {
                    ta_curves[i].push(sums[i].theta_bar.clone());
                }
                rr_s_curves.push(rs);
                rr_b_curves.push(rb);
            }
            let ta: Vec<f64> = (0..3)
                .map(|i| tail_mean_error(&ta_curves[i], &cps, &problem.theta_star))
                .collect();
            let rs = tail_mean_error(&rr_s_curves, &cps, &problem.theta_star);
            let rb = tail_mean_error(&rr_b_curves, &cps, &problem.theta_star);
            println!(
                "  S={nseeds} base={base}: ta {:.4}/{:.4}/{:.4} ratios {:.2} {:.2}; rr {rs:.4}->{rb:.4} ratio {:.2} [t={:?}]",
                ta[0], ta[1], ta[2],
                ta[1] / ta[0],
                ta[2] / ta[1],
                rb / rs,
                t0.elapsed()
            );
        }
    }
    let mrp = problematic_mrp();
    let (tchain, tproblem) = td_problem(&mrp, &problematic_features()).unwrap();
    let alphas: Vec<f64> = (0..6).map(|i| 1.9 + 0.2 * i as f64).collect();
    let scheme = rr_coefficients(&alphas).unwrap();
    for (nseeds, base) in [(384u64, 7000u64), (384, 27000)] {
        let mut rr_curves: Vec<Vec<DVector<f64>>> = Vec::new();
        let mut ta_curves: Vec<Vec<Vec<DVector<f64>>>> = vec![Vec::new(); 6];
        let mut cps = Vec::new();
        use rayon::prelude::*;
        let results: Vec<_> = (0..nseeds)
            .into_par_iter()
            .map(|s| {
                let outs = engine::simulate_multi(
                    &tproblem, &tchain, &alphas, 1_000_000, base + s, K0Policy::Half,
                )
                .unwrap();
                let sums: Vec<_> = outs.into_iter().map(|o| o.unwrap()).collect();
                let refs: Vec<_> = sums.iter().collect();
                let rr = rr_extrapolate(&refs, &scheme, &tproblem.theta_star).unwrap();
                (sums, rr.theta_rr)
            })
            .collect();
        for (sums, rr) in results {
            cps = sums[0].checkpoints.clone();
            rr_curves.push(rr);
            for i in 0..6 {
                ta_curves[i].push(sums[i].theta_bar.clone());
            }
        }
        let best_ta = (0..6)
            .map(|i| tail_mean_error(&ta_curves[i], &cps, &tproblem.theta_star))
            .fold(f64::INFINITY, f64::min);
        let rr6 = tail_mean_error(&rr_curves, &cps, &tproblem.theta_star);
        println!(
            "td-rr6 S={nseeds} base={base}: best TA {best_ta:.5} RR6 {rr6:.5} factor {:.0} [t={:?}]",
            best_ta / rr6,
            t0.elapsed()
        );
    }
}
