//! Summary statistics used by the simulation harness and the tests.

/// Ordinary least squares fit of `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero when fewer than three points).
    pub slope_se: f64,
}

/// Fit a line through `(x, y)` points. Needs at least two points.
pub fn ols(points: &[(f64, f64)]) -> OlsFit {
    let n = points.len() as f64;
    assert!(points.len() >= 2, "need at least two points for a line fit");
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let slope_se = if points.len() > 2 {
        let rss: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    OlsFit {
        slope,
        intercept,
        slope_se,
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    assert!(!samples.is_empty());
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Plateau estimate: median of the curve over the last half decade of
/// checkpoints (robust to residual Monte Carlo noise).
pub fn plateau(checkpoints: &[u64], values: &[f64]) -> f64 {
    assert_eq!(checkpoints.len(), values.len());
    let last = *checkpoints.last().expect("nonempty curve") as f64;
    let cutoff = last / 10f64.powf(0.5);
    let tail: Vec<f64> = checkpoints
        .iter()
        .zip(values)
        .filter(|(k, _)| **k as f64 >= cutoff)
        .map(|(_, v)| *v)
        .collect();
    median(&tail)
}

/// Log-log slope of a curve over its last `decades` decades.
pub fn loglog_slope(checkpoints: &[u64], values: &[f64], decades: f64) -> f64 {
    let last = *checkpoints.last().expect("nonempty curve") as f64;
    let cutoff = last / 10f64.powf(decades);
    let pts: Vec<(f64, f64)> = checkpoints
        .iter()
        .zip(values)
        .filter(|(k, v)| **k as f64 >= cutoff && **v > 0.0)
        .map(|(k, v)| ((*k as f64).ln(), v.ln()))
        .collect();
    ols(&pts).slope
}
