//! Posterior summaries of scalar draw sequences.

use serde::{Deserialize, Serialize};

/// Posterior mean with an equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Summarizes finite draws; non-finite values are skipped.
/// Returns NaN fields when no finite draw remains.
pub fn summarize(draws: &[f64]) -> Summary {
    let mut v: Vec<f64> = draws.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Summary {
            mean: f64::NAN,
            lo95: f64::NAN,
            hi95: f64::NAN,
        };
    }
    v.sort_by(f64::total_cmp);
    Summary {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        lo95: quantile_sorted(&v, 0.025),
        hi95: quantile_sorted(&v, 0.975),
    }
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Standard error of the mean of a correlated sequence by non-overlapping
/// batch means. Trailing draws that do not fill a batch are dropped.
pub fn batch_means_se(x: &[f64], n_batches: usize) -> f64 {
    let size = x.len() / n_batches.max(2);
    if size == 0 {
        return f64::NAN;
    }
    let batches: Vec<f64> = x.chunks_exact(size).take(n_batches.max(2)).map(mean).collect();
    (variance(&batches) / batches.len() as f64).sqrt()
}

/// Effective number of independent draws implied by batch means.
pub fn effective_size(x: &[f64], n_batches: usize) -> f64 {
    let se = batch_means_se(x, n_batches);
    let var = variance(x);
    if !(se > 0.0) || !(var > 0.0) {
        return x.len() as f64;
    }
    (var / (se * se)).min(x.len() as f64)
}

/// Within-chain convergence z-score comparing the first 10% and last 50%.
pub fn geweke_z(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 40 {
        return f64::NAN;
    }
    let (a, b) = (&x[..n / 10], &x[n / 2..]);
    let se2 = batch_means_se(a, 4).powi(2) + batch_means_se(b, 20).powi(2);
    (mean(a) - mean(b)) / se2.sqrt()
}
