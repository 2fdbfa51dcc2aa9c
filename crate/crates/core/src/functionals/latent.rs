use serde::{Deserialize, Serialize};

use crate::gibbs::DrawStore;
use crate::{Error, Result};

/// Histogram density of the stored latent draws of one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDensity {
    /// Bin edges, strictly increasing.
    pub edges: Vec<f64>,
    /// Density per bin; integrates to 1 over the edges.
    pub density: Vec<f64>,
    /// Cut-offs bounding the observed category, for plotting.
    pub interval: (f64, f64),
    pub mean: f64,
}

/// Density of the latent `z_ij` of observation `i` (0-based) from the
/// retained draws. `bins` equal-width bins cover the range of the draws.
pub fn latent_score_density(store: &DrawStore, i: usize, j: usize, bins: usize) -> Result<LatentDensity> {
    let r = store
        .meta
        .retained
        .iter()
        .position(|&o| o == i)
        .ok_or_else(|| Error::invalid(format!("latent draws of observation {i} were not retained")))?;
    if j >= store.meta.k {
        return Err(Error::invalid(format!("ordinal dimension {j} out of range")));
    }
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let z: Vec<f64> = store.latent_trace(r, j).collect();
    if z.is_empty() {
        return Err(Error::invalid("no latent draws stored"));
    }
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|b| lo + width * b as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in &z {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = z.len() as f64;
    Ok(LatentDensity {
        density: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        edges,
        interval: store.meta.cutoffs.interval(j, store.meta.retained_codes[r][j]),
        mean: z.iter().sum::<f64>() / n,
    })
}
