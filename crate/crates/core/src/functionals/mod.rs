//! Posterior functionals computed from stored snapshots.
//!
//! Every functional is evaluated per snapshot and summarized across
//! snapshots by the mean and the equal-tailed 95% interval. Covariate-
//! dependent weights are normalized over the `N` truncated components.

mod agreement;
mod conditional;
mod curves;
mod latent;

use serde::{Deserialize, Serialize};

pub use agreement::{
    agreement_prob_curve, agreement_table, polychoric_draw, polychoric_draws, AgreementCell, AgreementEvent,
    AgreementMode, AgreementTable,
};
pub use conditional::McSettings;
pub use curves::{inverse_covariate_density, joint_cell_prob, marginal_curve, ordinal_covariate_curve, x_free_cell_prob};
pub use latent::{latent_score_density, LatentDensity};

use crate::summary::{summarize, Summary};
use crate::{Error, Result};

/// Per-draw values of a functional over a grid, with summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub grid: Vec<f64>,
    /// `draws[s][g]`: value under snapshot `s` at grid point `g`. NaN marks
    /// a flagged cell.
    pub draws: Vec<Vec<f64>>,
    pub summaries: Vec<Summary>,
    /// Number of flagged (snapshot, grid point) cells.
    pub flagged: usize,
}

impl CurveEstimate {
    pub(crate) fn from_draws(grid: Vec<f64>, draws: Vec<Vec<f64>>) -> Self {
        let summaries = (0..grid.len())
            .map(|g| summarize(&draws.iter().map(|d| d[g]).collect::<Vec<_>>()))
            .collect();
        let flagged = draws.iter().flatten().filter(|v| v.is_nan()).count();
        Self {
            grid,
            draws,
            summaries,
            flagged,
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.mean).collect()
    }

    pub fn band_widths(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.hi95 - s.lo95).collect()
    }
}

/// Grid over one covariate. Other covariates are integrated out through the
/// component marginals, or held at `fixed` (a full covariate vector whose
/// entry for `covariate` is ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAxis {
    pub covariate: usize,
    pub values: Vec<f64>,
    #[serde(default)]
    pub fixed: Option<Vec<f64>>,
}

impl CurveAxis {
    pub fn marginal(covariate: usize, values: Vec<f64>) -> Self {
        Self {
            covariate,
            values,
            fixed: None,
        }
    }

    pub(crate) fn validate(&self, p: usize) -> Result<()> {
        if self.covariate >= p {
            return Err(Error::invalid(format!(
                "covariate index {} out of range for {p} covariates",
                self.covariate
            )));
        }
        if self.values.is_empty() || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("curve grid must be nonempty and finite"));
        }
        if let Some(f) = &self.fixed {
            if f.len() != p || f.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("fixed covariate vector must be finite with one entry per covariate"));
            }
        }
        Ok(())
    }

    /// Conditioning covariates and a function producing their values at a grid point.
    pub(crate) fn given(&self, p: usize) -> Vec<usize> {
        match self.fixed {
            Some(_) => (0..p).collect(),
            None => vec![self.covariate],
        }
    }

    pub(crate) fn point(&self, g: usize) -> Vec<f64> {
        match &self.fixed {
            Some(f) => {
                let mut x = f.clone();
                x[self.covariate] = self.values[g];
                x
            }
            None => vec![self.values[g]],
        }
    }
}

/// `n` equally spaced points over `[lo, hi]` widened by 5% of the range on
/// each side.
pub fn default_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let pad = 0.05 * (hi - lo);
    let (a, b) = (lo - pad, hi + pad);
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub const DEFAULT_GRID_POINTS: usize = 50;

#[cfg(test)]
mod tests;
