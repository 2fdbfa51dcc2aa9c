//! Default hyperprior derivation from covariate centers and ranges.
//!
//! The joint covariance of `(Z, X)` under a single component decomposes as
//! `E[Sigma] + E[V] + B_m`; each term is assigned `s * D` where `D` holds
//! squared quarter-ranges on the diagonal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{CutoffGrid, Hyperpriors};
use crate::{Error, Result};

/// Share of the total prior covariance assigned to each of the three terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSplit {
    #[default]
    Third,
    Half,
}

impl VarianceSplit {
    pub fn value(self) -> f64 {
        match self {
            VarianceSplit::Third => 1.0 / 3.0,
            VarianceSplit::Half => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorInputs {
    pub centers: Vec<f64>,
    pub ranges: Vec<f64>,
    pub cutoffs: CutoffGrid,
    pub variance_split: VarianceSplit,
    /// `(a_alpha, b_alpha)`, shape and rate.
    pub alpha_prior: (f64, f64),
    /// Explicit latent range per ordinal dimension. Required where the
    /// cut-off span is zero (binary dimensions); `None` entries use the span.
    pub latent_ranges: Vec<Option<f64>>,
}

pub fn derive_hyperpriors(inputs: &PriorInputs) -> Result<Hyperpriors> {
    let k = inputs.cutoffs.dims();
    let p = inputs.centers.len();
    if inputs.ranges.len() != p {
        return Err(Error::invalid("centers and ranges differ in length"));
    }
    if !inputs.latent_ranges.is_empty() && inputs.latent_ranges.len() != k {
        return Err(Error::invalid("latent range overrides must cover every ordinal dimension"));
    }
    let d = k + p;
    let mut a_m = DVector::zeros(d);
    let mut diag = DVector::zeros(d);
    for j in 0..k {
        let span = inputs.cutoffs.span(j);
        let range = match inputs.latent_ranges.get(j).copied().flatten() {
            Some(r) => r,
            None if span > 0.0 => span,
            None => {
                return Err(Error::invalid(format!(
                    "ordinal dimension {} has a single cut-off; supply an explicit latent range",
                    j + 1
                )))
            }
        };
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::invalid(format!("latent range of dimension {} must be positive", j + 1)));
        }
        a_m[j] = inputs.cutoffs.midpoint(j);
        diag[j] = (range / 4.0).powi(2);
    }
    for m in 0..p {
        let (c, r) = (inputs.centers[m], inputs.ranges[m]);
        if !c.is_finite() {
            return Err(Error::invalid(format!("covariate {} has a non-finite center", m + 1)));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!("covariate {} has a degenerate range {r}", m + 1)));
        }
        a_m[k + m] = c;
        diag[k + m] = (r / 4.0).powi(2);
    }
    let (a_alpha, b_alpha) = inputs.alpha_prior;
    if !(a_alpha > 0.0 && b_alpha > 0.0) {
        return Err(Error::invalid("alpha prior parameters must be positive"));
    }

    let s = inputs.variance_split.value();
    let df = d as f64 + 2.0;
    let sd = DMatrix::from_diagonal(&(diag * s));
    let hyper = Hyperpriors {
        a_m,
        b_m: sd.clone(),
        a_v: df,
        b_v: &sd * (df - d as f64 - 1.0),
        a_s: df,
        b_s: &sd * ((df - d as f64 - 1.0) / df),
        nu: df,
        a_alpha,
        b_alpha,
    };
    hyper.validate()?;
    Ok(hyper)
}

/// `gamma(2, rate)` prior on `alpha` whose rate puts the prior mean of
/// alpha at the value `a*` solving `a* log(1 + n / a*) = min(n / 10, 15)`.
pub fn default_alpha_prior(n: usize) -> (f64, f64) {
    const SHAPE: f64 = 2.0;
    if n == 0 {
        return (SHAPE, 1.0);
    }
    let nf = n as f64;
    let target = (nf / 10.0).min(15.0);
    let expected = |a: f64| a * (nf / a).ln_1p();
    // expected() increases from 0 to n on (0, inf)
    let (mut lo, mut hi) = (1e-12, 1.0);
    while expected(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha_star = 0.5 * (lo + hi);
    (SHAPE, SHAPE / alpha_star)
}
