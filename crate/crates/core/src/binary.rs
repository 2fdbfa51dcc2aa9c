//! Square-root-free Cholesky factorization `Sigma = B^-1 Delta B^-T` and the
//! restricted covariance kernel used for binary latent dimensions.
//!
//! With `B` unit lower-triangular, row `i` of `B W` is the residual of `W_i`
//! regressed on `W_1..W_{i-1}`, so `delta_i = Var(W_i | W_<i)`. Fixing
//! `delta_1..delta_r` fixes the scale of the first `r` coordinates, which is
//! what identifies binary responses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dist::{cholesky, spd_inverse, symmetrize};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SqrtFreeCholesky {
    /// Unit lower-triangular.
    pub b: DMatrix<f64>,
    pub delta: DVector<f64>,
}

pub fn decompose(sigma: &DMatrix<f64>) -> Result<SqrtFreeCholesky> {
    let l = cholesky(sigma, "covariance")?;
    let d = l.nrows();
    let diag = l.diagonal();
    let mut unit = l.clone();
    for j in 0..d {
        unit.column_mut(j).unscale_mut(diag[j]);
    }
    let b = unit
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or(Error::NotPositiveDefinite { what: "covariance" })?;
    Ok(SqrtFreeCholesky {
        b,
        delta: diag.map(|v| v * v),
    })
}

pub fn recompose(chol: &SqrtFreeCholesky) -> DMatrix<f64> {
    let d = chol.delta.len();
    // B is unit lower-triangular, hence always invertible
    let b_inv = chol
        .b
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .expect("unit triangular factor");
    let mut sigma = &b_inv * DMatrix::from_diagonal(&chol.delta) * b_inv.transpose();
    symmetrize(&mut sigma);
    sigma
}

/// Independent priors on the free parts of the factorization: each
/// below-diagonal regression coefficient is `N(0, coef_var)` and each free
/// `delta_i` is inverse-gamma with the given shape and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedPriors {
    pub coef_var: f64,
    pub delta_shape: f64,
    pub delta_scale: f64,
}

impl Default for RestrictedPriors {
    fn default() -> Self {
        Self {
            coef_var: 10.0,
            delta_shape: 2.0,
            delta_scale: 1.0,
        }
    }
}

impl RestrictedPriors {
    pub fn validate(&self) -> Result<()> {
        if !(self.coef_var > 0.0 && self.delta_shape > 0.0 && self.delta_scale > 0.0) {
            return Err(Error::invalid("restricted kernel prior parameters must be positive"));
        }
        Ok(())
    }
}

fn check_fixed(fixed_delta: &[f64], d: usize) -> Result<()> {
    if fixed_delta.len() > d {
        return Err(Error::invalid(format!("{} fixed deltas for dimension {d}", fixed_delta.len())));
    }
    if let Some(v) = fixed_delta.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("fixed delta must be positive, got {v}")));
    }
    Ok(())
}

fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    scale / g
}

/// Prior draw of a covariance whose first `fixed_delta.len()` conditional
/// variances are pinned.
pub fn sample_restricted_sigma<R: Rng + ?Sized>(
    d: usize,
    fixed_delta: &[f64],
    priors: &RestrictedPriors,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    check_fixed(fixed_delta, d)?;
    priors.validate()?;
    let sd = priors.coef_var.sqrt();
    let b = DMatrix::from_fn(d, d, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => sd * rng.sample::<f64, _>(StandardNormal),
        std::cmp::Ordering::Less => 0.0,
    });
    let delta = DVector::from_fn(d, |i, _| match fixed_delta.get(i) {
        Some(&v) => v,
        None => sample_inv_gamma(priors.delta_shape, priors.delta_scale, rng),
    });
    Ok(recompose(&SqrtFreeCholesky { b, delta }))
}

/// One Gibbs pass over the factorization of `current` given centered
/// observations (rows of `resid`, each `w_i - mu`). Row `i` of the
/// factorization is a normal linear regression of column `i` on columns
/// `0..i`: coefficients are drawn given the current `delta_i`, then the free
/// `delta_i` given the new coefficients.
pub fn update_restricted_sigma<R: Rng + ?Sized>(
    resid: &DMatrix<f64>,
    current: &DMatrix<f64>,
    fixed_delta: &[f64],
    priors: &RestrictedPriors,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = current.nrows();
    check_fixed(fixed_delta, d)?;
    let m = resid.nrows();
    let mut fact = decompose(current)?;
    for (i, &v) in fixed_delta.iter().enumerate() {
        fact.delta[i] = v;
    }
    for i in 0..d {
        let y = resid.column(i);
        let mut rss = y.norm_squared();
        if i > 0 {
            let x = resid.columns(0, i);
            let delta = fact.delta[i];
            let mut prec = x.transpose() * x / delta;
            for t in 0..i {
                prec[(t, t)] += 1.0 / priors.coef_var;
            }
            let cov = spd_inverse(&prec, "regression posterior precision")?;
            let mean = &cov * (x.transpose() * y) / delta;
            let l = cholesky(&cov, "regression posterior covariance")?;
            let z = DVector::from_fn(i, |_, _| rng.sample::<f64, _>(StandardNormal));
            let beta = mean + l * z;
            for t in 0..i {
                fact.b[(i, t)] = -beta[t];
            }
            rss = (y - x * beta).norm_squared();
        }
        if i >= fixed_delta.len() {
            fact.delta[i] = sample_inv_gamma(
                priors.delta_shape + 0.5 * m as f64,
                priors.delta_scale + 0.5 * rss,
                rng,
            );
        }
    }
    Ok(recompose(&fact))
}

/// Binary latent dimensions must occupy the leading coordinates.
pub fn check_binary_ordering(binary_dims: &[usize]) -> Result<()> {
    for (pos, &dim) in binary_dims.iter().enumerate() {
        if dim != pos {
            return Err(Error::invalid(format!(
                "binary dimensions must be the leading coordinates 0..{}; found {:?}",
                binary_dims.len(),
                binary_dims
            )));
        }
    }
    Ok(())
}
