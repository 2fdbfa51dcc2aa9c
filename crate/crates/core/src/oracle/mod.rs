//! Independent oracles and the simulation harness.
//!
//! Nothing here is used by the sampler or the functionals; the oracles share
//! only the data types so that they can check those layers independently.

mod f0;
mod geweke;
mod mc;
mod selftest;
mod suite;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use f0::{F0Density, MixedLaw};
pub use geweke::{geweke_check, GewekeConfig, GewekeReport, GewekeStat};
pub use mc::{mc_cell_prob_oracle, mc_cell_table};
pub use selftest::{self_test, SelfTestResult};
pub use suite::{
    binomial_upper_quantile, oracle_comparisons, oracle_verdict, random_covariates, random_mixture, Comparison,
    OracleVerdict,
};

use crate::dist::{cholesky, sample_mvn};
use crate::gibbs::{DrawStore, Snapshot};
use crate::model::{validate_dataset, Atom, BaseParams, CutoffGrid, Dataset, RawDataset};
use crate::{Error, Result};

/// A known mixture generating synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueMixture {
    pub weights: Vec<f64>,
    pub atoms: Vec<Atom>,
    pub cutoffs: CutoffGrid,
}

impl TrueMixture {
    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() || self.atoms.len() != self.weights.len() {
            return Err(Error::invalid("one weight per atom is required"));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights must form a simplex"));
        }
        let d = self.atoms[0].mean.len();
        if d < self.k() {
            return Err(Error::invalid("atoms are smaller than the number of ordinal dimensions"));
        }
        for a in &self.atoms {
            if a.mean.len() != d {
                return Err(Error::invalid("atoms differ in dimension"));
            }
            cholesky(&a.cov, "true atom covariance")?;
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.cutoffs.dims()
    }

    pub fn d(&self) -> usize {
        self.atoms[0].mean.len()
    }

    pub fn to_snapshot(&self) -> Snapshot {
        let d = self.d();
        Snapshot {
            weights: self.weights.clone(),
            atoms: self.atoms.clone(),
            base: BaseParams {
                m: DVector::zeros(d),
                v: DMatrix::identity(d, d),
                s: DMatrix::identity(d, d),
            },
            alpha: 1.0,
            occupied: self.atoms.len(),
        }
    }

    /// A one-snapshot store, for evaluating true functionals.
    pub fn to_store(&self) -> Result<DrawStore> {
        DrawStore::from_snapshots(vec![self.to_snapshot()], self.cutoffs.clone(), vec![])
    }

    /// Two components whose regressions of `z` on `x` have opposite slopes
    /// and whose weights shift with `x`, giving non-monotone category curves.
    /// The single covariate lives on roughly `[0, 10]`.
    pub fn crossing(cutoffs: CutoffGrid) -> Result<Self> {
        if cutoffs.dims() != 1 {
            return Err(Error::invalid("the crossing design has one ordinal dimension"));
        }
        let mid = cutoffs.midpoint(0);
        let half = 0.5 * cutoffs.span(0).max(1.0);
        let (sz, sx) = (half, 1.5);
        let corr = 0.8;
        let cov = |c: f64| {
            DMatrix::from_row_slice(2, 2, &[sz * sz, c * sz * sx, c * sz * sx, sx * sx])
        };
        let t = Self {
            weights: vec![0.5, 0.5],
            atoms: vec![
                Atom {
                    mean: DVector::from_vec(vec![mid - 0.8 * half, 3.0]),
                    cov: cov(corr),
                },
                Atom {
                    mean: DVector::from_vec(vec![mid + 0.8 * half, 7.0]),
                    cov: cov(-corr),
                },
            ],
            cutoffs,
        };
        t.validate()?;
        Ok(t)
    }
}

/// Draws `n` observations: a component by weight, `(z, x)` from it, then
/// `y` by discretizing `z`. Returns the data and the latent `z` (row-major).
pub fn simulate_dataset<R: Rng + ?Sized>(truth: &TrueMixture, n: usize, rng: &mut R) -> Result<(Dataset, Vec<f64>)> {
    truth.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let k = truth.k();
    let chols = truth
        .atoms
        .iter()
        .map(|a| cholesky(&a.cov, "true atom covariance"))
        .collect::<Result<Vec<_>>>()?;
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n * k);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut r = truth.weights.len() - 1;
        for (l, &w) in truth.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                r = l;
                break;
            }
        }
        let w = sample_mvn(&truth.atoms[r].mean, &chols[r], rng);
        y.push((0..k).map(|j| truth.cutoffs.discretize(j, w[j])).collect());
        x.push(w.iter().skip(k).copied().collect());
        z.extend(w.iter().take(k));
    }
    let data = validate_dataset(RawDataset {
        y,
        x,
        category_counts: (0..k).map(|j| truth.cutoffs.category_count(j)).collect(),
        ordinal_covariate_flags: vec![],
    })?;
    Ok((data, z))
}
