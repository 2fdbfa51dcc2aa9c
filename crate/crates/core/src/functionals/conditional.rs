use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{bvn_rect_prob, interval_prob, mvn_rect_prob, GaussianRegression, MvnKernel, ProbEstimate};
use crate::gibbs::Snapshot;
use crate::{Error, Result};

/// Monte Carlo settings for rectangles of dimension three or more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSettings {
    /// Antithetic pairs per component rectangle.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            seed: 7,
        }
    }
}

/// Components below this normalized weight are skipped; their total
/// contribution is at most `N * SKIP_WEIGHT`.
pub(crate) const SKIP_WEIGHT: f64 = 1e-16;

struct Component {
    x_kernel: Option<MvnKernel>,
    regression: Option<GaussianRegression>,
    mu_z: DVector<f64>,
    cov_z: DMatrix<f64>,
}

/// The mixture law of selected latent coordinates given selected covariates,
/// with all other coordinates integrated out through component marginals.
pub(crate) struct ConditionalMixture {
    log_p: Vec<f64>,
    comps: Vec<Component>,
}

impl ConditionalMixture {
    /// `zdims` index latent coordinates (`< k`); `given_x` index covariates
    /// (`< p`). Either list may be in any order.
    pub fn new(snap: &Snapshot, k: usize, zdims: &[usize], given_x: &[usize]) -> Result<Self> {
        let d = snap.dim();
        if zdims.is_empty() || zdims.iter().any(|&j| j >= k) {
            return Err(Error::invalid("latent dimension out of range"));
        }
        if given_x.iter().any(|&m| k + m >= d) {
            return Err(Error::invalid("covariate index out of range"));
        }
        let nz = zdims.len();
        let sel: Vec<usize> = zdims.iter().copied().chain(given_x.iter().map(|m| k + m)).collect();
        let given_pos: Vec<usize> = (nz..sel.len()).collect();
        let comps = snap
            .atoms
            .iter()
            .map(|atom| {
                let mu = atom.mean.select_rows(&sel);
                let sigma = atom.cov.select_rows(&sel).select_columns(&sel);
                let mu_z = mu.rows(0, nz).into_owned();
                let cov_z = sigma.view((0, 0), (nz, nz)).into_owned();
                if given_x.is_empty() {
                    return Ok(Component {
                        x_kernel: None,
                        regression: None,
                        mu_z,
                        cov_z,
                    });
                }
                let g = given_x.len();
                let x_kernel = MvnKernel::new(mu.rows(nz, g).into_owned(), &sigma.view((nz, nz), (g, g)).into_owned())?;
                let reg = GaussianRegression::new(&mu, &sigma, &given_pos)?;
                Ok(Component {
                    x_kernel: Some(x_kernel),
                    cov_z: reg.cond_cov().clone(),
                    regression: Some(reg),
                    mu_z,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            log_p: snap.weights.iter().map(|p| p.ln()).collect(),
            comps,
        })
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    /// Normalized weights `w_r(x)` and `ln f(x)`, the log mixture density of
    /// the conditioning covariates (0 when nothing is conditioned on).
    pub fn weights_at(&self, x: &[f64], out: &mut Vec<f64>) -> f64 {
        out.clear();
        if self.comps.first().is_none_or(|c| c.x_kernel.is_none()) {
            out.extend(self.log_p.iter().map(|l| l.exp()));
            return 0.0;
        }
        let mut scratch = vec![0.0; x.len()];
        for (c, lp) in self.comps.iter().zip(&self.log_p) {
            let ker = c.x_kernel.as_ref().expect("conditioned components carry a kernel");
            out.push(lp + ker.log_density(x, &mut scratch));
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in out.iter_mut() {
            *v /= total;
        }
        max + total.ln()
    }

    pub fn mean_at(&self, r: usize, x: &[f64]) -> DVector<f64> {
        match &self.comps[r].regression {
            Some(reg) => reg.mean_at(x),
            None => self.comps[r].mu_z.clone(),
        }
    }

    pub fn cov(&self, r: usize) -> &DMatrix<f64> {
        &self.comps[r].cov_z
    }

    /// Mixture of a per-component quantity at `x`: `sum_r w_r(x) f(r, mean_r(x), cov_r)`.
    pub fn mix<F>(&self, x: &[f64], weights: &mut Vec<f64>, mut f: F) -> Result<f64>
    where
        F: FnMut(usize, &DVector<f64>, &DMatrix<f64>) -> Result<f64>,
    {
        self.weights_at(x, weights);
        let mut acc = 0.0;
        for (r, &w) in weights.iter().enumerate() {
            if w < SKIP_WEIGHT {
                continue;
            }
            acc += w * f(r, &self.mean_at(r, x), self.cov(r))?;
        }
        Ok(acc)
    }
}

/// `P(lo < Z <= hi)` for `Z ~ N(mean, cov)`; exact up to two dimensions.
pub(crate) fn rect_prob(
    lo: &[f64],
    hi: &[f64],
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    mc: &mut Option<(usize, ChaCha8Rng)>,
) -> Result<ProbEstimate> {
    match mean.len() {
        1 => {
            let sd = cov[(0, 0)].sqrt();
            Ok(ProbEstimate::exact(interval_prob((lo[0] - mean[0]) / sd, (hi[0] - mean[0]) / sd)))
        }
        2 => Ok(ProbEstimate::exact(bvn_rect_prob(lo[0], hi[0], lo[1], hi[1], mean, cov)?)),
        _ => match mc {
            Some((n, rng)) => mvn_rect_prob(lo, hi, mean, cov, *n, rng),
            None => Err(Error::invalid("rectangles of dimension three or more need Monte Carlo settings")),
        },
    }
}

pub(crate) fn mc_state(mc: Option<&McSettings>) -> Option<(usize, ChaCha8Rng)> {
    mc.map(|m| (m.n_samples, ChaCha8Rng::seed_from_u64(m.seed)))
}
