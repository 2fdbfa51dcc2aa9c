//! Joint-distribution test of the sampler.
//!
//! The marginal-conditional simulator draws parameters from the prior and
//! data given parameters. The successive-conditional simulator alternates
//! one sampler sweep with a fresh draw of the data given the current
//! parameters and allocations. Both target the same joint law, so the means
//! of any functional must agree.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{cholesky, sample_mvn};
use crate::gibbs::{draw_from_prior, Chain, ChainConfig, InitMode, KernelMode};
use crate::model::{CutoffGrid, Dataset, Hyperpriors, MixtureState};
use crate::summary::{batch_means_se, mean, variance};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    pub hyper: Hyperpriors,
    pub cutoffs: CutoffGrid,
    pub n_obs: usize,
    pub truncation: usize,
    pub kernel: KernelMode,
    pub n_marginal: usize,
    pub n_successive: usize,
    pub n_batches: usize,
    pub seed: u64,
    /// Passed to the sampler; nonzero values break it on purpose.
    pub alpha_shape_fault: f64,
}

impl GewekeConfig {
    /// One ordinal response with three categories and one covariate. The
    /// degrees of freedom leave every tested moment finite.
    pub fn small(seed: u64) -> Result<Self> {
        let d = 2;
        let df = d as f64 + 6.0;
        let spare = df - d as f64 - 1.0;
        let id = DMatrix::<f64>::identity(d, d);
        Ok(Self {
            hyper: Hyperpriors {
                a_m: DVector::zeros(d),
                b_m: id.clone(),
                a_v: df,
                b_v: &id * spare,
                a_s: df,
                b_s: &id * (spare / df),
                nu: df,
                a_alpha: 2.0,
                b_alpha: 1.0,
            },
            cutoffs: CutoffGrid::new(vec![vec![-1.0, 1.0]])?,
            n_obs: 8,
            truncation: 3,
            kernel: KernelMode::InverseWishart,
            n_marginal: 20_000,
            n_successive: 100_000,
            n_batches: 50,
            seed,
            alpha_shape_fault: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeStat {
    pub name: String,
    pub marginal_mean: f64,
    pub successive_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub stats: Vec<GewekeStat>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    pub fn exceedances(&self, threshold: f64) -> usize {
        self.stats.iter().filter(|s| !(s.z.abs() <= threshold)).count()
    }
}

fn names(d: usize, k: usize, p: usize, with_s: bool) -> Vec<String> {
    let mut out = Vec::new();
    out.extend((0..d).map(|i| format!("m[{i}]")));
    out.extend((0..d).map(|i| format!("V[{i},{i}]")));
    out.push("V[0,1]".into());
    out.push("ln det V".into());
    if with_s {
        out.extend((0..d).map(|i| format!("S[{i},{i}]")));
        out.push("S[0,1]".into());
        out.push("ln det S".into());
    }
    for n in ["alpha", "ln alpha", "p_1", "max weight", "weight entropy"] {
        out.push(n.into());
    }
    out.extend((0..d).map(|i| format!("mu_1[{i}]")));
    out.extend((0..d).map(|i| format!("Sigma_1[{i},{i}]")));
    out.push("Sigma_1[0,1]".into());
    out.push("occupied".into());
    out.extend((0..k).map(|j| format!("mean z[{j}]")));
    out.extend((0..p).map(|m| format!("mean x[{m}]")));
    out.extend((0..k).map(|j| format!("mean y[{j}]")));
    out.push("mean z[0]^2".into());
    if p > 0 {
        out.push("mean z[0] x[0]".into());
    }
    out
}

fn ln_det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant().ln()
}

fn functionals(state: &MixtureState, data: &Dataset, with_s: bool, out: &mut Vec<f64>) {
    let (d, k, p, n) = (data.d(), data.k(), data.p(), data.n());
    let b = &state.base;
    out.clear();
    out.extend(b.m.iter());
    out.extend((0..d).map(|i| b.v[(i, i)]));
    out.push(b.v[(0, 1)]);
    out.push(ln_det(&b.v));
    if with_s {
        out.extend((0..d).map(|i| b.s[(i, i)]));
        out.push(b.s[(0, 1)]);
        out.push(ln_det(&b.s));
    }
    let w = &state.weights;
    out.push(state.alpha);
    out.push(state.alpha.ln());
    out.push(w[0]);
    out.push(w.iter().copied().fold(0.0, f64::max));
    out.push(-w.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>());
    let a = &state.atoms[0];
    out.extend(a.mean.iter());
    out.extend((0..d).map(|i| a.cov[(i, i)]));
    out.push(a.cov[(0, 1)]);
    out.push(state.occupied() as f64);
    let nf = n as f64;
    for j in 0..k {
        out.push((0..n).map(|i| state.latent[i * k + j]).sum::<f64>() / nf);
    }
    for m in 0..p {
        out.push((0..n).map(|i| data.x_row(i)[m]).sum::<f64>() / nf);
    }
    for j in 0..k {
        out.push((0..n).map(|i| data.y(i, j) as f64).sum::<f64>() / nf);
    }
    out.push((0..n).map(|i| state.latent[i * k].powi(2)).sum::<f64>() / nf);
    if p > 0 {
        out.push((0..n).map(|i| state.latent[i * k] * data.x_row(i)[0]).sum::<f64>() / nf);
    }
}

/// Draws allocations from the weights, then `(z, x)` from the allocated
/// atoms, and discretizes `z`. Returns the codes, covariates and latents.
fn draw_observations<R: Rng + ?Sized>(
    state: &MixtureState,
    cutoffs: &CutoffGrid,
    allocations: Option<&[usize]>,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<u32>, Vec<f64>, Vec<f64>)> {
    let k = cutoffs.dims();
    let chols = state
        .atoms
        .iter()
        .map(|a| cholesky(&a.cov, "atom covariance"))
        .collect::<Result<Vec<_>>>()?;
    let mut alloc = Vec::with_capacity(n);
    let (mut y, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let r = match allocations {
            Some(a) => a[i],
            None => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = state.weights.len() - 1;
                for (l, &w) in state.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = l;
                        break;
                    }
                }
                pick
            }
        };
        alloc.push(r);
        let w = sample_mvn(&state.atoms[r].mean, &chols[r], rng);
        for j in 0..k {
            y.push(cutoffs.discretize(j, w[j]));
            z.push(w[j]);
        }
        x.extend(w.iter().skip(k));
    }
    Ok((alloc, y, x, z))
}

fn z_score(a: &[f64], b: &[f64], n_batches: usize) -> f64 {
    let se_a2 = variance(a) / a.len() as f64;
    let se_b = batch_means_se(b, n_batches);
    let diff = mean(a) - mean(b);
    let se = (se_a2 + se_b * se_b).sqrt();
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Runs both simulators and compares the means of every functional.
pub fn geweke_check(cfg: &GewekeConfig) -> Result<GewekeReport> {
    cfg.hyper.validate()?;
    let k = cfg.cutoffs.dims();
    let d = cfg.hyper.dim();
    if d < 2 || d <= k || cfg.n_obs == 0 || cfg.truncation == 0 {
        return Err(Error::invalid("the joint test needs a covariate, observations and components"));
    }
    if cfg.n_marginal < 2 || cfg.n_successive < cfg.n_batches || cfg.n_batches < 2 {
        return Err(Error::invalid("too few joint-test draws"));
    }
    let p = d - k;
    let with_s = cfg.kernel == KernelMode::InverseWishart;
    let shape = Dataset::prior_only((0..k).map(|j| cfg.cutoffs.category_count(j)).collect(), p)?;
    let names = names(d, k, p, with_s);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut buf = Vec::with_capacity(names.len());

    let mut marginal = vec![Vec::with_capacity(cfg.n_marginal); names.len()];
    for _ in 0..cfg.n_marginal {
        let mut state = draw_from_prior(&cfg.hyper, cfg.truncation, &cfg.kernel, &mut rng)?;
        let (alloc, y, x, z) = draw_observations(&state, &cfg.cutoffs, None, cfg.n_obs, &mut rng)?;
        state.allocations = alloc;
        state.latent = z;
        let data = shape.with_observations(y, x)?;
        functionals(&state, &data, with_s, &mut buf);
        for (col, v) in marginal.iter_mut().zip(&buf) {
            col.push(*v);
        }
    }

    let mut state = draw_from_prior(&cfg.hyper, cfg.truncation, &cfg.kernel, &mut rng)?;
    let (alloc, y, x, z) = draw_observations(&state, &cfg.cutoffs, None, cfg.n_obs, &mut rng)?;
    state.allocations = alloc;
    state.latent = z.clone();
    let data = shape.with_observations(y, x)?;
    let config = ChainConfig {
        truncation: Some(cfg.truncation),
        n_iter: 2,
        n_burn: 1,
        thin: 1,
        seed: rng.random(),
        init_mode: InitMode::SingleCluster,
        kernel: cfg.kernel.clone(),
        alpha_shape_fault: cfg.alpha_shape_fault,
        ..ChainConfig::default()
    };
    let mut chain = Chain::new(&data, &cfg.cutoffs, &cfg.hyper, &config)?;
    chain.set_state(state);
    let mut successive = vec![Vec::with_capacity(cfg.n_successive); names.len()];
    for _ in 0..cfg.n_successive {
        chain.sweep()?;
        let (st, cutoffs, crng) = chain.parts_mut();
        let (_, y, x, z) = draw_observations(st, cutoffs, Some(&st.allocations), cfg.n_obs, crng)?;
        let data = shape.with_observations(y, x)?;
        chain.replace_data(data, z)?;
        functionals(chain.state(), chain.data(), with_s, &mut buf);
        for (col, v) in successive.iter_mut().zip(&buf) {
            col.push(*v);
        }
    }

    Ok(GewekeReport {
        stats: names
            .into_iter()
            .zip(marginal.iter().zip(&successive))
            .map(|(name, (a, b))| GewekeStat {
                name,
                marginal_mean: mean(a),
                successive_mean: mean(b),
                z: z_score(a, b, cfg.n_batches),
            })
            .collect(),
    })
}
