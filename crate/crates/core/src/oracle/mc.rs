//! Brute-force cell probabilities by simulation.
//!
//! Conditioning uses LU solves and sampling uses a symmetric eigen square
//! root, so no linear algebra is shared with the functionals layer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dist::ProbEstimate;
use crate::gibbs::Snapshot;
use crate::model::CutoffGrid;
use crate::{Error, Result};

struct Conditioned {
    log_weight: f64,
    mean: DVector<f64>,
    root: DMatrix<f64>,
}

fn pick(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

fn condition(snap: &Snapshot, zs: &[usize], xs: &[usize], x: &[f64]) -> Result<Vec<Conditioned>> {
    let mut out = Vec::with_capacity(snap.atoms.len());
    for (atom, &p) in snap.atoms.iter().zip(&snap.weights) {
        if p <= 0.0 {
            continue;
        }
        let szz = pick(&atom.cov, zs, zs);
        let mu_z = DVector::from_fn(zs.len(), |a, _| atom.mean[zs[a]]);
        let (log_weight, mean, cov) = if xs.is_empty() {
            (p.ln(), mu_z, szz)
        } else {
            let sxx = pick(&atom.cov, xs, xs);
            let szx = pick(&atom.cov, zs, xs);
            let dx = DVector::from_fn(xs.len(), |a, _| x[a] - atom.mean[xs[a]]);
            let lu = sxx.clone().lu();
            let det = lu.determinant();
            if !(det > 0.0) {
                return Err(Error::NotPositiveDefinite { what: "covariate block" });
            }
            let sol = lu.solve(&dx).ok_or(Error::NotPositiveDefinite { what: "covariate block" })?;
            let gain = lu.solve(&szx.transpose()).ok_or(Error::NotPositiveDefinite { what: "covariate block" })?;
            let quad = dx.dot(&sol);
            let ln_dens = -0.5 * (quad + det.ln() + xs.len() as f64 * (2.0 * std::f64::consts::PI).ln());
            (p.ln() + ln_dens, mu_z + &szx * sol, szz - szx * gain)
        };
        let eig = SymmetricEigen::new((&cov + cov.transpose()) * 0.5);
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
        out.push(Conditioned { log_weight, mean, root });
    }
    if out.is_empty() {
        return Err(Error::invalid("mixture has no positive weight"));
    }
    Ok(out)
}

/// Simulated probabilities of every category combination on the latent
/// dimensions `dims`, conditional on covariates `given` (pairs of covariate
/// index and value); other covariates are integrated out. Cells are listed
/// in lexicographic order of the codes on `dims`.
pub fn mc_cell_table<R: Rng + ?Sized>(
    snap: &Snapshot,
    cutoffs: &CutoffGrid,
    dims: &[usize],
    given: &[(usize, f64)],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<(Vec<u32>, ProbEstimate)>> {
    let k = cutoffs.dims();
    if dims.is_empty() || dims.iter().any(|&j| j >= k) || n_samples == 0 {
        return Err(Error::invalid("oracle needs latent dimensions and at least one sample"));
    }
    if given.iter().any(|&(m, v)| k + m >= snap.dim() || !v.is_finite()) {
        return Err(Error::invalid("oracle covariate out of range"));
    }
    let xs: Vec<usize> = given.iter().map(|&(m, _)| k + m).collect();
    let xv: Vec<f64> = given.iter().map(|&(_, v)| v).collect();
    let comps = condition(snap, dims, &xs, &xv)?;
    let top = comps.iter().map(|c| c.log_weight).fold(f64::NEG_INFINITY, f64::max);
    let mut cum = Vec::with_capacity(comps.len());
    let mut acc = 0.0;
    for c in &comps {
        acc += (c.log_weight - top).exp();
        cum.push(acc);
    }
    let sizes: Vec<usize> = dims.iter().map(|&j| cutoffs.category_count(j) as usize).collect();
    let n_cells: usize = sizes.iter().product();
    let mut counts = vec![0u64; n_cells];
    let nd = dims.len();
    let mut u = vec![0.0; nd];
    for _ in 0..n_samples {
        let t = rng.random::<f64>() * acc;
        let c = &comps[cum.partition_point(|&c| c <= t).min(comps.len() - 1)];
        for v in u.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let mut idx = 0;
        for (a, &j) in dims.iter().enumerate() {
            let z = c.mean[a] + (0..nd).map(|b| c.root[(a, b)] * u[b]).sum::<f64>();
            idx = idx * sizes[a] + (cutoffs.discretize(j, z) as usize - 1);
        }
        counts[idx] += 1;
    }
    let n = n_samples as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(idx, &c)| {
            let mut codes = vec![0u32; dims.len()];
            let mut rest = idx;
            for a in (0..dims.len()).rev() {
                codes[a] = (rest % sizes[a]) as u32 + 1;
                rest /= sizes[a];
            }
            let p = c as f64 / n;
            (codes, ProbEstimate { estimate: p, std_error: (p * (1.0 - p) / n).sqrt() })
        })
        .collect())
}

/// Simulated `Pr(Y_dims = cell | given)` with its binomial standard error.
pub fn mc_cell_prob_oracle<R: Rng + ?Sized>(
    snap: &Snapshot,
    cutoffs: &CutoffGrid,
    dims: &[usize],
    cell: &[u32],
    given: &[(usize, f64)],
    n_samples: usize,
    rng: &mut R,
) -> Result<ProbEstimate> {
    if cell.len() != dims.len() {
        return Err(Error::invalid("one category per oracle dimension"));
    }
    mc_cell_table(snap, cutoffs, dims, given, n_samples, rng)?
        .into_iter()
        .find(|(codes, _)| codes == cell)
        .map(|(_, est)| est)
        .ok_or_else(|| Error::invalid("cell code out of range"))
}
