//! Functional-versus-oracle comparisons with a multiplicity-aware verdict.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mc::mc_cell_table;
use super::TrueMixture;
use crate::dist::{cholesky, sample_mvn};
use crate::functionals::{joint_cell_prob, marginal_curve, CurveAxis};
use crate::model::{unit_cutoffs, Atom};
use crate::Result;

/// A random mixture with `k` ordinal dimensions (2 to 5 categories each,
/// unit cut-offs), `p` covariates and `n_comp` components.
pub fn random_mixture<R: Rng + ?Sized>(k: usize, p: usize, n_comp: usize, rng: &mut R) -> Result<TrueMixture> {
    let d = k + p;
    let counts: Vec<u32> = (0..k).map(|_| rng.random_range(2..=5)).collect();
    let g = Gamma::new(1.0, 1.0).expect("valid gamma");
    let raw: Vec<f64> = (0..n_comp).map(|_| g.sample(rng) + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let last = 1.0 - weights[..n_comp - 1].iter().sum::<f64>();
    weights[n_comp - 1] = last;
    let atoms = (0..n_comp)
        .map(|_| {
            let a = DMatrix::from_fn(d, d, |_, _| 0.7 * Distribution::<f64>::sample(&StandardNormal, rng));
            let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.3;
            let mean = DVector::from_fn(d, |_, _| 1.5 * Distribution::<f64>::sample(&StandardNormal, rng));
            Atom { mean, cov }
        })
        .collect();
    let t = TrueMixture {
        weights,
        atoms,
        cutoffs: unit_cutoffs(&counts)?,
    };
    t.validate()?;
    Ok(t)
}

/// A covariate vector drawn from the mixture's covariate marginal.
pub fn random_covariates<R: Rng + ?Sized>(truth: &TrueMixture, rng: &mut R) -> Result<Vec<f64>> {
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
    let a = &truth.atoms[r];
    let w = sample_mvn(&a.mean, &cholesky(&a.cov, "true atom covariance")?, rng);
    Ok(w.iter().skip(truth.k()).copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub functional: f64,
    pub functional_se: f64,
    pub oracle: f64,
    pub oracle_se: f64,
    /// `(oracle - functional) / se`, with the binomial part of `se`
    /// evaluated at the functional value floored at `1 / n`.
    pub z: f64,
}

fn compare(label: String, functional: f64, functional_se: f64, oracle: f64, oracle_se: f64, n: usize) -> Comparison {
    let nf = n as f64;
    let q = functional.clamp(1.0 / nf, 1.0 - 1.0 / nf);
    let se = (q * (1.0 - q) / nf + functional_se * functional_se).sqrt();
    Comparison {
        label,
        functional,
        functional_se,
        oracle,
        oracle_se,
        z: (oracle - functional) / se,
    }
}

/// Compares, at covariate point `x`, every joint cell probability given all
/// covariates and every marginal category probability given each single
/// covariate (others integrated out) against simulation with `n_mc` draws.
pub fn oracle_comparisons<R: Rng + ?Sized>(
    truth: &TrueMixture,
    x: &[f64],
    n_mc: usize,
    rng: &mut R,
) -> Result<Vec<Comparison>> {
    let (k, p) = (truth.k(), truth.d() - truth.k());
    let snap = truth.to_snapshot();
    let store = truth.to_store()?;
    let dims: Vec<usize> = (0..k).collect();
    let mut out = Vec::new();
    let given: Vec<(usize, f64)> = x.iter().copied().enumerate().collect();
    for (cell, est) in mc_cell_table(&snap, &truth.cutoffs, &dims, &given, n_mc, rng)? {
        let f = joint_cell_prob(&snap, k, &truth.cutoffs, &cell, x, None)?;
        out.push(compare(format!("joint {cell:?} at {x:?}"), f.estimate, f.std_error, est.estimate, est.std_error, n_mc));
    }
    for m in 0..p {
        for j in 0..k {
            let table = mc_cell_table(&snap, &truth.cutoffs, &[j], &[(m, x[m])], n_mc, rng)?;
            for (cell, est) in table {
                let curve = marginal_curve(&store, j, cell[0], &CurveAxis::marginal(m, vec![x[m]]))?;
                out.push(compare(
                    format!("marginal dim {j} cat {} given x[{m}] = {}", cell[0], x[m]),
                    curve.draws[0][0],
                    0.0,
                    est.estimate,
                    est.std_error,
                    n_mc,
                ));
            }
        }
    }
    Ok(out)
}

/// Smallest `c` with `Pr(Binomial(n, q) > c) <= tail`.
pub fn binomial_upper_quantile(n: usize, q: f64, tail: f64) -> usize {
    let mut pmf = (1.0 - q).powi(n as i32);
    let mut cdf = pmf;
    let mut c = 0;
    while 1.0 - cdf > tail && c < n {
        pmf *= (n - c) as f64 / (c + 1) as f64 * q / (1.0 - q);
        cdf += pmf;
        c += 1;
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub comparisons: usize,
    /// Comparisons with `|z| > 3`.
    pub exceed_3: usize,
    /// Largest count of 3-SE exceedances compatible with every comparison
    /// being correct, at family-wise level 0.001.
    pub allowed_3: usize,
    pub max_abs_z: f64,
    pub passed: bool,
}

/// Each comparison must lie within 3 standard errors. Because exact
/// agreement still leaves each 3-SE check failing with probability 0.0027,
/// the family passes when the number of exceedances is within the binomial
/// 0.999 quantile and no comparison is beyond 5 standard errors.
pub fn oracle_verdict(comps: &[Comparison]) -> OracleVerdict {
    let exceed_3 = comps.iter().filter(|c| !(c.z.abs() <= 3.0)).count();
    let max_abs_z = comps.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let allowed_3 = binomial_upper_quantile(comps.len(), 0.0027, 1e-3);
    OracleVerdict {
        comparisons: comps.len(),
        exceed_3,
        allowed_3,
        max_abs_z,
        passed: exceed_3 <= allowed_3 && max_abs_z <= 5.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binomial_quantile_small_cases() {
        assert_eq!(binomial_upper_quantile(10, 0.0, 1e-3), 0);
        // Binomial(1000, 0.0027): mean 2.7; Pr(X > 9) is about 6e-4, Pr(X > 8) about 2e-3
        assert_eq!(binomial_upper_quantile(1000, 0.0027, 1e-3), 9);
    }

    #[test]
    fn comparisons_agree_for_a_random_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = random_mixture(2, 2, 3, &mut rng).unwrap();
        let x = random_covariates(&t, &mut rng).unwrap();
        let comps = oracle_comparisons(&t, &x, 100_000, &mut rng).unwrap();
        let v = oracle_verdict(&comps);
        assert!(v.passed, "{v:?}");
    }
}
