//! Quick versions of the invariant, joint-distribution and oracle suites.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::f0::{F0Density, MixedLaw};
use super::geweke::{geweke_check, GewekeConfig};
use super::suite::{oracle_comparisons, oracle_verdict, random_covariates, random_mixture};
use super::{simulate_dataset, TrueMixture};
use crate::dist::bvn_lower;
use crate::gibbs::{Chain, ChainConfig};
use crate::model::unit_cutoffs;
use crate::prior::{default_alpha_prior, derive_hyperpriors, PriorInputs, VarianceSplit};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn invariants(seed: u64) -> Result<(bool, String)> {
    let truth = TrueMixture::crossing(unit_cutoffs(&[5])?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, _) = simulate_dataset(&truth, 60, &mut rng)?;
    let (centers, ranges) = data.covariate_centers_ranges();
    let hyper = derive_hyperpriors(&PriorInputs {
        centers,
        ranges,
        cutoffs: truth.cutoffs.clone(),
        variance_split: VarianceSplit::Third,
        alpha_prior: default_alpha_prior(data.n()),
        latent_ranges: vec![],
    })?;
    let cfg = ChainConfig {
        seed,
        ..ChainConfig::default()
    };
    let mut chain = Chain::new(&data, &truth.cutoffs, &hyper, &cfg)?;
    let sweeps = 300;
    for _ in 0..sweeps {
        chain.sweep()?;
        chain.state().check_invariants(&data, &truth.cutoffs)?;
    }
    Ok((true, format!("{sweeps} sweeps, invariants held after each")))
}

fn f0_exactness(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let counts = vec![rng.random_range(2..=5u32), rng.random_range(2..=5u32)];
        let cutoffs = unit_cutoffs(&counts)?;
        let cells: Vec<Vec<u32>> = (1..=counts[0]).flat_map(|a| (1..=counts[1]).map(move |b| vec![a, b])).collect();
        let raw: Vec<f64> = cells.iter().map(|_| rng.random::<f64>() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let law = MixedLaw {
            masses: raw.iter().map(|m| m / total).collect(),
            x_means: cells.iter().map(|_| DVector::from_vec(vec![rng.random_range(-2.0..2.0)])).collect(),
            x_covs: cells.iter().map(|_| DMatrix::from_element(1, 1, rng.random_range(0.5..2.0))).collect(),
            cells: cells.clone(),
        };
        let f = F0Density::new(law.clone(), cutoffs, vec![-10.0, -10.0], vec![10.0, 10.0])?;
        let x = [rng.random_range(-3.0..3.0)];
        for (c, cell) in cells.iter().enumerate() {
            worst = worst.max((f.cell_integral(&x, cell)? - law.density(c, &x)?).abs());
        }
    }
    Ok((worst <= 1e-14, format!("max abs error {worst:.2e} over 20 random laws")))
}

fn bvn_orthant() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    let mut prev = 0.0;
    for i in 0..=200 {
        let rho = -0.999 + 1.998 * i as f64 / 200.0;
        let v = bvn_lower(0.0, 0.0, rho);
        worst = worst.max((v - (0.25 + rho.asin() / (2.0 * std::f64::consts::PI))).abs());
        monotone &= v >= prev;
        prev = v;
    }
    (worst <= 1e-9 && monotone, format!("max orthant error {worst:.2e}, monotone in rho: {monotone}"))
}

fn oracle(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comps = Vec::new();
    for case in 0..4 {
        let t = random_mixture(1 + case % 2, 1 + case / 2, 3, &mut rng)?;
        for _ in 0..2 {
            let x = random_covariates(&t, &mut rng)?;
            comps.extend(oracle_comparisons(&t, &x, 200_000, &mut rng)?);
        }
    }
    let v = oracle_verdict(&comps);
    Ok((
        v.passed,
        format!(
            "{} comparisons, {} beyond 3 SE (allowed {}), max |z| {:.2}",
            v.comparisons, v.exceed_3, v.allowed_3, v.max_abs_z
        ),
    ))
}

fn geweke(seed: u64, fault: bool) -> Result<(bool, String)> {
    let cfg = GewekeConfig {
        alpha_shape_fault: if fault { 1.0 } else { 0.0 },
        ..GewekeConfig::small(seed)?
    };
    let r = geweke_check(&cfg)?;
    let m = r.max_abs_z();
    let passed = if fault { m > 6.0 } else { m < 4.0 };
    Ok((passed, format!("{} functionals, max |z| {m:.2}", r.stats.len())))
}

/// Runs every quick suite. A suite that errors is reported as failed.
pub fn self_test(seed: u64) -> Vec<SelfTestResult> {
    let suites: Vec<(&str, Box<dyn Fn() -> Result<(bool, String)>>)> = vec![
        ("sampler invariants", Box::new(move || invariants(seed))),
        ("joint-distribution test", Box::new(move || geweke(seed, false))),
        ("joint-distribution negative control", Box::new(move || geweke(seed, true))),
        ("functional versus simulation oracle", Box::new(move || oracle(seed))),
        ("constructive density cell integrals", Box::new(move || f0_exactness(seed))),
        ("bivariate normal orthants", Box::new(|| Ok(bvn_orthant()))),
    ];
    suites
        .into_iter()
        .map(|(name, f)| {
            let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
            SelfTestResult {
                name: name.into(),
                passed,
                detail,
            }
        })
        .collect()
}
