//! Full-conditional updates of the blocked Gibbs sampler. Each update
//! mutates the state in place and leaves every state invariant intact.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::KernelMode;
use crate::binary::{sample_restricted_sigma, update_restricted_sigma};
use crate::dist::{
    cholesky, sample_beta_log, sample_inv_wishart, sample_mvn, sample_truncated_normal, sample_wishart, spd_inverse, MvnKernel,
};
use crate::model::{stick_weights_log, CutoffGrid, Dataset, Hyperpriors, MixtureState};
use crate::{Error, Result};

/// Copies `(z_i, x_i)` into `w`.
#[inline]
pub(crate) fn fill_w(state: &MixtureState, data: &Dataset, i: usize, w: &mut [f64]) {
    let k = data.k();
    w[..k].copy_from_slice(state.latent_row(i, k));
    w[k..].copy_from_slice(data.x_row(i));
}

/// Resamples every latent coordinate from its truncated-normal full
/// conditional under the allocated atom, one coordinate at a time.
pub fn update_latents<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &Dataset,
    cutoffs: &CutoffGrid,
    rng: &mut R,
) -> Result<()> {
    let (k, d) = (data.k(), data.d());
    let mut precisions: Vec<Option<DMatrix<f64>>> = vec![None; state.atoms.len()];
    let mut w = vec![0.0; d];
    for i in 0..data.n() {
        let l = state.allocations[i];
        if precisions[l].is_none() {
            precisions[l] = Some(spd_inverse(&state.atoms[l].cov, "atom covariance")?);
        }
        let prec = precisions[l].as_ref().expect("just filled");
        let mu = &state.atoms[l].mean;
        fill_w(state, data, i, &mut w);
        for j in 0..k {
            let lambda_jj = prec[(j, j)];
            let mut shift = 0.0;
            for m in (0..d).filter(|&m| m != j) {
                shift += prec[(j, m)] * (w[m] - mu[m]);
            }
            let (lo, hi) = cutoffs.interval(j, data.y(i, j));
            let z = sample_truncated_normal(mu[j] - shift / lambda_jj, 1.0 / lambda_jj, lo, hi, rng)?;
            w[j] = z;
            state.latent[i * k + j] = z;
        }
    }
    Ok(())
}

/// Normalized allocation probabilities of one observation vector `w`.
pub fn allocation_probs(state: &MixtureState, w: &[f64]) -> Result<Vec<f64>> {
    let kernels = atom_kernels(state)?;
    let mut scratch = vec![0.0; w.len()];
    let mut lp: Vec<f64> = kernels
        .iter()
        .zip(&state.weights)
        .map(|(ker, &p)| p.ln() + ker.log_density(w, &mut scratch))
        .collect();
    normalize_log(&mut lp)?;
    Ok(lp)
}

fn atom_kernels(state: &MixtureState) -> Result<Vec<MvnKernel>> {
    state
        .atoms
        .iter()
        .map(|a| MvnKernel::new(a.mean.clone(), &a.cov))
        .collect()
}

/// Exponentiates and normalizes log-masses in place with max-subtraction.
fn normalize_log(lp: &mut [f64]) -> Result<()> {
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Sampler("every allocation mass underflowed".into()));
    }
    let mut total = 0.0;
    for v in lp.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in lp.iter_mut() {
        *v /= total;
    }
    Ok(())
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return l;
        }
    }
    // rounding left u above the accumulated total; take the last positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn update_allocations<R: Rng + ?Sized>(state: &mut MixtureState, data: &Dataset, rng: &mut R) -> Result<()> {
    let kernels = atom_kernels(state)?;
    let log_p: Vec<f64> = state.weights.iter().map(|p| p.ln()).collect();
    let d = data.d();
    let mut w = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut lp = vec![0.0; kernels.len()];
    for i in 0..data.n() {
        fill_w(state, data, i, &mut w);
        for (l, ker) in kernels.iter().enumerate() {
            lp[l] = log_p[l] + ker.log_density(&w, &mut scratch);
        }
        normalize_log(&mut lp)
            .map_err(|_| Error::Sampler(format!("every allocation mass underflowed for observation {}", i + 1)))?;
        state.allocations[i] = sample_categorical(&lp, rng);
    }
    Ok(())
}

/// Conjugate update of every atom; empty components are drawn from the base
/// measure.
pub fn update_atoms<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &Dataset,
    hyper: &Hyperpriors,
    kernel: &KernelMode,
    rng: &mut R,
) -> Result<()> {
    let d = data.d();
    let n_atoms = state.atoms.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_atoms];
    for (i, &l) in state.allocations.iter().enumerate() {
        members[l].push(i);
    }
    let v_inv = spd_inverse(&state.base.v, "V")?;
    let v_inv_m = &v_inv * &state.base.m;
    let v_chol = cholesky(&state.base.v, "V")?;
    let mut w = vec![0.0; d];

    for l in 0..n_atoms {
        let ids = &members[l];
        if ids.is_empty() {
            state.atoms[l].mean = sample_mvn(&state.base.m, &v_chol, rng);
            state.atoms[l].cov = sample_base_cov(d, &state.base.s, hyper.nu, kernel, rng)?;
            continue;
        }
        let mut rows = DMatrix::zeros(ids.len(), d);
        for (r, &i) in ids.iter().enumerate() {
            fill_w(state, data, i, &mut w);
            rows.row_mut(r).copy_from_slice(&w);
        }
        let sum: DVector<f64> = rows.row_sum().transpose();
        let m_l = ids.len() as f64;

        let sigma_inv = spd_inverse(&state.atoms[l].cov, "atom covariance")?;
        let post_prec = &v_inv + &sigma_inv * m_l;
        let post_cov = spd_inverse(&post_prec, "atom mean posterior precision")?;
        let post_mean = &post_cov * (&v_inv_m + &sigma_inv * &sum);
        let mu = sample_mvn(&post_mean, &cholesky(&post_cov, "atom mean posterior covariance")?, rng);

        let mut resid = rows;
        for mut row in resid.row_iter_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v -= mu[c];
            }
        }
        state.atoms[l].cov = match kernel {
            KernelMode::InverseWishart => {
                let scale = &state.base.s + resid.transpose() * &resid;
                sample_inv_wishart(hyper.nu + m_l, &scale, rng)?
            }
            KernelMode::Restricted { fixed_delta, priors } => {
                update_restricted_sigma(&resid, &state.atoms[l].cov, fixed_delta, priors, rng)?
            }
        };
        state.atoms[l].mean = mu;
    }
    Ok(())
}

/// Draw of an atom covariance from the base measure.
pub(crate) fn sample_base_cov<R: Rng + ?Sized>(
    d: usize,
    s: &DMatrix<f64>,
    nu: f64,
    kernel: &KernelMode,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    match kernel {
        KernelMode::InverseWishart => sample_inv_wishart(nu, s, rng),
        KernelMode::Restricted { fixed_delta, priors } => sample_restricted_sigma(d, fixed_delta, priors, rng),
    }
}

pub fn update_weights<R: Rng + ?Sized>(state: &mut MixtureState, rng: &mut R) -> Result<()> {
    let counts = state.cluster_counts();
    let n_atoms = counts.len();
    let mut tail = 0usize;
    let mut tails = vec![0usize; n_atoms];
    for l in (0..n_atoms).rev() {
        tails[l] = tail;
        tail += counts[l];
    }
    for l in 0..n_atoms.saturating_sub(1) {
        let a = 1.0 + counts[l] as f64;
        let b = state.alpha + tails[l] as f64;
        (state.sticks[l], state.log_rest[l]) = sample_beta_log(a, b, rng);
    }
    state.weights = stick_weights_log(&state.sticks, &state.log_rest);
    Ok(())
}

pub fn update_hyper_m<R: Rng + ?Sized>(state: &mut MixtureState, hyper: &Hyperpriors, rng: &mut R) -> Result<()> {
    let n_atoms = state.atoms.len() as f64;
    let bm_inv = spd_inverse(&hyper.b_m, "B_m")?;
    let v_inv = spd_inverse(&state.base.v, "V")?;
    let sum_mu = state
        .atoms
        .iter()
        .fold(DVector::zeros(hyper.dim()), |acc, a| acc + &a.mean);
    let cov = spd_inverse(&(&bm_inv + &v_inv * n_atoms), "m posterior precision")?;
    let mean = &cov * (&bm_inv * &hyper.a_m + &v_inv * sum_mu);
    state.base.m = sample_mvn(&mean, &cholesky(&cov, "m posterior covariance")?, rng);
    Ok(())
}

pub fn update_hyper_v<R: Rng + ?Sized>(state: &mut MixtureState, hyper: &Hyperpriors, rng: &mut R) -> Result<()> {
    let mut scale = hyper.b_v.clone();
    for a in &state.atoms {
        let r = &a.mean - &state.base.m;
        scale += &r * r.transpose();
    }
    state.base.v = sample_inv_wishart(hyper.a_v + state.atoms.len() as f64, &scale, rng)?;
    Ok(())
}

pub fn update_hyper_s<R: Rng + ?Sized>(state: &mut MixtureState, hyper: &Hyperpriors, rng: &mut R) -> Result<()> {
    let mut prec = spd_inverse(&hyper.b_s, "B_S")?;
    for a in &state.atoms {
        prec += spd_inverse(&a.cov, "atom covariance")?;
    }
    let scale = spd_inverse(&prec, "S posterior precision")?;
    let df = hyper.a_s + state.atoms.len() as f64 * hyper.nu;
    state.base.s = sample_wishart(df, &scale, rng)?;
    Ok(())
}

/// Gamma update of the precision. Returns `true` when `p_N` underflowed and
/// was clamped to the smallest positive double.
pub fn update_alpha<R: Rng + ?Sized>(state: &mut MixtureState, hyper: &Hyperpriors, rng: &mut R) -> Result<bool> {
    update_alpha_shifted(state, hyper, 0.0, rng)
}

pub(crate) fn update_alpha_shifted<R: Rng + ?Sized>(
    state: &mut MixtureState,
    hyper: &Hyperpriors,
    shape_offset: f64,
    rng: &mut R,
) -> Result<bool> {
    let mut log_pn = state.log_last_weight();
    let clamped = !log_pn.is_finite();
    if clamped {
        log_pn = f64::from_bits(1).ln();
    }
    let shape = hyper.a_alpha + (state.atoms.len() as f64 - 1.0) + shape_offset;
    let rate = hyper.b_alpha - log_pn;
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Sampler(format!("alpha update: {e}")))?;
    // a gamma draw can round to zero for tiny shapes
    state.alpha = gamma.sample(rng).max(f64::MIN_POSITIVE);
    Ok(clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_cutoffs, validate_dataset, Atom, BaseParams, RawDataset};
    use crate::dist::normal;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper2() -> Hyperpriors {
        Hyperpriors {
            a_m: DVector::zeros(2),
            b_m: DMatrix::identity(2, 2),
            a_v: 4.0,
            b_v: DMatrix::identity(2, 2),
            a_s: 4.0,
            b_s: DMatrix::identity(2, 2),
            nu: 4.0,
            a_alpha: 2.0,
            b_alpha: 1.0,
        }
    }

    fn state_with(atoms: Vec<Atom>, weights: Vec<f64>, data: &Dataset, z: Vec<f64>) -> MixtureState {
        let d = atoms[0].mean.len();
        let mut sticks = Vec::new();
        let mut rem = 1.0;
        for &w in &weights[..weights.len() - 1] {
            sticks.push(w / rem);
            rem -= w;
        }
        let mut st = MixtureState {
            weights: vec![],
            sticks: vec![],
            log_rest: vec![],
            atoms,
            allocations: vec![0; data.n()],
            latent: z,
            base: BaseParams {
                m: DVector::zeros(d),
                v: DMatrix::identity(d, d),
                s: DMatrix::identity(d, d),
            },
            alpha: 1.0,
        };
        st.set_sticks(sticks);
        st
    }

    fn one_obs(y: u32, x: Vec<f64>, c: u32) -> Dataset {
        validate_dataset(RawDataset {
            y: vec![vec![y]],
            x: vec![x],
            category_counts: vec![c],
            ordinal_covariate_flags: vec![],
        })
        .unwrap()
    }

    fn truncated_mean(mu: f64, sd: f64, lo: f64, hi: f64) -> f64 {
        let (a, b) = ((lo - mu) / sd, (hi - mu) / sd);
        mu + sd * (normal::pdf(a) - normal::pdf(b)) / (normal::cdf(b) - normal::cdf(a))
    }

    #[test]
    fn latent_symmetric_interval() {
        let data = validate_dataset(RawDataset {
            y: vec![vec![2]],
            x: vec![vec![]],
            category_counts: vec![3],
            ordinal_covariate_flags: vec![],
        })
        .unwrap();
        let cut = default_cutoffs(&[3], 1.0).unwrap();
        let atom = Atom {
            mean: DVector::zeros(1),
            cov: DMatrix::identity(1, 1),
        };
        let mut st = state_with(vec![atom], vec![1.0], &data, vec![0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut sum = 0.0;
        for _ in 0..100_000 {
            update_latents(&mut st, &data, &cut, &mut rng).unwrap();
            let z = st.latent[0];
            assert!(-1.0 < z && z <= 1.0);
            sum += z;
        }
        assert!((sum / 1e5).abs() < 0.01);
    }

    #[test]
    fn latent_conditional_on_covariate() {
        let data = one_obs(1, vec![1.0], 3);
        let cut = default_cutoffs(&[3], 1.0).unwrap();
        let atom = Atom {
            mean: DVector::zeros(2),
            cov: dmatrix![1.0, 0.8; 0.8, 1.0],
        };
        let mut st = state_with(vec![atom], vec![1.0], &data, vec![-2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut sum = 0.0;
        for _ in 0..100_000 {
            update_latents(&mut st, &data, &cut, &mut rng).unwrap();
            sum += st.latent[0];
        }
        let expect = truncated_mean(0.8, 0.6, f64::NEG_INFINITY, -1.0);
        assert!((sum / 1e5 - expect).abs() < 0.01, "{} vs {expect}", sum / 1e5);
    }

    #[test]
    fn latent_independent_block() {
        // k = 2 with identity z-block: z_1's conditional ignores z_2
        let data = validate_dataset(RawDataset {
            y: vec![vec![3, 1]],
            x: vec![vec![0.5]],
            category_counts: vec![3, 3],
            ordinal_covariate_flags: vec![],
        })
        .unwrap();
        let cut = default_cutoffs(&[3, 3], 1.0).unwrap();
        let atom = Atom {
            mean: DVector::from_vec(vec![0.2, 0.0, 0.0]),
            cov: dmatrix![1.0, 0.0, 0.5; 0.0, 1.0, 0.0; 0.5, 0.0, 1.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sums = [0.0; 2];
        for z2 in [-1.5, -5.0] {
            let mut st = state_with(vec![atom.clone()], vec![1.0], &data, vec![2.0, z2]);
            let mut s = 0.0;
            for _ in 0..50_000 {
                st.latent[1] = z2;
                let mut st1 = st.clone();
                update_latents(&mut st1, &data, &cut, &mut rng).unwrap();
                s += st1.latent[0];
            }
            sums[(z2 == -5.0) as usize] = s / 5e4;
        }
        let expect = truncated_mean(0.2 + 0.5 * 0.5, 0.75f64.sqrt(), 1.0, f64::INFINITY);
        for s in sums {
            assert!((s - expect).abs() < 0.015, "{s} vs {expect}");
        }
    }

    #[test]
    fn identical_atoms_follow_weights() {
        let data = one_obs(2, vec![0.3], 3);
        let atom = Atom {
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        };
        let st = state_with(vec![atom.clone(), atom], vec![0.3, 0.7], &data, vec![0.0]);
        let p = allocation_probs(&st, &[0.0, 0.3]).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn allocation_probs_by_hand() {
        let data = one_obs(2, vec![0.3], 3);
        let a = Atom {
            mean: DVector::from_vec(vec![0.0, 0.0]),
            cov: dmatrix![1.0, 0.5; 0.5, 2.0],
        };
        let b = Atom {
            mean: DVector::from_vec(vec![1.0, -1.0]),
            cov: dmatrix![0.5, 0.0; 0.0, 0.5],
        };
        let st = state_with(vec![a, b], vec![0.4, 0.6], &data, vec![0.2]);
        let w = [0.2, 0.3];
        let dens = |m: [f64; 2], s: [[f64; 2]; 2]| {
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let (u, v) = (w[0] - m[0], w[1] - m[1]);
            let q = (s[1][1] * u * u - 2.0 * s[0][1] * u * v + s[0][0] * v * v) / det;
            (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
        };
        let fa = 0.4 * dens([0.0, 0.0], [[1.0, 0.5], [0.5, 2.0]]);
        let fb = 0.6 * dens([1.0, -1.0], [[0.5, 0.0], [0.0, 0.5]]);
        let p = allocation_probs(&st, &w).unwrap();
        assert!((p[0] - fa / (fa + fb)).abs() < 1e-13);
    }

    #[test]
    fn tight_atom_captures_observation() {
        let data = one_obs(2, vec![0.3], 3);
        let near = Atom {
            mean: DVector::from_vec(vec![0.0, 0.3]),
            cov: DMatrix::identity(2, 2) * 1e-6,
        };
        let far = Atom {
            mean: DVector::from_vec(vec![30.0, 30.0]),
            cov: DMatrix::identity(2, 2),
        };
        let mut st = state_with(vec![far, near], vec![0.99, 0.01], &data, vec![0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        update_allocations(&mut st, &data, &mut rng).unwrap();
        assert_eq!(st.allocations[0], 1);
    }

    #[test]
    fn stick_posterior_mean() {
        let data = validate_dataset(RawDataset {
            y: vec![vec![1]; 10],
            x: vec![vec![0.0]; 10],
            category_counts: vec![3],
            ordinal_covariate_flags: vec![],
        })
        .unwrap();
        let atom = Atom {
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        };
        let mut st = state_with(vec![atom.clone(), atom.clone(), atom], vec![0.4, 0.3, 0.3], &data, vec![-2.0; 10]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = 0.0;
        for _ in 0..100_000 {
            update_weights(&mut st, &mut rng).unwrap();
            assert!((st.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(st.weights.iter().all(|&p| p >= 0.0));
            sum += st.sticks[0];
        }
        assert!((sum / 1e5 - 11.0 / 12.0).abs() < 0.003);
    }

    #[test]
    fn alpha_conjugate_mean() {
        let mut h = hyper2();
        h.a_alpha = 2.0;
        h.b_alpha = 1.0;
        let data = one_obs(1, vec![0.0], 3);
        let atom = Atom {
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        };
        let mut st = state_with(vec![atom; 20], vec![1.0 / 20.0; 20], &data, vec![-2.0]);
        // sticks with prod(1 - v) = e^-1
        let per = (-1.0f64 / 19.0).exp();
        st.set_sticks(vec![1.0 - per; 19]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut sum = 0.0;
        for _ in 0..100_000 {
            assert!(!update_alpha(&mut st, &h, &mut rng).unwrap());
            assert!(st.alpha > 0.0);
            sum += st.alpha;
        }
        assert!((sum / 1e5 - 10.5).abs() < 0.05, "{}", sum / 1e5);
    }

    #[test]
    fn alpha_clamps_underflow() {
        let h = hyper2();
        let data = one_obs(1, vec![0.0], 3);
        let atom = Atom {
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        };
        let mut st = state_with(vec![atom.clone(), atom], vec![1.0, 0.0], &data, vec![-2.0]);
        st.set_sticks(vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(update_alpha(&mut st, &h, &mut rng).unwrap());
        assert!(st.alpha > 0.0);
    }

    #[test]
    fn single_atom_alpha_is_prior() {
        let h = hyper2();
        let data = one_obs(1, vec![0.0], 3);
        let atom = Atom {
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        };
        let mut st = state_with(vec![atom], vec![1.0], &data, vec![-2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut sum = 0.0;
        for _ in 0..100_000 {
            update_alpha(&mut st, &h, &mut rng).unwrap();
            sum += st.alpha;
        }
        assert!((sum / 1e5 - 2.0).abs() < 0.03);
    }

    #[test]
    fn empty_atom_covariance_mean() {
        let data = Dataset::prior_only(vec![3], 1).unwrap();
        let atom = Atom {
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        };
        let mut st = state_with(vec![atom], vec![1.0], &data, vec![]);
        st.base.s = dmatrix![2.0, 0.5; 0.5, 1.0];
        let mut h = hyper2();
        h.nu = 6.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..100_000 {
            update_atoms(&mut st, &data, &h, &KernelMode::InverseWishart, &mut rng).unwrap();
            acc += &st.atoms[0].cov;
        }
        let expect = &st.base.s / 3.0;
        assert!(((acc / 1e5) - &expect).abs().max() < 0.02 * expect.abs().max());
    }

    #[test]
    fn hyper_m_symmetric_case() {
        let h = hyper2();
        let data = Dataset::prior_only(vec![3], 1).unwrap();
        let atom = Atom {
            mean: h.a_m.clone(),
            cov: DMatrix::identity(2, 2),
        };
        let mut st = state_with(vec![atom], vec![1.0], &data, vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut acc = DVector::zeros(2);
        for _ in 0..50_000 {
            update_hyper_m(&mut st, &h, &mut rng).unwrap();
            acc += &st.base.m;
        }
        assert!((acc / 5e4 - &h.a_m).abs().max() < 0.01);
    }
}
