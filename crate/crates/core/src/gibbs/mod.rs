//! Blocked Gibbs sampler over the truncated mixture.
//!
//! One sweep updates, in order: latents, allocations, atoms, weights, `m`,
//! `V`, `S`, `alpha`. Post-burn-in states are thinned into a [`DrawStore`].

mod updates;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use updates::{
    allocation_probs, update_allocations, update_alpha, update_atoms, update_hyper_m, update_hyper_s, update_hyper_v,
    update_latents, update_weights,
};

use crate::binary::RestrictedPriors;
use crate::dist::{cholesky, sample_beta_log, sample_inv_wishart, sample_mvn, sample_wishart};
use crate::model::{stick_weights, stick_weights_log, Atom, BaseParams, CutoffGrid, Dataset, Hyperpriors, MixtureState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// All parameters drawn from the prior.
    PriorDraw,
    /// Every observation in the first component; parameters at prior means.
    #[default]
    SingleCluster,
}

/// Base-measure kernel for atom covariances.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelMode {
    /// `Sigma ~ IW(nu, S)`.
    #[default]
    InverseWishart,
    /// Square-root-free Cholesky kernel with the leading conditional
    /// variances pinned. `S` is unused and not updated in this mode.
    Restricted {
        fixed_delta: Vec<f64>,
        #[serde(default)]
        priors: RestrictedPriors,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Number of mixture components `N`; `None` means `min(50, n)`.
    pub truncation: Option<usize>,
    /// Total sweeps including burn-in.
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub init_mode: InitMode,
    pub kernel: KernelMode,
    /// Observations (0-based) whose latent draws are kept.
    pub retain_latents: Vec<usize>,
    /// Keep latents at their initial values.
    pub freeze_latents: bool,
    /// Keep `m`, `V`, `S` at their initial values.
    pub freeze_base: bool,
    /// Added to the shape of the alpha full conditional. Nonzero values
    /// produce a wrong sampler and exist only for negative-control testing.
    #[doc(hidden)]
    #[serde(skip)]
    pub alpha_shape_fault: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            truncation: None,
            n_iter: 20_000,
            n_burn: 5_000,
            thin: 2,
            seed: 1,
            init_mode: InitMode::default(),
            kernel: KernelMode::default(),
            retain_latents: Vec::new(),
            freeze_latents: false,
            freeze_base: false,
            alpha_shape_fault: 0.0,
        }
    }
}

/// Default truncation level for `n` observations.
pub fn default_truncation(n: usize) -> usize {
    if n == 0 {
        50
    } else {
        n.min(50)
    }
}

impl ChainConfig {
    pub fn truncation_for(&self, n: usize) -> usize {
        self.truncation.unwrap_or_else(|| default_truncation(n))
    }

    pub fn n_snapshots(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.n_iter <= self.n_burn {
            return Err(Error::invalid("n_iter must exceed n_burn"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        if self.truncation == Some(0) {
            return Err(Error::invalid("truncation level must be at least 1"));
        }
        if let Some(&i) = self.retain_latents.iter().find(|&&i| i >= data.n()) {
            return Err(Error::invalid(format!("retained observation {i} is out of range")));
        }
        if let KernelMode::Restricted { fixed_delta, priors } = &self.kernel {
            if fixed_delta.len() > data.d() {
                return Err(Error::invalid("more fixed deltas than latent-plus-covariate dimensions"));
            }
            if fixed_delta.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::invalid("fixed deltas must be positive"));
            }
            priors.validate()?;
        }
        Ok(())
    }
}

/// One retained posterior state, without data-sized parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub weights: Vec<f64>,
    pub atoms: Vec<Atom>,
    pub base: BaseParams,
    pub alpha: f64,
    pub occupied: usize,
}

impl Snapshot {
    pub fn of(state: &MixtureState) -> Self {
        Snapshot {
            weights: state.weights.clone(),
            atoms: state.atoms.clone(),
            base: state.base.clone(),
            alpha: state.alpha,
            occupied: state.occupied(),
        }
    }

    pub fn dim(&self) -> usize {
        self.base.m.len()
    }
}

/// Everything needed to interpret a draw store without the original inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawMeta {
    pub k: usize,
    pub p: usize,
    pub n: usize,
    pub truncation: usize,
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub dataset_hash: String,
    pub category_counts: Vec<u32>,
    pub ordinal_covariate_flags: Vec<bool>,
    pub cutoffs: CutoffGrid,
    pub retained: Vec<usize>,
    /// Ordinal codes of the retained observations.
    pub retained_codes: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawStore {
    pub meta: DrawMeta,
    pub snapshots: Vec<Snapshot>,
    /// Per retained observation, `snapshots.len() * k` latent values.
    pub latent_traces: Vec<Vec<f64>>,
    /// Sweeps in which `p_N` underflowed during the alpha update.
    pub clamp_count: u64,
}

impl DrawStore {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Latent draws of dimension `j` for the `r`-th retained observation.
    pub fn latent_trace(&self, r: usize, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.latent_traces[r].iter().skip(j).step_by(self.meta.k).copied()
    }

    /// A store holding fixed snapshots, for evaluating functionals of known
    /// mixtures.
    pub fn from_snapshots(snapshots: Vec<Snapshot>, cutoffs: CutoffGrid, ordinal_covariate_flags: Vec<bool>) -> Result<Self> {
        let first = snapshots.first().ok_or_else(|| Error::invalid("no snapshots"))?;
        let k = cutoffs.dims();
        let d = first.dim();
        if d < k || snapshots.iter().any(|s| s.dim() != d || s.atoms.len() != s.weights.len()) {
            return Err(Error::invalid("snapshots disagree in shape"));
        }
        let flags = if ordinal_covariate_flags.is_empty() { vec![false; k] } else { ordinal_covariate_flags };
        if flags.len() != k {
            return Err(Error::invalid("ordinal covariate flags must match the number of ordinal dimensions"));
        }
        Ok(DrawStore {
            meta: DrawMeta {
                k,
                p: d - k,
                n: 0,
                truncation: first.atoms.len(),
                n_iter: snapshots.len(),
                n_burn: 0,
                thin: 1,
                seed: 0,
                dataset_hash: String::new(),
                category_counts: (0..k).map(|j| cutoffs.category_count(j)).collect(),
                ordinal_covariate_flags: flags,
                cutoffs,
                retained: Vec::new(),
                retained_codes: Vec::new(),
            },
            snapshots,
            latent_traces: Vec::new(),
            clamp_count: 0,
        })
    }

    /// Every `step`-th snapshot, keeping latent traces aligned.
    pub fn thinned(&self, step: usize) -> DrawStore {
        let step = step.max(1);
        let k = self.meta.k;
        DrawStore {
            meta: self.meta.clone(),
            snapshots: self.snapshots.iter().step_by(step).cloned().collect(),
            latent_traces: self
                .latent_traces
                .iter()
                .map(|t| t.chunks(k).step_by(step).flatten().copied().collect())
                .collect(),
            clamp_count: self.clamp_count,
        }
    }

    /// Concatenates stores from chains fitted to the same data and model.
    pub fn merge(stores: Vec<DrawStore>) -> Result<DrawStore> {
        let mut it = stores.into_iter();
        let mut out = it.next().ok_or_else(|| Error::invalid("no draw stores to merge"))?;
        for s in it {
            let same = s.meta.k == out.meta.k
                && s.meta.p == out.meta.p
                && s.meta.truncation == out.meta.truncation
                && s.meta.dataset_hash == out.meta.dataset_hash
                && s.meta.cutoffs == out.meta.cutoffs
                && s.meta.retained == out.meta.retained;
            if !same {
                return Err(Error::invalid("draw stores come from different models or data"));
            }
            out.snapshots.extend(s.snapshots);
            for (a, b) in out.latent_traces.iter_mut().zip(s.latent_traces) {
                a.extend(b);
            }
            out.clamp_count += s.clamp_count;
        }
        Ok(out)
    }
}

/// SHA-256 of the observations, category counts and flags.
pub fn dataset_hash(data: &Dataset) -> String {
    let mut h = Sha256::new();
    for v in [data.n(), data.k(), data.p()] {
        h.update((v as u64).to_le_bytes());
    }
    for &c in data.category_counts() {
        h.update(c.to_le_bytes());
    }
    for &f in data.ordinal_covariate_flags() {
        h.update([f as u8]);
    }
    for i in 0..data.n() {
        for &y in data.y_row(i) {
            h.update(y.to_le_bytes());
        }
        for &x in data.x_row(i) {
            h.update(x.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Draws every parameter of the truncated model from the prior. Latents and
/// allocations are left empty.
pub fn draw_from_prior<R: Rng + ?Sized>(
    hyper: &Hyperpriors,
    truncation: usize,
    kernel: &KernelMode,
    rng: &mut R,
) -> Result<MixtureState> {
    let d = hyper.dim();
    let alpha: f64 = Gamma::new(hyper.a_alpha, 1.0 / hyper.b_alpha)
        .map_err(|e| Error::invalid(format!("alpha prior: {e}")))?
        .sample(rng)
        .max(f64::MIN_POSITIVE);
    let m = sample_mvn(&hyper.a_m, &cholesky(&hyper.b_m, "B_m")?, rng);
    let v = sample_inv_wishart(hyper.a_v, &hyper.b_v, rng)?;
    let s = sample_wishart(hyper.a_s, &hyper.b_s, rng)?;
    let (sticks, log_rest): (Vec<f64>, Vec<f64>) = (0..truncation - 1).map(|_| sample_beta_log(1.0, alpha, rng)).unzip();
    let v_chol = cholesky(&v, "V")?;
    let atoms = (0..truncation)
        .map(|_| {
            Ok(Atom {
                mean: sample_mvn(&m, &v_chol, rng),
                cov: updates::sample_base_cov(d, &s, hyper.nu, kernel, rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureState {
        weights: stick_weights_log(&sticks, &log_rest),
        sticks,
        log_rest,
        atoms,
        allocations: Vec::new(),
        latent: Vec::new(),
        base: BaseParams { m, v, s },
        alpha,
    })
}

/// A point strictly inside each observation's latent interval.
fn initial_latents(data: &Dataset, cutoffs: &CutoffGrid) -> Vec<f64> {
    let k = data.k();
    let mut z = Vec::with_capacity(data.n() * k);
    for i in 0..data.n() {
        for j in 0..k {
            let interior = cutoffs.interior(j);
            let step = if interior.len() > 1 {
                cutoffs.span(j) / (interior.len() - 1) as f64
            } else {
                1.0
            };
            let (lo, hi) = cutoffs.interval(j, data.y(i, j));
            z.push(match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (false, true) => hi - 0.5 * step,
                (true, false) => lo + 0.5 * step,
                (false, false) => 0.0,
            });
        }
    }
    z
}

/// A single chain with its own state and random stream.
#[derive(Debug, Clone)]
pub struct Chain {
    data: Dataset,
    cutoffs: CutoffGrid,
    hyper: Hyperpriors,
    config: ChainConfig,
    state: MixtureState,
    rng: ChaCha8Rng,
    clamp_count: u64,
}

impl Chain {
    pub fn new(data: &Dataset, cutoffs: &CutoffGrid, hyper: &Hyperpriors, config: &ChainConfig) -> Result<Self> {
        cutoffs.check_counts(data.category_counts())?;
        hyper.validate()?;
        if hyper.dim() != data.d() {
            return Err(Error::invalid(format!(
                "hyperpriors have dimension {} but the data have {}",
                hyper.dim(),
                data.d()
            )));
        }
        config.validate(data)?;
        let truncation = config.truncation_for(data.n());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut state = match config.init_mode {
            InitMode::PriorDraw => draw_from_prior(hyper, truncation, &config.kernel, &mut rng)?,
            InitMode::SingleCluster => prior_mean_state(hyper, truncation, &config.kernel)?,
        };
        state.latent = initial_latents(data, cutoffs);
        state.allocations = vec![0; data.n()];
        if config.init_mode == InitMode::PriorDraw && data.n() > 0 {
            update_allocations(&mut state, data, &mut rng)?;
        }
        Ok(Chain {
            data: data.clone(),
            cutoffs: cutoffs.clone(),
            hyper: hyper.clone(),
            config: config.clone(),
            state,
            rng,
            clamp_count: 0,
        })
    }

    /// Replaces the initial latent values, which must be consistent with the data.
    pub fn with_latents(mut self, latent: Vec<f64>) -> Result<Self> {
        if latent.len() != self.data.n() * self.data.k() {
            return Err(Error::invalid("initial latents have the wrong length"));
        }
        let old = std::mem::replace(&mut self.state.latent, latent);
        if let Err(e) = self.state.check_invariants(&self.data, &self.cutoffs) {
            self.state.latent = old;
            return Err(e);
        }
        Ok(self)
    }

    pub fn state(&self) -> &MixtureState {
        &self.state
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamp_count
    }

    /// Swaps in new observations with matching latents, keeping allocations.
    pub fn replace_data(&mut self, data: Dataset, latent: Vec<f64>) -> Result<()> {
        if data.n() != self.data.n() || data.d() != self.data.d() || latent.len() != data.n() * data.k() {
            return Err(Error::invalid("replacement data changes the shape"));
        }
        self.data = data;
        self.state.latent = latent;
        Ok(())
    }

    /// Replaces the whole state. The caller keeps it consistent with the data.
    pub(crate) fn set_state(&mut self, state: MixtureState) {
        self.state = state;
    }

    /// Splits the chain into the state and the parts needed to redraw data.
    pub fn parts_mut(&mut self) -> (&MixtureState, &CutoffGrid, &mut ChaCha8Rng) {
        (&self.state, &self.cutoffs, &mut self.rng)
    }

    pub fn sweep(&mut self) -> Result<()> {
        let (data, rng, st) = (&self.data, &mut self.rng, &mut self.state);
        if !self.config.freeze_latents {
            update_latents(st, data, &self.cutoffs, rng)?;
        }
        update_allocations(st, data, rng)?;
        update_atoms(st, data, &self.hyper, &self.config.kernel, rng)?;
        update_weights(st, rng)?;
        if !self.config.freeze_base {
            update_hyper_m(st, &self.hyper, rng)?;
            update_hyper_v(st, &self.hyper, rng)?;
            if self.config.kernel == KernelMode::InverseWishart {
                update_hyper_s(st, &self.hyper, rng)?;
            }
        }
        if updates::update_alpha_shifted(st, &self.hyper, self.config.alpha_shape_fault, rng)? {
            self.clamp_count += 1;
        }
        if cfg!(debug_assertions) {
            st.check_invariants(data, &self.cutoffs)?;
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<DrawStore> {
        let cfg = self.config.clone();
        let k = self.data.k();
        let mut snapshots = Vec::with_capacity(cfg.n_snapshots());
        let mut latent_traces = vec![Vec::with_capacity(cfg.n_snapshots() * k); cfg.retain_latents.len()];
        for it in 0..cfg.n_iter {
            self.sweep()?;
            if it >= cfg.n_burn && (it + 1 - cfg.n_burn) % cfg.thin == 0 {
                snapshots.push(Snapshot::of(&self.state));
                for (trace, &i) in latent_traces.iter_mut().zip(&cfg.retain_latents) {
                    trace.extend_from_slice(self.state.latent_row(i, k));
                }
            }
        }
        self.state.check_invariants(&self.data, &self.cutoffs)?;
        Ok(DrawStore {
            meta: DrawMeta {
                k,
                p: self.data.p(),
                n: self.data.n(),
                truncation: self.state.truncation(),
                n_iter: cfg.n_iter,
                n_burn: cfg.n_burn,
                thin: cfg.thin,
                seed: cfg.seed,
                dataset_hash: dataset_hash(&self.data),
                category_counts: self.data.category_counts().to_vec(),
                ordinal_covariate_flags: self.data.ordinal_covariate_flags().to_vec(),
                cutoffs: self.cutoffs.clone(),
                retained: cfg.retain_latents.clone(),
                retained_codes: cfg.retain_latents.iter().map(|&i| self.data.y_row(i).to_vec()).collect(),
            },
            snapshots,
            latent_traces,
            clamp_count: self.clamp_count,
        })
    }
}

/// State with every parameter at its prior mean (or a proper stand-in) and
/// equal weights.
fn prior_mean_state(hyper: &Hyperpriors, truncation: usize, kernel: &KernelMode) -> Result<MixtureState> {
    let d = hyper.dim() as f64;
    let v = &hyper.b_v / (hyper.a_v - d - 1.0);
    let s = &hyper.b_s * hyper.a_s;
    let cov = match kernel {
        KernelMode::InverseWishart => &s / (hyper.nu - d - 1.0),
        KernelMode::Restricted { fixed_delta, .. } => {
            let mut c = DMatrix::identity(hyper.dim(), hyper.dim());
            for (i, &f) in fixed_delta.iter().enumerate() {
                c[(i, i)] = f;
            }
            c
        }
    };
    let sticks: Vec<f64> = (0..truncation - 1).map(|l| 1.0 / (truncation - l) as f64).collect();
    let mean: DVector<f64> = hyper.a_m.clone();
    Ok(MixtureState {
        weights: stick_weights(&sticks),
        log_rest: sticks.iter().map(|v| (-v).ln_1p()).collect(),
        sticks,
        atoms: vec![Atom { mean, cov }; truncation],
        allocations: Vec::new(),
        latent: Vec::new(),
        base: BaseParams {
            m: hyper.a_m.clone(),
            v,
            s,
        },
        alpha: hyper.a_alpha / hyper.b_alpha,
    })
}

pub fn run_chain(data: &Dataset, cutoffs: &CutoffGrid, hyper: &Hyperpriors, config: &ChainConfig) -> Result<DrawStore> {
    Chain::new(data, cutoffs, hyper, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_cutoffs, validate_dataset, RawDataset};
    use crate::prior::{derive_hyperpriors, PriorInputs, VarianceSplit};

    fn small() -> (Dataset, CutoffGrid, Hyperpriors) {
        let y: Vec<Vec<u32>> = (0..30).map(|i| vec![(i % 3) as u32 + 1]).collect();
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin() * 3.0 + (i % 3) as f64]).collect();
        let data = validate_dataset(RawDataset {
            y,
            x,
            category_counts: vec![3],
            ordinal_covariate_flags: vec![],
        })
        .unwrap();
        let cut = default_cutoffs(&[3], 1.0).unwrap();
        let (c, r) = data.covariate_centers_ranges();
        let hyper = derive_hyperpriors(&PriorInputs {
            centers: c,
            ranges: r,
            cutoffs: cut.clone(),
            variance_split: VarianceSplit::Third,
            alpha_prior: (2.0, 2.0),
            latent_ranges: vec![],
        })
        .unwrap();
        (data, cut, hyper)
    }

    #[test]
    fn snapshot_count_and_determinism() {
        let (data, cut, hyper) = small();
        let cfg = ChainConfig {
            truncation: Some(5),
            n_iter: 205,
            n_burn: 50,
            thin: 3,
            seed: 11,
            retain_latents: vec![0, 4],
            ..Default::default()
        };
        let a = run_chain(&data, &cut, &hyper, &cfg).unwrap();
        let b = run_chain(&data, &cut, &hyper, &cfg).unwrap();
        assert_eq!(a.len(), 155 / 3);
        assert_eq!(a, b);
        assert_eq!(a.latent_traces[1].len(), a.len());
        for z in a.latent_trace(0, 0) {
            assert!(z <= -1.0);
        }
        for s in &a.snapshots {
            assert!(s.occupied <= 5);
        }
    }

    #[test]
    fn prior_draw_init_runs() {
        let (data, cut, hyper) = small();
        let cfg = ChainConfig {
            truncation: Some(4),
            n_iter: 50,
            n_burn: 10,
            thin: 1,
            init_mode: InitMode::PriorDraw,
            ..Default::default()
        };
        assert_eq!(run_chain(&data, &cut, &hyper, &cfg).unwrap().len(), 40);
    }

    #[test]
    fn restricted_kernel_pins_first_variance() {
        let (data, cut, hyper) = small();
        let cfg = ChainConfig {
            truncation: Some(4),
            n_iter: 60,
            n_burn: 10,
            thin: 1,
            kernel: KernelMode::Restricted {
                fixed_delta: vec![1.0],
                priors: RestrictedPriors::default(),
            },
            ..Default::default()
        };
        let store = run_chain(&data, &cut, &hyper, &cfg).unwrap();
        for s in &store.snapshots {
            for a in &s.atoms {
                assert!((a.cov[(0, 0)] - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn config_validation() {
        let (data, cut, hyper) = small();
        let bad = [
            ChainConfig { n_iter: 10, n_burn: 10, ..Default::default() },
            ChainConfig { thin: 0, ..Default::default() },
            ChainConfig { truncation: Some(0), ..Default::default() },
            ChainConfig { retain_latents: vec![30], ..Default::default() },
        ];
        for cfg in bad {
            assert!(Chain::new(&data, &cut, &hyper, &cfg).is_err());
        }
    }

    #[test]
    fn prior_only_run_recovers_prior_moments() {
        let (_, cut, hyper) = small();
        let data = Dataset::prior_only(vec![3], 1).unwrap();
        let cfg = ChainConfig {
            truncation: Some(10),
            n_iter: 40_000,
            n_burn: 100,
            thin: 1,
            seed: 3,
            ..Default::default()
        };
        let store = run_chain(&data, &cut, &hyper, &cfg).unwrap();
        let alphas: Vec<f64> = store.snapshots.iter().map(|s| s.alpha).collect();
        let m1: Vec<f64> = store.snapshots.iter().map(|s| s.base.m[1]).collect();
        let se_a = crate::summary::batch_means_se(&alphas, 40);
        let se_m = crate::summary::batch_means_se(&m1, 40);
        let prior_alpha = hyper.a_alpha / hyper.b_alpha;
        assert!((crate::summary::mean(&alphas) - prior_alpha).abs() < 4.0 * se_a, "alpha {} vs {prior_alpha} se {se_a}", crate::summary::mean(&alphas));
        assert!((crate::summary::mean(&m1) - hyper.a_m[1]).abs() < 4.0 * se_m, "m");
    }

    #[test]
    fn merge_rejects_mismatch() {
        let (data, cut, hyper) = small();
        let cfg = ChainConfig {
            truncation: Some(3),
            n_iter: 20,
            n_burn: 0,
            thin: 1,
            ..Default::default()
        };
        let a = run_chain(&data, &cut, &hyper, &cfg).unwrap();
        let b = run_chain(&data, &cut, &hyper, &ChainConfig { seed: 2, ..cfg.clone() }).unwrap();
        assert_eq!(DrawStore::merge(vec![a.clone(), b]).unwrap().len(), 40);
        let c = run_chain(&data, &cut, &hyper, &ChainConfig { truncation: Some(4), ..cfg }).unwrap();
        assert!(DrawStore::merge(vec![a, c]).is_err());
    }
}
