//! Data model shared by every other module.
//!
//! Ordinal codes are 1-based at every public interface; the latent vector of
//! an observation is `(z_1, ..., z_k, x_1, ..., x_p)`, latent dimensions first.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::cholesky;
use crate::{Error, Result};

/// Unvalidated dataset as read from a file or built by hand.
#[derive(Debug, Clone, Default)]
pub struct RawDataset {
    /// `n` rows of `k` ordinal codes.
    pub y: Vec<Vec<u32>>,
    /// `n` rows of `p` continuous covariates.
    pub x: Vec<Vec<f64>>,
    pub category_counts: Vec<u32>,
    /// One flag per latent dimension; `true` marks an ordinally recorded covariate.
    pub ordinal_covariate_flags: Vec<bool>,
}

/// A validated dataset. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    k: usize,
    p: usize,
    y: Vec<u32>,
    x: Vec<f64>,
    category_counts: Vec<u32>,
    ordinal_covariate_flags: Vec<bool>,
}

pub fn validate_dataset(raw: RawDataset) -> Result<Dataset> {
    let k = raw.category_counts.len();
    let n = raw.y.len();
    if k == 0 {
        return Err(Error::invalid("at least one ordinal dimension is required"));
    }
    if n == 0 {
        return Err(Error::invalid("dataset has no observations"));
    }
    if raw.x.len() != n {
        return Err(Error::invalid(format!(
            "{} response rows but {} covariate rows",
            n,
            raw.x.len()
        )));
    }
    let flags = if raw.ordinal_covariate_flags.is_empty() {
        vec![false; k]
    } else if raw.ordinal_covariate_flags.len() == k {
        raw.ordinal_covariate_flags
    } else {
        return Err(Error::invalid("ordinal covariate flags must match the number of ordinal dimensions"));
    };
    if !flags.iter().any(|f| !f) {
        return Err(Error::invalid("at least one ordinal dimension must be a response"));
    }
    for (j, &c) in raw.category_counts.iter().enumerate() {
        if c < 2 {
            return Err(Error::invalid(format!("dimension {} has {c} categories; need at least 2", j + 1)));
        }
    }
    let p = raw.x.first().map_or(0, Vec::len);
    let mut y = Vec::with_capacity(n * k);
    let mut x = Vec::with_capacity(n * p);
    for (i, (yr, xr)) in raw.y.iter().zip(&raw.x).enumerate() {
        if yr.len() != k {
            return Err(Error::Data {
                row: i + 1,
                col: yr.len().min(k) + 1,
                msg: format!("expected {k} ordinal codes, found {}", yr.len()),
            });
        }
        if xr.len() != p {
            return Err(Error::Data {
                row: i + 1,
                col: k + 1,
                msg: format!("expected {p} covariates, found {}", xr.len()),
            });
        }
        for (j, &code) in yr.iter().enumerate() {
            if code < 1 {
                return Err(Error::Data {
                    row: i + 1,
                    col: j + 1,
                    msg: format!("code below 1 at row {}", i + 1),
                });
            }
            if code > raw.category_counts[j] {
                return Err(Error::Data {
                    row: i + 1,
                    col: j + 1,
                    msg: format!("code {code} exceeds C_j = {}", raw.category_counts[j]),
                });
            }
        }
        for (m, &v) in xr.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data {
                    row: i + 1,
                    col: k + m + 1,
                    msg: format!("non-finite covariate value {v}"),
                });
            }
        }
        y.extend_from_slice(yr);
        x.extend_from_slice(xr);
    }
    Ok(Dataset {
        n,
        k,
        p,
        y,
        x,
        category_counts: raw.category_counts,
        ordinal_covariate_flags: flags,
    })
}

impl Dataset {
    /// A dataset with no observations, for prior simulation.
    pub fn prior_only(category_counts: Vec<u32>, p: usize) -> Result<Self> {
        if category_counts.is_empty() || category_counts.iter().any(|&c| c < 2) {
            return Err(Error::invalid("every ordinal dimension needs at least 2 categories"));
        }
        let k = category_counts.len();
        Ok(Dataset {
            n: 0,
            k,
            p,
            y: Vec::new(),
            x: Vec::new(),
            category_counts,
            ordinal_covariate_flags: vec![false; k],
        })
    }

    /// Replaces every observation, keeping the shape and metadata.
    /// Used by the joint-distribution tests to redraw data in place.
    pub fn with_observations(&self, y: Vec<u32>, x: Vec<f64>) -> Result<Self> {
        if y.len() % self.k != 0 || (self.p > 0 && x.len() != (y.len() / self.k) * self.p) {
            return Err(Error::invalid("observation buffers have the wrong shape"));
        }
        let n = y.len() / self.k;
        if y.iter().enumerate().any(|(idx, &c)| c < 1 || c > self.category_counts[idx % self.k]) {
            return Err(Error::invalid("ordinal code out of range"));
        }
        Ok(Dataset {
            n,
            y,
            x,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of ordinal (latent) dimensions, responses and ordinal covariates together.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Dimension of the joint latent-plus-covariate vector.
    pub fn d(&self) -> usize {
        self.k + self.p
    }

    /// 1-based code of observation `i`, dimension `j` (both 0-based).
    #[inline]
    pub fn y(&self, i: usize, j: usize) -> u32 {
        self.y[i * self.k + j]
    }

    pub fn y_row(&self, i: usize) -> &[u32] {
        &self.y[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn category_counts(&self) -> &[u32] {
        &self.category_counts
    }

    pub fn ordinal_covariate_flags(&self) -> &[bool] {
        &self.ordinal_covariate_flags
    }

    /// Midrange and range of each continuous covariate.
    pub fn covariate_centers_ranges(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.p)
            .map(|m| {
                let (lo, hi) = (0..self.n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = self.x[i * self.p + m];
                    (lo.min(v), hi.max(v))
                });
                (0.5 * (lo + hi), hi - lo)
            })
            .unzip()
    }
}

/// Fixed thresholds per ordinal dimension, `gamma_{j,0} = -inf < ... < gamma_{j,C_j} = +inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CutoffGrid {
    interior: Vec<Vec<f64>>,
}

impl CutoffGrid {
    /// Builds a grid from the interior cut-offs of each dimension
    /// (`C_j - 1` strictly increasing finite values).
    pub fn new(interior: Vec<Vec<f64>>) -> Result<Self> {
        if interior.is_empty() {
            return Err(Error::invalid("cut-off grid has no dimensions"));
        }
        for (j, c) in interior.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::invalid(format!("dimension {} has no interior cut-offs", j + 1)));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("dimension {} has a non-finite interior cut-off", j + 1)));
            }
            if c.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::invalid(format!("cut-offs of dimension {} are not strictly increasing", j + 1)));
            }
        }
        Ok(Self { interior })
    }

    pub fn dims(&self) -> usize {
        self.interior.len()
    }

    pub fn category_count(&self, j: usize) -> u32 {
        self.interior[j].len() as u32 + 1
    }

    pub fn interior(&self, j: usize) -> &[f64] {
        &self.interior[j]
    }

    /// `gamma_{j,l}` for `l` in `0..=C_j`.
    #[inline]
    pub fn gamma(&self, j: usize, l: usize) -> f64 {
        let c = &self.interior[j];
        if l == 0 {
            f64::NEG_INFINITY
        } else if l > c.len() {
            f64::INFINITY
        } else {
            c[l - 1]
        }
    }

    /// Interval `(gamma_{j,l-1}, gamma_{j,l}]` of the 1-based category `l`.
    #[inline]
    pub fn interval(&self, j: usize, category: u32) -> (f64, f64) {
        let l = category as usize;
        (self.gamma(j, l - 1), self.gamma(j, l))
    }

    /// Category (1-based) whose interval contains `z`.
    pub fn discretize(&self, j: usize, z: f64) -> u32 {
        // number of interior cut-offs strictly below z
        self.interior[j].partition_point(|&g| g < z) as u32 + 1
    }

    /// Width of the finite interior span, `gamma_{j,C_j-1} - gamma_{j,1}`.
    pub fn span(&self, j: usize) -> f64 {
        let c = &self.interior[j];
        c[c.len() - 1] - c[0]
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        let c = &self.interior[j];
        0.5 * (c[0] + c[c.len() - 1])
    }

    pub fn check_counts(&self, category_counts: &[u32]) -> Result<()> {
        if category_counts.len() != self.dims() {
            return Err(Error::invalid("cut-off grid and data have different numbers of ordinal dimensions"));
        }
        for (j, &c) in category_counts.iter().enumerate() {
            if self.category_count(j) != c {
                return Err(Error::invalid(format!(
                    "dimension {} has {c} categories but {} interior cut-offs",
                    j + 1,
                    self.interior[j].len()
                )));
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for CutoffGrid {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        CutoffGrid::new(v)
    }
}

impl From<CutoffGrid> for Vec<Vec<f64>> {
    fn from(g: CutoffGrid) -> Self {
        g.interior
    }
}

/// Equally spaced interior cut-offs spanning `[-half_width, half_width]`.
pub fn default_cutoffs(category_counts: &[u32], half_width: f64) -> Result<CutoffGrid> {
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::invalid(format!("half width must be positive, got {half_width}")));
    }
    let widths = vec![half_width; category_counts.len()];
    cutoffs_with_widths(category_counts, &widths)
}

/// Unit-spaced cut-offs centered at zero, one width per dimension.
pub fn unit_cutoffs(category_counts: &[u32]) -> Result<CutoffGrid> {
    let widths: Vec<f64> = category_counts.iter().map(|&c| (c.max(3) as f64 - 2.0) / 2.0).collect();
    cutoffs_with_widths(category_counts, &widths)
}

fn cutoffs_with_widths(category_counts: &[u32], widths: &[f64]) -> Result<CutoffGrid> {
    let interior = category_counts
        .iter()
        .zip(widths)
        .map(|(&c, &w)| {
            if c < 2 {
                return Err(Error::invalid("every ordinal dimension needs at least 2 categories"));
            }
            if c == 2 {
                return Ok(vec![0.0]);
            }
            let steps = (c - 2) as f64;
            Ok((0..c - 1).map(|l| -w + 2.0 * w * l as f64 / steps).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    CutoffGrid::new(interior)
}

/// Fixed prior constants of the hierarchical model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperpriors {
    pub a_m: DVector<f64>,
    pub b_m: DMatrix<f64>,
    pub a_v: f64,
    pub b_v: DMatrix<f64>,
    pub a_s: f64,
    pub b_s: DMatrix<f64>,
    pub nu: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
}

impl Hyperpriors {
    pub fn dim(&self) -> usize {
        self.a_m.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (name, m) in [("B_m", &self.b_m), ("B_V", &self.b_v), ("B_S", &self.b_s)] {
            if m.shape() != (d, d) {
                return Err(Error::invalid(format!("{name} must be {d}x{d}")));
            }
            if (m - m.transpose()).abs().max() > 1e-10 * m.abs().max().max(1.0) {
                return Err(Error::invalid(format!("{name} is not symmetric")));
            }
            cholesky(m, "hyperprior scale matrix")?;
        }
        let df_min = d as f64 + 1.0;
        if !(self.a_v > df_min) || !(self.nu > df_min) {
            return Err(Error::invalid(format!(
                "a_V and nu must exceed d + 1 = {df_min} (got {}, {})",
                self.a_v, self.nu
            )));
        }
        if !(self.a_s > d as f64 - 1.0) {
            return Err(Error::invalid("a_S must exceed d - 1"));
        }
        if !(self.a_alpha > 0.0 && self.b_alpha > 0.0) {
            return Err(Error::invalid("alpha prior parameters must be positive"));
        }
        Ok(())
    }
}

/// One mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Block view of an atom split into the latent (`z`) and covariate (`x`) parts.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomPartition {
    pub mu_z: DVector<f64>,
    pub mu_x: DVector<f64>,
    pub sigma_zz: DMatrix<f64>,
    pub sigma_xx: DMatrix<f64>,
    pub sigma_zx: DMatrix<f64>,
    pub sigma_xz: DMatrix<f64>,
}

impl AtomPartition {
    pub fn new(atom: &Atom, k: usize) -> Self {
        let d = atom.mean.len();
        let p = d - k;
        AtomPartition {
            mu_z: atom.mean.rows(0, k).into_owned(),
            mu_x: atom.mean.rows(k, p).into_owned(),
            sigma_zz: atom.cov.view((0, 0), (k, k)).into_owned(),
            sigma_xx: atom.cov.view((k, k), (p, p)).into_owned(),
            sigma_zx: atom.cov.view((0, k), (k, p)).into_owned(),
            sigma_xz: atom.cov.view((k, 0), (p, k)).into_owned(),
        }
    }

    pub fn reassemble(&self) -> Atom {
        let (k, p) = (self.mu_z.len(), self.mu_x.len());
        let d = k + p;
        let mut mean = DVector::zeros(d);
        mean.rows_mut(0, k).copy_from(&self.mu_z);
        mean.rows_mut(k, p).copy_from(&self.mu_x);
        let mut cov = DMatrix::zeros(d, d);
        cov.view_mut((0, 0), (k, k)).copy_from(&self.sigma_zz);
        cov.view_mut((k, k), (p, p)).copy_from(&self.sigma_xx);
        cov.view_mut((0, k), (k, p)).copy_from(&self.sigma_zx);
        cov.view_mut((k, 0), (p, k)).copy_from(&self.sigma_xz);
        Atom { mean, cov }
    }
}

/// Stick-breaking map: `p_1 = v_1`, `p_l = v_l prod_{r<l}(1 - v_r)`, and the
/// last weight takes the remaining mass.
pub fn stick_weights(sticks: &[f64]) -> Vec<f64> {
    let log_rest: Vec<f64> = sticks.iter().map(|v| (-v).ln_1p()).collect();
    stick_weights_log(sticks, &log_rest)
}

/// As [`stick_weights`], with `log_rest[l] = ln(1 - v_l)` supplied separately.
pub fn stick_weights_log(sticks: &[f64], log_rest: &[f64]) -> Vec<f64> {
    let mut weights = Vec::with_capacity(sticks.len() + 1);
    let mut log_remaining = 0.0f64;
    for (&v, &lr) in sticks.iter().zip(log_rest) {
        weights.push(v * log_remaining.exp());
        log_remaining += lr;
    }
    weights.push(log_remaining.exp());
    weights
}

/// Hyperparameters `(m, V, S)` of the base measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseParams {
    pub m: DVector<f64>,
    pub v: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

/// Full state of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub weights: Vec<f64>,
    pub sticks: Vec<f64>,
    /// `ln(1 - v_l)` per stick. Stored because `v_l` rounds to 1 long before
    /// `1 - v_l` underflows.
    pub log_rest: Vec<f64>,
    pub atoms: Vec<Atom>,
    /// 0-based component index per observation.
    pub allocations: Vec<usize>,
    /// Row-major `n x k` latent values.
    pub latent: Vec<f64>,
    pub base: BaseParams,
    pub alpha: f64,
}

impl MixtureState {
    pub fn truncation(&self) -> usize {
        self.atoms.len()
    }

    /// Sets sticks from their fractions and recomputes the weights.
    pub fn set_sticks(&mut self, sticks: Vec<f64>) {
        self.log_rest = sticks.iter().map(|v| (-v).ln_1p()).collect();
        self.weights = stick_weights_log(&sticks, &self.log_rest);
        self.sticks = sticks;
    }

    /// `ln p_N`, exact even when `p_N` underflows.
    pub fn log_last_weight(&self) -> f64 {
        self.log_rest.iter().sum()
    }

    pub fn latent_row(&self, i: usize, k: usize) -> &[f64] {
        &self.latent[i * k..(i + 1) * k]
    }

    pub fn cluster_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.atoms.len()];
        for &l in &self.allocations {
            counts[l] += 1;
        }
        counts
    }

    pub fn occupied(&self) -> usize {
        self.cluster_counts().iter().filter(|&&c| c > 0).count()
    }

    /// Checks every state invariant against the data and cut-offs.
    pub fn check_invariants(&self, data: &Dataset, cutoffs: &CutoffGrid) -> Result<()> {
        let n_atoms = self.atoms.len();
        let (n, k, d) = (data.n(), data.k(), data.d());
        if self.weights.len() != n_atoms || self.sticks.len() + 1 != n_atoms.max(1) || self.log_rest.len() != self.sticks.len() {
            return Err(Error::Sampler("weight and stick vectors have the wrong length".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Sampler(format!("weights are not a simplex (sum {total})")));
        }
        if self.sticks.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Sampler("stick fraction outside [0, 1]".into()));
        }
        for (l, atom) in self.atoms.iter().enumerate() {
            if atom.mean.len() != d || atom.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::Sampler(format!("atom {l} mean is malformed")));
            }
            cholesky(&atom.cov, "atom covariance")?;
        }
        if self.allocations.len() != n || self.allocations.iter().any(|&l| l >= n_atoms) {
            return Err(Error::Sampler("allocation out of range".into()));
        }
        if self.latent.len() != n * k {
            return Err(Error::Sampler("latent matrix has the wrong shape".into()));
        }
        for i in 0..n {
            for j in 0..k {
                let z = self.latent[i * k + j];
                let (lo, hi) = cutoffs.interval(j, data.y(i, j));
                if !(lo < z && z <= hi) {
                    return Err(Error::Sampler(format!(
                        "latent z[{i}][{j}] = {z} outside ({lo}, {hi}]"
                    )));
                }
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Sampler(format!("alpha = {} is not positive", self.alpha)));
        }
        Ok(())
    }
}
