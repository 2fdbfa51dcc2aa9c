//! A density on `(x, z)` whose ordinal cell integrals reproduce a given
//! mixed ordinal-continuous law exactly.
//!
//! Within each cell the density is flat in `z` over the cell clipped to
//! `[lower_j, upper_j]`, so integrating `z` over the cell recovers
//! `p0(x, y)` up to rounding.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::mvn_logpdf;
use crate::model::CutoffGrid;
use crate::{Error, Result};

/// `p0(x, y) = mass_y * N(x; x_mean_y, x_cov_y)`. With no covariates the
/// means are empty and the law is the cell masses alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedLaw {
    pub cells: Vec<Vec<u32>>,
    pub masses: Vec<f64>,
    pub x_means: Vec<DVector<f64>>,
    pub x_covs: Vec<DMatrix<f64>>,
}

impl MixedLaw {
    pub fn p(&self) -> usize {
        self.x_means.first().map_or(0, |m| m.len())
    }

    /// `p0(x, y)` for the `c`-th listed cell.
    pub fn density(&self, c: usize, x: &[f64]) -> Result<f64> {
        if self.p() == 0 {
            return Ok(self.masses[c]);
        }
        let xv = DVector::from_column_slice(x);
        Ok(self.masses[c] * mvn_logpdf(&xv, &self.x_means[c], &self.x_covs[c])?.exp())
    }
}

#[derive(Debug, Clone)]
pub struct F0Density {
    law: MixedLaw,
    cutoffs: CutoffGrid,
    lower: Vec<f64>,
    upper: Vec<f64>,
    index: HashMap<Vec<u32>, usize>,
}

impl F0Density {
    /// `lower[j]` must lie below the first cutoff and `upper[j]` above the last.
    pub fn new(law: MixedLaw, cutoffs: CutoffGrid, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let k = cutoffs.dims();
        let n = law.cells.len();
        if n == 0 || law.masses.len() != n {
            return Err(Error::invalid("one mass per cell is required"));
        }
        let p = law.p();
        let x_shapes_ok = if p == 0 {
            law.x_means.is_empty() && law.x_covs.is_empty()
        } else {
            law.x_means.len() == n
                && law.x_covs.len() == n
                && law.x_means.iter().all(|m| m.len() == p)
                && law.x_covs.iter().all(|c| c.nrows() == p && c.ncols() == p)
        };
        if !x_shapes_ok {
            return Err(Error::invalid("covariate densities have inconsistent shapes"));
        }
        let total: f64 = law.masses.iter().sum();
        if law.masses.iter().any(|&m| !(m >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("cell masses must form a simplex"));
        }
        if lower.len() != k || upper.len() != k {
            return Err(Error::invalid("one lower and one upper bound per dimension"));
        }
        for j in 0..k {
            let inner = cutoffs.interior(j);
            let (first, last) = (inner[0], inner[inner.len() - 1]);
            if !(lower[j] < first && upper[j] > last) {
                return Err(Error::invalid(format!("bounds for dimension {} must enclose every cutoff", j + 1)));
            }
        }
        let mut index = HashMap::with_capacity(n);
        for (c, cell) in law.cells.iter().enumerate() {
            if cell.len() != k || cell.iter().enumerate().any(|(j, &l)| l < 1 || l > cutoffs.category_count(j)) {
                return Err(Error::invalid("cell code out of range"));
            }
            if index.insert(cell.clone(), c).is_some() {
                return Err(Error::invalid("duplicate cell"));
            }
        }
        Ok(Self { law, cutoffs, lower, upper, index })
    }

    pub fn law(&self) -> &MixedLaw {
        &self.law
    }

    /// The cell's latent interval clipped to the bounds.
    pub fn clipped(&self, j: usize, l: u32) -> (f64, f64) {
        let (a, b) = self.cutoffs.interval(j, l);
        (a.max(self.lower[j]), b.min(self.upper[j]))
    }

    fn volume(&self, cell: &[u32]) -> f64 {
        cell.iter().enumerate().map(|(j, &l)| {
            let (a, b) = self.clipped(j, l);
            b - a
        }).product()
    }

    /// `f0(x, z)`.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if z.iter().enumerate().any(|(j, &v)| !(v >= self.lower[j] && v <= self.upper[j])) {
            return Ok(0.0);
        }
        let cell: Vec<u32> = z.iter().enumerate().map(|(j, &v)| self.cutoffs.discretize(j, v)).collect();
        match self.index.get(&cell) {
            Some(&c) => Ok(self.law.density(c, x)? / self.volume(&cell)),
            None => Ok(0.0),
        }
    }

    /// `integral of f0(x, z) dz` over the box `[lo, hi]`.
    pub fn rect_integral(&self, x: &[f64], lo: &[f64], hi: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (c, cell) in self.law.cells.iter().enumerate() {
            let mut frac = 1.0;
            for (j, &l) in cell.iter().enumerate() {
                let (a, b) = self.clipped(j, l);
                let overlap = (hi[j].min(b) - lo[j].max(a)).max(0.0);
                frac *= overlap / (b - a);
            }
            if frac > 0.0 {
                total += frac * self.law.density(c, x)?;
            }
        }
        Ok(total)
    }

    /// `integral of f0(x, z) dz` over the latent cell of `y`.
    pub fn cell_integral(&self, x: &[f64], y: &[u32]) -> Result<f64> {
        let (lo, hi): (Vec<f64>, Vec<f64>) = y.iter().enumerate().map(|(j, &l)| self.cutoffs.interval(j, l)).unzip();
        self.rect_integral(x, &lo, &hi)
    }
}
