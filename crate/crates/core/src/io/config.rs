//! JSON run configuration.
//!
//! Latent ordinal dimensions are the response columns followed by the
//! ordinal covariate columns, in the order listed. Binary responses must be
//! listed first so that they occupy the leading latent coordinates.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binary::{check_binary_ordering, RestrictedPriors};
use crate::functionals::{AgreementMode, McSettings, DEFAULT_GRID_POINTS};
use crate::gibbs::{ChainConfig, KernelMode};
use crate::model::{default_cutoffs, unit_cutoffs, CutoffGrid};
use crate::prior::VarianceSplit;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrdinalColumn {
    pub column: String,
    pub categories: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffSpec {
    /// Unit-spaced cut-offs centred at zero.
    #[default]
    Unit,
    /// `C_j - 1` equally spaced cut-offs over `[-h, h]`.
    HalfWidth(f64),
    /// Interior cut-offs per latent dimension.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    /// Covariate centers; computed as data midranges when absent.
    pub centers: Option<Vec<f64>>,
    /// Covariate ranges; computed from the data when absent.
    pub ranges: Option<Vec<f64>>,
    pub variance_split: VarianceSplit,
    /// `(shape, rate)`; a sample-size default when absent.
    pub alpha_prior: Option<(f64, f64)>,
    /// Latent range per latent dimension; `null` entries use the cut-off span.
    pub latent_ranges: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRequest {
    pub dim: usize,
    pub category: u32,
    pub covariate: usize,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// Full covariate vector to hold fixed; other covariates are integrated
    /// out when absent.
    #[serde(default)]
    pub fixed: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseDensityRequest {
    /// `(dim, category)` pairs defining the conditioning event.
    pub event: Vec<(usize, u32)>,
    pub covariate: usize,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgreementTableRequest {
    pub name: String,
    pub dims: Vec<usize>,
    /// Labelled category sets, e.g. `["L", [1, 2, 3]]`.
    pub sets: Vec<(String, Vec<u32>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgreementCurveRequest {
    pub a: usize,
    pub b: usize,
    pub covariate: usize,
    pub mode: AgreementMode,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub fixed: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

fn forty() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolychoricRequest {
    pub a: usize,
    pub b: usize,
    #[serde(default = "one")]
    pub per_snapshot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentRequest {
    /// 0-based observation index.
    pub observation: usize,
    pub dim: usize,
    #[serde(default = "forty")]
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrdinalCovariateRequest {
    pub dim: usize,
    pub category: u32,
    /// Latent index of the ordinal covariate.
    pub covariate_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalRequests {
    pub grid_points: usize,
    pub mc: McSettings,
    /// Seed for the polychoric component draws.
    pub seed: u64,
    pub curves: Vec<CurveRequest>,
    pub inverse_densities: Vec<InverseDensityRequest>,
    pub agreement_tables: Vec<AgreementTableRequest>,
    pub agreement_curves: Vec<AgreementCurveRequest>,
    pub polychoric: Vec<PolychoricRequest>,
    pub latent_densities: Vec<LatentRequest>,
    pub ordinal_covariate_curves: Vec<OrdinalCovariateRequest>,
}

impl Default for FunctionalRequests {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            mc: McSettings::default(),
            seed: 11,
            curves: Vec::new(),
            inverse_densities: Vec::new(),
            agreement_tables: Vec::new(),
            agreement_curves: Vec::new(),
            polychoric: Vec::new(),
            latent_densities: Vec::new(),
            ordinal_covariate_curves: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawFormat {
    #[default]
    Binary,
    /// Binary plus a CSV export.
    BinaryAndCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV file; relative paths resolve against the configuration file.
    pub data_path: PathBuf,
    pub responses: Vec<OrdinalColumn>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub ordinal_covariates: Vec<OrdinalColumn>,
    /// Latent indices of binary responses; must be `0..r`.
    #[serde(default)]
    pub binary_dims: Vec<usize>,
    #[serde(default)]
    pub cutoffs: CutoffSpec,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default = "one")]
    pub n_chains: usize,
    /// One seed per chain; `chain.seed + c` when absent.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub functionals: FunctionalRequests,
    #[serde(default)]
    pub draw_format: DrawFormat,
    /// Output directory; relative paths resolve against the configuration file.
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data_path.is_relative() {
            cfg.data_path = base.join(&cfg.data_path);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn category_counts(&self) -> Vec<u32> {
        self.responses.iter().chain(&self.ordinal_covariates).map(|c| c.categories).collect()
    }

    pub fn k(&self) -> usize {
        self.responses.len() + self.ordinal_covariates.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.n_chains as u64).map(|c| self.chain.seed.wrapping_add(c)).collect(),
        }
    }

    pub fn cutoff_grid(&self) -> Result<CutoffGrid> {
        let counts = self.category_counts();
        let grid = match &self.cutoffs {
            CutoffSpec::Unit => unit_cutoffs(&counts)?,
            CutoffSpec::HalfWidth(h) => default_cutoffs(&counts, *h)?,
            CutoffSpec::Explicit(v) => CutoffGrid::new(v.clone())?,
        };
        grid.check_counts(&counts)?;
        Ok(grid)
    }

    /// The chain kernel: restricted with unit conditional variances for
    /// binary responses, otherwise as configured.
    pub fn kernel(&self) -> Result<KernelMode> {
        let r = self.binary_dims.len();
        match (&self.chain.kernel, r) {
            (k, 0) => Ok(k.clone()),
            (KernelMode::InverseWishart, _) => Ok(KernelMode::Restricted {
                fixed_delta: vec![1.0; r],
                priors: RestrictedPriors::default(),
            }),
            (KernelMode::Restricted { fixed_delta, .. }, _) if fixed_delta.len() == r => Ok(self.chain.kernel.clone()),
            _ => Err(Error::invalid("the restricted kernel must fix one variance per binary dimension")),
        }
    }

    /// Chain settings for chain `c`, with every latent needed by a request retained.
    pub fn chain_for(&self, c: usize) -> Result<ChainConfig> {
        let mut cfg = self.chain.clone();
        cfg.seed = self.seeds()[c];
        cfg.kernel = self.kernel()?;
        for r in &self.functionals.latent_densities {
            if !cfg.retain_latents.contains(&r.observation) {
                cfg.retain_latents.push(r.observation);
            }
        }
        Ok(cfg)
    }

    /// Checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.responses.is_empty() {
            return Err(Error::invalid("at least one response column is required"));
        }
        let mut names: Vec<&str> = self
            .responses
            .iter()
            .chain(&self.ordinal_covariates)
            .map(|c| c.column.as_str())
            .chain(self.covariates.iter().map(String::as_str))
            .collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("column '{}' is listed twice", w[0])));
        }
        if let Some(c) = self.responses.iter().chain(&self.ordinal_covariates).find(|c| c.categories < 2) {
            return Err(Error::invalid(format!("column '{}' needs at least 2 categories", c.column)));
        }
        check_binary_ordering(&self.binary_dims)?;
        if let Some(&b) = self.binary_dims.iter().find(|&&b| b >= self.responses.len() || self.responses[b].categories != 2) {
            return Err(Error::invalid(format!("binary dimension {b} is not a two-category response")));
        }
        self.kernel()?;
        if self.n_chains == 0 {
            return Err(Error::invalid("n_chains must be at least 1"));
        }
        if let Some(s) = &self.seeds {
            if s.len() != self.n_chains {
                return Err(Error::invalid("one seed per chain is required"));
            }
        }
        if self.chain.n_iter <= self.chain.n_burn || self.chain.thin == 0 {
            return Err(Error::invalid("n_iter must exceed n_burn and thin must be at least 1"));
        }
        self.cutoff_grid()?;
        self.validate_requests()
    }

    fn validate_requests(&self) -> Result<()> {
        let (k, p) = (self.k(), self.p());
        let counts = self.category_counts();
        let n_resp = self.responses.len();
        let f = &self.functionals;
        let dim_cat = |j: usize, c: u32, what: &str| -> Result<()> {
            if j >= k {
                return Err(Error::invalid(format!("{what}: dimension {j} out of range for {k} ordinal dimensions")));
            }
            if c < 1 || c > counts[j] {
                return Err(Error::invalid(format!("{what}: category {c} out of range for dimension {j}")));
            }
            Ok(())
        };
        let covariate = |m: usize, what: &str| -> Result<()> {
            if m >= p {
                return Err(Error::invalid(format!("{what}: covariate {m} out of range for {p} covariates")));
            }
            Ok(())
        };
        let pair = |a: usize, b: usize, what: &str| -> Result<()> {
            if k < 2 {
                return Err(Error::invalid(format!("{what} needs at least two ordinal dimensions")));
            }
            if a >= k || b >= k || a == b {
                return Err(Error::invalid(format!("{what}: invalid dimension pair ({a}, {b})")));
            }
            Ok(())
        };
        let needs_grid = !f.curves.is_empty() || !f.inverse_densities.is_empty() || !f.agreement_curves.is_empty();
        if needs_grid && f.grid_points == 0 {
            return Err(Error::invalid("grid_points must be at least 1"));
        }
        if f.mc.n_samples == 0 {
            return Err(Error::invalid("mc.n_samples must be at least 1"));
        }
        let grid = |g: &Option<Vec<f64>>, fixed: Option<&Vec<f64>>, what: &str| -> Result<()> {
            if let Some(g) = g {
                if g.is_empty() || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("{what}: grid must be nonempty and finite")));
                }
            }
            if let Some(x) = fixed {
                if x.len() != p || x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("{what}: fixed covariates need {p} finite values")));
                }
            }
            Ok(())
        };
        for c in &f.curves {
            dim_cat(c.dim, c.category, "curve")?;
            covariate(c.covariate, "curve")?;
            grid(&c.grid, c.fixed.as_ref(), "curve")?;
        }
        for r in &f.inverse_densities {
            if r.event.is_empty() {
                return Err(Error::invalid("inverse density: empty event"));
            }
            for &(j, c) in &r.event {
                dim_cat(j, c, "inverse density")?;
            }
            covariate(r.covariate, "inverse density")?;
            grid(&r.grid, None, "inverse density")?;
        }
        for t in &f.agreement_tables {
            if k < 2 || t.dims.len() < 2 {
                return Err(Error::invalid(format!("agreement table '{}' needs at least two ordinal dimensions", t.name)));
            }
            if t.name.is_empty() || !t.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::invalid("agreement table names must be nonempty and use [A-Za-z0-9_-]"));
            }
            if t.sets.is_empty() || t.sets.iter().any(|(_, c)| c.is_empty()) {
                return Err(Error::invalid(format!("agreement table '{}' needs nonempty category sets", t.name)));
            }
            for &d in &t.dims {
                for (label, cats) in &t.sets {
                    for &c in cats {
                        dim_cat(d, c, &format!("agreement set {label}"))?;
                    }
                }
            }
        }
        for a in &f.agreement_curves {
            pair(a.a, a.b, "agreement curve")?;
            covariate(a.covariate, "agreement curve")?;
            grid(&a.grid, a.fixed.as_ref(), "agreement curve")?;
        }
        for r in &f.polychoric {
            pair(r.a, r.b, "polychoric correlation")?;
            if r.per_snapshot == 0 {
                return Err(Error::invalid("polychoric per_snapshot must be at least 1"));
            }
        }
        for r in &f.latent_densities {
            if r.dim >= k || r.bins == 0 {
                return Err(Error::invalid("latent density: dimension out of range or zero bins"));
            }
        }
        for r in &f.ordinal_covariate_curves {
            dim_cat(r.dim, r.category, "ordinal covariate curve")?;
            if r.covariate_dim < n_resp || r.covariate_dim >= k || r.covariate_dim == r.dim {
                return Err(Error::invalid(format!("dimension {} is not an ordinal covariate", r.covariate_dim)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "data_path": "d.csv",
            "responses": [{"column": "y", "categories": 3}],
            "covariates": ["x"],
            "out_dir": "out"
        })
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(&base().to_string()).unwrap();
        assert_eq!(cfg.n_chains, 1);
        assert_eq!(cfg.cutoffs, CutoffSpec::Unit);
        assert_eq!(cfg.functionals.grid_points, 50);
        assert_eq!(cfg.cutoff_grid().unwrap().interior(0), &[-0.5, 0.5]);
    }

    #[test]
    fn agreement_on_one_dimension_is_rejected() {
        let mut v = base();
        v["functionals"] = serde_json::json!({"agreement_curves": [{"a": 0, "b": 1, "covariate": 0, "mode": "exact"}]});
        let e = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("two ordinal dimensions"), "{e}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = base();
        v["chian"] = serde_json::json!({});
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn binary_dims_select_restricted_kernel() {
        let mut v = base();
        v["responses"] = serde_json::json!([{"column": "b", "categories": 2}, {"column": "y", "categories": 3}]);
        v["binary_dims"] = serde_json::json!([0]);
        let cfg = RunConfig::from_json(&v.to_string()).unwrap();
        assert!(matches!(cfg.kernel().unwrap(), KernelMode::Restricted { ref fixed_delta, .. } if fixed_delta == &[1.0]));
        v["binary_dims"] = serde_json::json!([1]);
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn explicit_cutoffs_must_match_counts() {
        let mut v = base();
        v["cutoffs"] = serde_json::json!({"explicit": [[-1.0, 0.0, 1.0]]});
        assert!(RunConfig::from_json(&v.to_string()).is_err());
        v["cutoffs"] = serde_json::json!({"explicit": [[-20.0, 20.0]]});
        assert!(RunConfig::from_json(&v.to_string()).is_ok());
    }
}
