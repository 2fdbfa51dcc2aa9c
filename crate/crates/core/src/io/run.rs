//! Run management: chains, persistence, functional export and diagnostics.
//!
//! A run writes into a staging directory next to `out_dir` and moves it into
//! place only when every step succeeded, so failures leave no partial output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::functionals::{
    agreement_prob_curve, agreement_table, default_grid, inverse_covariate_density, latent_score_density,
    marginal_curve, ordinal_covariate_curve, polychoric_draws, CurveAxis, CurveEstimate,
};
use crate::gibbs::{run_chain, DrawStore};
use crate::model::{Dataset, Hyperpriors};
use crate::prior::{default_alpha_prior, derive_hyperpriors, PriorInputs};
use crate::summary::{effective_size, geweke_z, summarize};
use crate::{Error, Result};

use super::codec::{decode_draws, encode_draws, write_draws_csv};
use super::config::RunConfig;
use super::csvload::{load_csv, DataSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// Latent range used for binary dimensions without an override: with unit
/// conditional variance the quarter-range is one standard deviation.
const BINARY_LATENT_RANGE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub seed: u64,
    /// Relative to the run directory.
    pub draws_file: String,
    pub n_snapshots: usize,
    pub alpha_clamp_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: RunConfig,
    pub config_hash: String,
    pub dataset_hash: String,
    pub n_observations: usize,
    pub hyperpriors: Hyperpriors,
    /// Observed `(min, max)` of each covariate, used for default grids.
    pub covariate_bounds: Vec<(f64, f64)>,
    pub chains: Vec<ChainRecord>,
    pub truncation: usize,
    /// `4 n exp(-(N - 1) / alpha)` at the posterior mean of alpha: a bound
    /// on the total-variation error of the truncated prior's data law.
    pub truncation_error_bound: f64,
    /// Every chain checks the state invariants after its final sweep.
    pub invariant_checks: String,
    pub reference_data_check: String,
    /// Curve and table files, relative to the run directory.
    pub outputs: Vec<String>,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub store: DrawStore,
}

/// Hyperpriors from the prior spec, filling unspecified centers and ranges
/// from the data.
pub fn hyperpriors_for(cfg: &RunConfig, data: &Dataset) -> Result<Hyperpriors> {
    let (centers, ranges) = data.covariate_centers_ranges();
    let pr = &cfg.prior;
    let cutoffs = cfg.cutoff_grid()?;
    let latent_ranges = match &pr.latent_ranges {
        Some(v) => v.clone(),
        None => (0..cfg.k())
            .map(|j| cfg.binary_dims.contains(&j).then_some(BINARY_LATENT_RANGE))
            .collect(),
    };
    derive_hyperpriors(&PriorInputs {
        centers: pr.centers.clone().unwrap_or(centers),
        ranges: pr.ranges.clone().unwrap_or(ranges),
        cutoffs,
        variance_split: pr.variance_split,
        alpha_prior: pr.alpha_prior.unwrap_or_else(|| default_alpha_prior(data.n())),
        latent_ranges,
    })
}

fn covariate_bounds(data: &Dataset) -> Vec<(f64, f64)> {
    (0..data.p())
        .map(|m| {
            (0..data.n()).map(|i| data.x_row(i)[m]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn curve_csv(c: &CurveEstimate) -> String {
    let mut s = String::from("grid_value,mean,lo95,hi95\n");
    for (g, sm) in c.grid.iter().zip(&c.summaries) {
        let _ = writeln!(s, "{g},{},{},{}", sm.mean, sm.lo95, sm.hi95);
    }
    s
}

/// Every requested functional as `(relative path, CSV text)`. Deterministic
/// given the store, the requests and the bounds.
pub fn compute_outputs(store: &DrawStore, cfg: &RunConfig, bounds: &[(f64, f64)]) -> Result<Vec<(String, String)>> {
    let f = &cfg.functionals;
    let grid_for = |g: &Option<Vec<f64>>, m: usize| -> Result<Vec<f64>> {
        match g {
            Some(g) => Ok(g.clone()),
            None => {
                let &(lo, hi) = bounds
                    .get(m)
                    .ok_or_else(|| Error::invalid(format!("covariate {m} out of range")))?;
                Ok(default_grid(lo, hi, f.grid_points))
            }
        }
    };
    let mut out = Vec::new();
    for (i, r) in f.curves.iter().enumerate() {
        let axis = CurveAxis {
            covariate: r.covariate,
            values: grid_for(&r.grid, r.covariate)?,
            fixed: r.fixed.clone(),
        };
        let c = marginal_curve(store, r.dim, r.category, &axis)?;
        out.push((format!("curves/curve_{i}_dim{}_cat{}_x{}.csv", r.dim, r.category, r.covariate), curve_csv(&c)));
    }
    for (i, r) in f.inverse_densities.iter().enumerate() {
        let grid = grid_for(&r.grid, r.covariate)?;
        let c = inverse_covariate_density(store, &r.event, r.covariate, &grid, Some(&f.mc))?;
        out.push((format!("curves/inverse_density_{i}_x{}.csv", r.covariate), curve_csv(&c)));
    }
    for (i, r) in f.agreement_curves.iter().enumerate() {
        let axis = CurveAxis {
            covariate: r.covariate,
            values: grid_for(&r.grid, r.covariate)?,
            fixed: r.fixed.clone(),
        };
        let c = agreement_prob_curve(store, r.a, r.b, &axis, r.mode)?;
        let mode = serde_json::to_value(r.mode)?.as_str().unwrap_or("mode").to_string();
        out.push((format!("curves/agreement_{i}_dims{}_{}_{mode}.csv", r.a, r.b), curve_csv(&c)));
    }
    for (i, r) in f.ordinal_covariate_curves.iter().enumerate() {
        let levels: Vec<u32> = (1..=store.meta.cutoffs.category_count(r.covariate_dim)).collect();
        let c = ordinal_covariate_curve(store, r.dim, r.category, r.covariate_dim, &levels)?;
        out.push((
            format!("curves/ordinal_covariate_{i}_dim{}_cat{}_w{}.csv", r.dim, r.category, r.covariate_dim),
            curve_csv(&c),
        ));
    }
    for r in &f.agreement_tables {
        let t = agreement_table(store, &r.dims, &r.sets)?;
        let mut s = String::from("given_dim,given_label,target_dim,target_label,mean,lo95,hi95,flagged\n");
        for c in &t.cells {
            let (g, tg) = (&t.events[c.given], &t.events[c.target]);
            let sm = &c.summary;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                g.dim, g.label, tg.dim, tg.label, sm.mean, sm.lo95, sm.hi95, c.flagged
            );
        }
        out.push((format!("tables/agreement_{}.csv", r.name), s));
    }
    if !f.polychoric.is_empty() {
        let mut s = String::from("a,b,mean,lo95,hi95\n");
        for r in &f.polychoric {
            let sm = summarize(&polychoric_draws(store, r.a, r.b, r.per_snapshot, f.seed)?);
            let _ = writeln!(s, "{},{},{},{},{}", r.a, r.b, sm.mean, sm.lo95, sm.hi95);
        }
        out.push(("tables/polychoric.csv".into(), s));
    }
    for (i, r) in f.latent_densities.iter().enumerate() {
        let ld = latent_score_density(store, r.observation, r.dim, r.bins)?;
        let mut s = String::from("bin_lo,bin_hi,density\n");
        for (b, d) in ld.density.iter().enumerate() {
            let _ = writeln!(s, "{},{},{d}", ld.edges[b], ld.edges[b + 1]);
        }
        out.push((format!("tables/latent_{i}_obs{}_dim{}.csv", r.observation, r.dim), s));
    }
    Ok(out)
}

fn diagnostics(stores: &[DrawStore], seeds: &[u64]) -> serde_json::Value {
    let chains: Vec<serde_json::Value> = stores
        .iter()
        .zip(seeds)
        .map(|(st, &seed)| {
            let mut traces: Vec<(String, Vec<f64>)> = vec![
                ("alpha".into(), st.snapshots.iter().map(|s| s.alpha).collect()),
                ("occupied".into(), st.snapshots.iter().map(|s| s.occupied as f64).collect()),
                (
                    "max_weight".into(),
                    st.snapshots.iter().map(|s| s.weights.iter().copied().fold(0.0, f64::max)).collect(),
                ),
            ];
            let d = st.meta.k + st.meta.p;
            for i in 0..d {
                traces.push((format!("m[{i}]"), st.snapshots.iter().map(|s| s.base.m[i]).collect()));
            }
            let batches = 50.min(st.len() / 2).max(2);
            let ess: serde_json::Map<String, serde_json::Value> = traces
                .iter()
                .map(|(n, t)| (n.clone(), serde_json::json!(effective_size(t, batches))))
                .collect();
            let gz: serde_json::Map<String, serde_json::Value> = traces
                .iter()
                .map(|(n, t)| {
                    let z = geweke_z(t);
                    (n.clone(), if z.is_finite() { serde_json::json!(z) } else { serde_json::Value::Null })
                })
                .collect();
            serde_json::json!({
                "seed": seed,
                "n_snapshots": st.len(),
                "effective_draws": ess,
                "geweke_z": gz,
                "alpha_clamp_count": st.clamp_count,
                "occupied_trace": st.snapshots.iter().map(|s| s.occupied).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({ "chains": chains })
}

fn staging_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "run".into());
    name.push(".partial");
    out.with_file_name(name)
}

fn check_out_dir(out: &Path) -> Result<()> {
    if out.exists() {
        let empty = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_none();
        if !empty && !out.join(MANIFEST_FILE).exists() {
            return Err(Error::invalid(format!(
                "output directory {} is not empty and holds no previous run",
                out.display()
            )));
        }
    }
    Ok(())
}

/// Fits every chain and writes all artifacts to `cfg.out_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let data = load_csv(&cfg.data_path, &DataSpec::from(cfg))?;
    let cutoffs = cfg.cutoff_grid()?;
    let hyper = hyperpriors_for(cfg, &data)?;
    let seeds = cfg.seeds();
    let chain_cfgs = (0..cfg.n_chains).map(|c| cfg.chain_for(c)).collect::<Result<Vec<_>>>()?;
    for cc in &chain_cfgs {
        cc.validate(&data)?;
    }
    check_out_dir(&cfg.out_dir)?;

    let stores: Vec<DrawStore> = std::thread::scope(|scope| {
        let handles: Vec<_> = chain_cfgs
            .iter()
            .map(|cc| scope.spawn(|| run_chain(&data, &cutoffs, &hyper, cc)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Sampler("chain thread panicked".into()))))
            .collect::<Result<Vec<_>>>()
    })?;

    let (manifest, store) = with_staging(&cfg.out_dir, |dir| write_run(cfg, &data, hyper, &seeds, stores, dir))?;
    Ok(RunArtifacts {
        out_dir: cfg.out_dir.clone(),
        manifest,
        store,
    })
}

/// Runs `f` on a fresh staging directory and moves it to `out` on success.
/// On failure the staging directory is removed and `out` is untouched.
fn with_staging<T>(out: &Path, f: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    let staging = staging_path(out);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    match f(&staging) {
        Ok(v) => {
            if out.exists() {
                std::fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
            }
            std::fs::rename(&staging, out).map_err(|e| Error::io(out, e))?;
            Ok(v)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn write_run(
    cfg: &RunConfig,
    data: &Dataset,
    hyper: Hyperpriors,
    seeds: &[u64],
    stores: Vec<DrawStore>,
    dir: &Path,
) -> Result<(Manifest, DrawStore)> {
    let mut chains = Vec::with_capacity(stores.len());
    for (c, st) in stores.iter().enumerate() {
        let rel = format!("draws/chain_{c}/draws.dpmo");
        write_file(&dir.join(&rel), &encode_draws(st)?)?;
        if cfg.draw_format == super::config::DrawFormat::BinaryAndCsv {
            let mut buf = Vec::new();
            write_draws_csv(st, &mut buf)?;
            write_file(&dir.join(format!("draws/chain_{c}/draws.csv")), &buf)?;
        }
        chains.push(ChainRecord {
            seed: seeds[c],
            draws_file: rel,
            n_snapshots: st.len(),
            alpha_clamp_count: st.clamp_count,
        });
    }
    let diag = diagnostics(&stores, seeds);
    write_file(&dir.join(DIAGNOSTICS_FILE), serde_json::to_string_pretty(&diag)?.as_bytes())?;

    let store = DrawStore::merge(stores)?;
    let bounds = covariate_bounds(data);
    let outputs = compute_outputs(&store, cfg, &bounds)?;
    for (rel, text) in &outputs {
        write_file(&dir.join(rel), text.as_bytes())?;
    }
    let alpha_mean = store.snapshots.iter().map(|s| s.alpha).sum::<f64>() / store.len().max(1) as f64;
    let n_trunc = store.meta.truncation;
    let manifest = Manifest {
        format_version: super::codec::FORMAT_VERSION,
        config: cfg.clone(),
        config_hash: cfg.hash()?,
        dataset_hash: store.meta.dataset_hash.clone(),
        n_observations: data.n(),
        hyperpriors: hyper,
        covariate_bounds: bounds,
        chains,
        truncation: n_trunc,
        truncation_error_bound: (4.0 * data.n() as f64 * (-((n_trunc - 1) as f64) / alpha_mean).exp()).min(1.0),
        invariant_checks: "passed".into(),
        reference_data_check: "waived: the multirater reference dataset is not available".into(),
        outputs: outputs.iter().map(|o| o.0.clone()).collect(),
    };
    write_file(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok((manifest, store))
}

/// Reads a run's manifest and merged draws.
pub fn load_draws(dir: &Path) -> Result<(Manifest, DrawStore)> {
    let mpath = dir.join(MANIFEST_FILE);
    if !mpath.is_file() {
        return Err(Error::invalid(format!("no run manifest at {}", mpath.display())));
    }
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let stores = manifest
        .chains
        .iter()
        .map(|c| {
            let p = dir.join(&c.draws_file);
            if !p.is_file() {
                return Err(Error::invalid(format!("missing draws file {}", p.display())));
            }
            decode_draws(&std::fs::read(&p).map_err(|e| Error::io(&p, e))?)
        })
        .collect::<Result<Vec<_>>>()?;
    if stores.is_empty() {
        return Err(Error::invalid("manifest lists no chains"));
    }
    Ok((manifest, DrawStore::merge(stores)?))
}

/// Recomputes every functional of a finished run from its persisted draws,
/// using `cfg` (or the run's own configuration), and rewrites the outputs.
pub fn recompute_functionals(dir: &Path, cfg: Option<&RunConfig>) -> Result<Vec<String>> {
    let (manifest, store) = load_draws(dir)?;
    let cfg = cfg.unwrap_or(&manifest.config);
    cfg.validate()?;
    if cfg.k() != store.meta.k || cfg.p() != store.meta.p {
        return Err(Error::invalid("configuration does not match the stored draws"));
    }
    let outputs = compute_outputs(&store, cfg, &manifest.covariate_bounds)?;
    for sub in ["curves", "tables"] {
        let p = dir.join(sub);
        if p.exists() {
            std::fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    for (rel, text) in &outputs {
        write_file(&dir.join(rel), text.as_bytes())?;
    }
    Ok(outputs.into_iter().map(|o| o.0).collect())
}
