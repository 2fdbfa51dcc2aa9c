//! `dpmord`: fit, recompute functionals, simulate and self-test.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpmord::io::{recompute_functionals, run, RunConfig};
use dpmord::model::unit_cutoffs;
use dpmord::oracle::{self_test, simulate_dataset, TrueMixture};
use dpmord::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "dpmord", version, about = "Nonparametric multivariate ordinal regression")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the chains and compute every requested functional.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the chain seed; chain c then uses seed + c.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute functionals from the draws of a finished run.
    Functionals {
        /// Run directory holding manifest.json and draws/.
        #[arg(long)]
        out: PathBuf,
        /// Configuration with new functional requests; defaults to the run's own.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a known mixture.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the quick invariant, joint-distribution and oracle suites.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum Truth {
    /// Two crossing components, one response with this many categories.
    Crossing { categories: u32 },
    Mixture(TrueMixture),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    truth: Truth,
    n: usize,
    #[serde(default)]
    seed: Option<u64>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn fit(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.chain.seed = s;
        cfg.seeds = None;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    let art = run(&cfg)?;
    println!(
        "wrote {} snapshots from {} chain(s) and {} output file(s) to {}",
        art.store.len(),
        art.manifest.chains.len(),
        art.manifest.outputs.len(),
        art.out_dir.display()
    );
    Ok(())
}

fn functionals(out: &Path, config: Option<PathBuf>) -> Result<()> {
    let cfg = config.map(|c| RunConfig::load(&c)).transpose()?;
    let files = recompute_functionals(out, cfg.as_ref())?;
    println!("rewrote {} output file(s) in {}", files.len(), out.display());
    Ok(())
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let sc: SimulateConfig = serde_json::from_str(&read(config)?)?;
    let truth = match sc.truth {
        Truth::Crossing { categories } => TrueMixture::crossing(unit_cutoffs(&[categories])?)?,
        Truth::Mixture(t) => t,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.or(sc.seed).unwrap_or(1));
    let (data, _) = simulate_dataset(&truth, sc.n, &mut rng)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let (k, p) = (data.k(), data.p());
    let mut csv = String::new();
    let header: Vec<String> = (1..=k).map(|j| format!("y{j}")).chain((1..=p).map(|m| format!("x{m}"))).collect();
    let _ = writeln!(csv, "{}", header.join(","));
    for i in 0..data.n() {
        let row: Vec<String> = data
            .y_row(i)
            .iter()
            .map(u32::to_string)
            .chain(data.x_row(i).iter().map(f64::to_string))
            .collect();
        let _ = writeln!(csv, "{}", row.join(","));
    }
    write(&out.join("data.csv"), &csv)?;
    write(&out.join("truth.json"), &serde_json::to_string_pretty(&truth)?)?;
    println!("wrote {} rows to {}", data.n(), out.join("data.csv").display());
    Ok(())
}

fn selftest(seed: u64) -> Result<bool> {
    let results = self_test(seed);
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.cmd {
        Cmd::Fit { config, seed, out } => fit(&config, seed, out).map(|_| true),
        Cmd::Functionals { out, config } => functionals(&out, config).map(|_| true),
        Cmd::Simulate { config, seed, out } => simulate(&config, seed, &out).map(|_| true),
        Cmd::Selftest { seed } => selftest(seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
