use std::path::Path;

use dpmord::gibbs::{run_chain, ChainConfig, DrawStore};
use dpmord::io::{decode_draws, encode_draws, load_draws, recompute_functionals, run, RunConfig, MANIFEST_FILE};
use dpmord::model::unit_cutoffs;
use dpmord::oracle::{simulate_dataset, TrueMixture};
use dpmord::prior::{default_alpha_prior, derive_hyperpriors, PriorInputs, VarianceSplit};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_store(seed: u64, retain: Vec<usize>) -> DrawStore {
    let truth = TrueMixture::crossing(unit_cutoffs(&[4]).unwrap()).unwrap();
    let (data, _) = simulate_dataset(&truth, 30, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let (centers, ranges) = data.covariate_centers_ranges();
    let hyper = derive_hyperpriors(&PriorInputs {
        centers,
        ranges,
        cutoffs: truth.cutoffs.clone(),
        variance_split: VarianceSplit::Third,
        alpha_prior: default_alpha_prior(data.n()),
        latent_ranges: vec![],
    })
    .unwrap();
    let cfg = ChainConfig {
        truncation: Some(5),
        n_iter: 40,
        n_burn: 10,
        thin: 3,
        seed,
        retain_latents: retain,
        ..ChainConfig::default()
    };
    run_chain(&data, &truth.cutoffs, &hyper, &cfg).unwrap()
}

#[test]
fn codec_round_trip_is_bitwise() {
    let store = small_store(1, vec![0, 7]);
    let bytes = encode_draws(&store).unwrap();
    assert_eq!(&bytes[..4], b"DPMO");
    let back = decode_draws(&bytes).unwrap();
    assert_eq!(back, store);
    assert_eq!(encode_draws(&back).unwrap(), bytes);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corrupted_bytes_never_panic(pos in 0usize..4096, byte in any::<u8>(), cut in 0usize..4096) {
        let bytes = encode_draws(&small_store(2, vec![1])).unwrap();
        let mut b = bytes.clone();
        let i = pos % b.len();
        b[i] = byte;
        let _ = decode_draws(&b);
        let _ = decode_draws(&bytes[..cut % bytes.len()]);
    }
}

fn write_project(dir: &Path, extra: serde_json::Value) -> std::path::PathBuf {
    let truth = TrueMixture::crossing(unit_cutoffs(&[3]).unwrap()).unwrap();
    let (data, _) = simulate_dataset(&truth, 40, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut csv = String::from("x,y\n");
    for i in 0..data.n() {
        csv.push_str(&format!("{},{}\n", data.x_row(i)[0], data.y(i, 0)));
    }
    std::fs::write(dir.join("data.csv"), csv).unwrap();
    let mut cfg = serde_json::json!({
        "data_path": "data.csv",
        "responses": [{"column": "y", "categories": 3}],
        "covariates": ["x"],
        "chain": {"n_iter": 60, "n_burn": 20, "thin": 2},
        "n_chains": 2,
        "functionals": {
            "grid_points": 17,
            "curves": [{"dim": 0, "category": 3, "covariate": 0}],
            "inverse_densities": [{"event": [[0, 1]], "covariate": 0}]
        },
        "out_dir": "run"
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn run_writes_artifacts_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&write_project(tmp.path(), serde_json::json!({}))).unwrap();
    let art = run(&cfg).unwrap();
    let out = tmp.path().join("run");
    assert_eq!(art.out_dir, out);
    assert_eq!(art.store.len(), 2 * 20);
    assert!(out.join("draws/chain_0/draws.dpmo").is_file());
    assert!(out.join("draws/chain_1/draws.dpmo").is_file());
    assert!(out.join("diagnostics.json").is_file());
    let curve = std::fs::read_to_string(out.join("curves/curve_0_dim0_cat3_x0.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("grid_value,mean,lo95,hi95"));
    assert_eq!(lines.count(), 17);
    let manifest = std::fs::read(out.join(MANIFEST_FILE)).unwrap();
    let inverse = std::fs::read(out.join("curves/inverse_density_0_x0.csv")).unwrap();

    run(&cfg).unwrap();
    assert_eq!(std::fs::read(out.join(MANIFEST_FILE)).unwrap(), manifest);
    assert_eq!(std::fs::read_to_string(out.join("curves/curve_0_dim0_cat3_x0.csv")).unwrap(), curve);

    recompute_functionals(&out, None).unwrap();
    assert_eq!(std::fs::read_to_string(out.join("curves/curve_0_dim0_cat3_x0.csv")).unwrap(), curve);
    assert_eq!(std::fs::read(out.join("curves/inverse_density_0_x0.csv")).unwrap(), inverse);

    let (m, store) = load_draws(&out).unwrap();
    assert_eq!(store, art.store);
    assert_eq!(m.chains.len(), 2);
    assert!(m.truncation_error_bound >= 0.0 && m.truncation_error_bound <= 1.0);
}

#[test]
fn data_dependent_request_error_leaves_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    // The latent density request names an observation that does not exist;
    // this is only detectable once the data are loaded.
    let path = write_project(
        tmp.path(),
        serde_json::json!({"functionals": {"latent_densities": [{"observation": 400, "dim": 0}]}}),
    );
    let cfg = RunConfig::load(&path).unwrap();
    let e = run(&cfg).unwrap_err();
    assert!(e.is_validation(), "{e}");
    assert!(!tmp.path().join("run").exists());
    assert!(!tmp.path().join("run.partial").exists());
}

#[test]
fn missing_data_column_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_project(tmp.path(), serde_json::json!({"covariates": ["age"]}));
    let e = run(&RunConfig::load(&path).unwrap()).unwrap_err();
    assert!(e.to_string().contains("'age'"), "{e}");
}

#[test]
fn refuses_to_overwrite_unrelated_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&write_project(tmp.path(), serde_json::json!({}))).unwrap();
    std::fs::create_dir(tmp.path().join("run")).unwrap();
    std::fs::write(tmp.path().join("run/notes.txt"), "keep").unwrap();
    assert!(run(&cfg).is_err());
    assert_eq!(std::fs::read_to_string(tmp.path().join("run/notes.txt")).unwrap(), "keep");
}

#[test]
fn agreement_outputs_for_two_raters() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,x\n");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    use rand::Rng;
    for _ in 0..50 {
        let x: f64 = rng.random_range(0.0..4.0);
        let a = 1 + (x as u32).min(3);
        let b = (a + rng.random_range(0..2)).min(4);
        csv.push_str(&format!("{a},{b},{x}\n"));
    }
    std::fs::write(tmp.path().join("data.csv"), csv).unwrap();
    let cfg = serde_json::json!({
        "data_path": "data.csv",
        "responses": [{"column": "a", "categories": 4}, {"column": "b", "categories": 4}],
        "covariates": ["x"],
        "chain": {"n_iter": 40, "n_burn": 10, "thin": 2},
        "functionals": {
            "grid_points": 5,
            "agreement_tables": [{"name": "ab", "dims": [0, 1], "sets": [["L", [1, 2]], ["H", [3, 4]]]}],
            "agreement_curves": [{"a": 0, "b": 1, "covariate": 0, "mode": "exact"}],
            "polychoric": [{"a": 0, "b": 1, "per_snapshot": 2}]
        },
        "out_dir": "run"
    });
    let path = tmp.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    run(&RunConfig::load(&path).unwrap()).unwrap();
    let table = std::fs::read_to_string(tmp.path().join("run/tables/agreement_ab.csv")).unwrap();
    // 4 events on 2 dimensions: each event conditions on the 2 events of the other dimension
    assert_eq!(table.lines().count(), 1 + 8);
    let poly = std::fs::read_to_string(tmp.path().join("run/tables/polychoric.csv")).unwrap();
    assert_eq!(poly.lines().count(), 2);
    assert!(tmp.path().join("run/curves/agreement_0_dims0_1_exact.csv").is_file());
}
