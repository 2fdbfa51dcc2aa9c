//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets, so that every seed is exercised on stable toolchains.

use std::path::PathBuf;

use dpmord::io::{decode_draws, encode_draws, parse_csv, DataSpec, OrdinalColumn, RunConfig};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn csv_seeds() {
    let spec = DataSpec {
        responses: vec![
            OrdinalColumn { column: "y1".into(), categories: 5 },
            OrdinalColumn { column: "y2".into(), categories: 3 },
        ],
        ordinal_covariates: vec![],
        covariates: vec!["x".into()],
    };
    for (name, bytes) in seeds("parse_csv") {
        let r = parse_csv(bytes.as_slice(), &spec);
        let should_parse = matches!(name.as_str(), "valid.csv" | "reordered.csv");
        assert_eq!(r.is_ok(), should_parse, "{name}: {r:?}");
        if let Err(e) = r {
            assert!(e.is_validation(), "{name}: {e}");
        }
    }
}

#[test]
fn config_seeds() {
    for (name, bytes) in seeds("parse_config") {
        let text = String::from_utf8(bytes).unwrap();
        let r = RunConfig::from_json(&text);
        let should_parse = matches!(name.as_str(), "minimal.json" | "full.json" | "restricted_kernel.json");
        assert_eq!(r.is_ok(), should_parse, "{name}: {r:?}");
        if let Ok(cfg) = r {
            assert_eq!(RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap(), cfg);
        }
    }
}

#[test]
fn draw_seeds() {
    for (name, bytes) in seeds("decode_draws") {
        let r = decode_draws(&bytes);
        assert_eq!(r.is_ok(), name == "small.dpmo", "{name}: {r:?}");
        if let Ok(store) = r {
            let again = encode_draws(&store).unwrap();
            assert_eq!(again, bytes, "re-encoding changes the bytes");
        }
    }
}
