#![no_main]

use dpmord::io::{parse_csv, DataSpec, OrdinalColumn};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let spec = DataSpec {
        responses: vec![
            OrdinalColumn { column: "y1".into(), categories: 5 },
            OrdinalColumn { column: "y2".into(), categories: 3 },
        ],
        ordinal_covariates: vec![],
        covariates: vec!["x".into()],
    };
    // Any input must yield a dataset or an error, never a panic.
    if let Ok(d) = parse_csv(data, &spec) {
        assert_eq!(d.k(), 2);
        assert_eq!(d.p(), 1);
    }
});
