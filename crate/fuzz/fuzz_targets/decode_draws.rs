#![no_main]

use dpmord::io::{decode_draws, encode_draws};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = decode_draws(data) {
        // Whatever decodes must re-encode to a stable byte form.
        let bytes = encode_draws(&store).expect("decoded stores encode");
        let again = decode_draws(&bytes).expect("encoded stores decode");
        assert_eq!(encode_draws(&again).unwrap(), bytes);
    }
});
