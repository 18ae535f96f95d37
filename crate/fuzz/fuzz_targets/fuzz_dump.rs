#![no_main]

use cran_core::dump::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(real) = decode(data) {
        // the format has no slack, so a decoded dump re-encodes bit-exactly
        assert_eq!(encode(&real).expect("re-encode"), data);
    }
});
