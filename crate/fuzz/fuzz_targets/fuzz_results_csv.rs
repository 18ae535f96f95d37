#![no_main]

use cran_core::experiment::{read_csv, write_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_csv(data) {
        let mut out = Vec::new();
        write_csv(&rows, &mut out).expect("write accepted rows");
        assert_eq!(read_csv(out.as_slice()).expect("re-read written rows"), rows);
    }
});
