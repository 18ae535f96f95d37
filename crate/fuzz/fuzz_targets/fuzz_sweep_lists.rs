#![no_main]

use cran_core::experiment::{parse_modes, parse_seeds, parse_values, SweepParam};
use libfuzzer_sys::fuzz_target;

const PARAMS: [SweepParam; 6] =
    [SweepParam::M, SweepParam::N, SweepParam::K, SweepParam::R, SweepParam::Rho, SweepParam::KRiceDb];

// First byte picks the parameter, the rest is the list text.
fuzz_target!(|data: &[u8]| {
    let Some((&sel, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if let Ok(values) = parse_values(PARAMS[sel as usize % PARAMS.len()], text) {
        assert!(!values.is_empty());
        assert!(values.windows(2).all(|w| w[0] < w[1]));
        assert!(values.iter().all(|v| v.is_finite()));
    }
    if let Ok(modes) = parse_modes(text) {
        assert!(!modes.is_empty());
    }
    if let Ok(seeds) = parse_seeds(text) {
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }
    let _ = text.parse::<SweepParam>();
});
