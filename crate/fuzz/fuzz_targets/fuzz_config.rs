#![no_main]

use cran_core::sysmodel::SystemConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = SystemConfig::parse(text) {
        // anything accepted must survive a render/parse cycle unchanged
        let again = SystemConfig::parse(&cfg.to_config_string()).expect("rendered config rejected");
        assert_eq!(cfg, again);
    }
});
