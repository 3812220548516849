#![no_main]

use cips3d::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = RunConfig::parse(text) else { return };
    let json = cfg.to_json();
    let again = RunConfig::parse(&json).expect("snapshot of an accepted config parses");
    assert_eq!(again, cfg);
});
