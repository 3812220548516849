#![no_main]

use cips3d_cli::parse_coords;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse_coords(text) {
        assert!(p.iter().all(|v| v.is_finite()));
        let shown = format!("{},{},{}", p[0], p[1], p[2]);
        assert_eq!(parse_coords(&shown), Ok(p));
    }
});
