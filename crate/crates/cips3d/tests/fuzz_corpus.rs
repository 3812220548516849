//! Replays the checked-in fuzz seeds through the decoders with the same
//! round-trip properties the fuzz targets assert.

use std::fs;
use std::path::PathBuf;

use cips3d::autodiff::ParamStore;
use cips3d::checkpoint::{decode, encode};
use cips3d::config::RunConfig;
use cips3d::image::{decode_ppm, encode_ppm};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn checkpoint_seeds() {
    for (name, data) in seeds("checkpoint_decode") {
        let rejected = ["bad_magic", "bad_version", "truncated", "duplicate"].contains(&name.as_str());
        match decode::<f32>(&data) {
            Ok(store) => {
                assert!(!rejected, "{name} should be refused");
                let bytes = encode(&store).unwrap();
                let again: ParamStore<f32> = decode(&bytes).unwrap();
                assert_eq!(encode(&again).unwrap(), bytes, "{name}");
            }
            Err(_) => assert!(rejected || name.ends_with("f64"), "{name} refused"),
        }
    }
}

#[test]
fn config_seeds() {
    for (name, data) in seeds("run_config") {
        let text = String::from_utf8(data).unwrap();
        let rejected = name.starts_with("unknown_key") || name.starts_with("too_many_rays");
        match RunConfig::parse(&text) {
            Ok(cfg) => {
                assert!(!rejected, "{name} should be refused");
                assert_eq!(RunConfig::parse(&cfg.to_json()).unwrap(), cfg, "{name}");
            }
            Err(e) => assert!(rejected, "{name}: {e}"),
        }
    }
}

#[test]
fn ppm_seeds() {
    for (name, data) in seeds("ppm_decode") {
        let rejected = name.starts_with("short_data") || name.starts_with("ascii_p3");
        match decode_ppm(&data) {
            Ok(img) => {
                assert!(!rejected, "{name} should be refused");
                assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img, "{name}");
            }
            Err(e) => assert!(rejected, "{name}: {e}"),
        }
    }
}
