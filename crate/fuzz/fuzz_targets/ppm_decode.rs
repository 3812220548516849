#![no_main]

use cips3d::image::{decode_ppm, encode_ppm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(img) = decode_ppm(data) else { return };
    assert_eq!(img.data.len(), img.width * img.height * 3);
    let again = decode_ppm(&encode_ppm(&img)).expect("encoded image decodes");
    assert_eq!(again, img);
});
