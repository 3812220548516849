#![no_main]

use cips3d::autodiff::ParamStore;
use cips3d::checkpoint::{decode, encode};
use cips3d::tensor::Scalar;
use libfuzzer_sys::fuzz_target;

fn roundtrip<T: Scalar>(data: &[u8]) {
    let Ok(store) = decode::<T>(data) else { return };
    // anything accepted must re-encode to a file that decodes to the same store
    let bytes = encode(&store).expect("decoded store encodes");
    let again: ParamStore<T> = decode(&bytes).expect("re-encoded checkpoint decodes");
    assert_eq!(store.len(), again.len());
    for (name, p) in store.iter() {
        assert!(p.value.bit_eq(again.value(name)), "{name}");
    }
    assert_eq!(encode(&again).unwrap(), bytes);
}

fuzz_target!(|data: &[u8]| {
    roundtrip::<f32>(data);
    roundtrip::<f64>(data);
});
