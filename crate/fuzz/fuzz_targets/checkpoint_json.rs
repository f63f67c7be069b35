//! Fuzzes checkpoint deserialization: shape validation has to reject every
//! inconsistent file without panicking or overflowing.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 20 {
        return;
    }
    let _ = ngram_oaxe::model::Checkpoint::from_slice(data);
});
