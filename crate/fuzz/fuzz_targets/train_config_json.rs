//! Fuzzes the `--config` JSON override parser.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 18 {
        return;
    }
    if let Ok(overrides) = ngram_oaxe::model::TrainOverrides::from_slice(data) {
        let mut config = ngram_oaxe::model::TrainConfig::default();
        overrides.apply(&mut config);
        let _ = config.validate();
    }
});
