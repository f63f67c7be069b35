//! Fuzzes the JSONL corpus reader: arbitrary bytes must either parse into a
//! validated corpus or come back as a line-numbered error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 20 {
        return;
    }
    let _ = ngram_oaxe::datagen::read_jsonl_from(std::io::Cursor::new(data));
});
