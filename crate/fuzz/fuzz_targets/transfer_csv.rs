#![no_main]

use libfuzzer_sys::fuzz_target;
use unlearn_core::analysis::{parse_transfer_csv, SetTag};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_transfer_csv(text, SetTag::Forget, "fuzz") {
            for i in 0..m.k() {
                let _ = m.values[i][i];
            }
        }
    }
});
