#![no_main]

use libfuzzer_sys::fuzz_target;
use unlearn_core::corpus::io::parse_distance_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_distance_csv(text) {
            assert!(m.values.iter().all(|row| row.len() == m.languages.len()));
        }
    }
});
