#![no_main]

use libfuzzer_sys::fuzz_target;
use unlearn_core::corpus::Vocab;

fuzz_target!(|data: &[u8]| {
    if let Ok(vocab) = serde_json::from_slice::<Vocab>(data) {
        let _ = vocab.tokenize("the author was born in");
    }
});
