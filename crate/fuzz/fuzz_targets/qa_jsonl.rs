#![no_main]

use libfuzzer_sys::fuzz_target;
use unlearn_core::corpus::io::parse_qa_jsonl;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_qa_jsonl(text);
    }
});
