#![no_main]

use libfuzzer_sys::fuzz_target;
use unlearn_core::model::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    // Anything that decodes must re-encode to the same bytes.
    if let Ok(ckpt) = decode_checkpoint(data) {
        let again = encode_checkpoint(&ckpt.model, &ckpt.vocab);
        let back = decode_checkpoint(&again).expect("re-encoded checkpoint decodes");
        assert_eq!(back.vocab, ckpt.vocab);
    }
});
