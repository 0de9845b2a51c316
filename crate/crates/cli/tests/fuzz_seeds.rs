//! Replays the checked-in fuzz corpus through the same entry points the fuzz
//! targets call, so the seeds stay valid (or invalid) as labelled.

use std::fs;
use std::path::PathBuf;

use unlearn_core::analysis::{parse_transfer_csv, SetTag};
use unlearn_core::corpus::io::{parse_distance_csv, parse_mcq_jsonl, parse_qa_jsonl};
use unlearn_core::corpus::Vocab;
use unlearn_core::model::decode_checkpoint;
use unlearn_lab::ExperimentConfig;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn check(target: &str, valid: &[&str], parse: impl Fn(&[u8]) -> bool) {
    for (name, bytes) in seeds(target) {
        assert_eq!(parse(&bytes), valid.contains(&name.as_str()), "{target}/{name}");
    }
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn checkpoint_seeds() {
    check("checkpoint_decode", &["tiny.ulck"], |b| decode_checkpoint(b).is_ok());
}

#[test]
fn jsonl_seeds() {
    check("qa_jsonl", &["two_facts.jsonl", "translated.jsonl"], |b| {
        parse_qa_jsonl(text(b)).is_ok()
    });
    check("mcq_jsonl", &["two_items.jsonl"], |b| parse_mcq_jsonl(text(b)).is_ok());
}

#[test]
fn csv_seeds() {
    check("distance_csv", &["syntactic.csv"], |b| {
        parse_distance_csv(text(b)).is_ok()
    });
    check("transfer_csv", &["graddiff_forget.csv"], |b| {
        parse_transfer_csv(text(b), SetTag::Forget, "m").is_ok()
    });
}

#[test]
fn json_seeds() {
    check("vocab_json", &["word.json"], |b| {
        serde_json::from_slice::<Vocab>(b).is_ok()
    });
    check("config_json", &["tiny.json", "three_languages.json"], |b| {
        ExperimentConfig::parse(text(b)).is_ok()
    });
}
