#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn lang(id: &str, lexicon_seed: u64, shared: f64, order: [usize; 4]) -> Value {
    json!({"lang_id": id, "lexicon_seed": lexicon_seed, "shared_fraction": shared, "word_order": order})
}

/// Three languages, a one-layer 16-wide model, a few seconds end to end.
pub fn smoke_config(workspace: &Path) -> Value {
    json!({
        "workspace": workspace,
        "seed": 3,
        "languages": [
            lang("en", 0, 1.0, [0, 1, 2, 3]),
            lang("aa", 11, 0.5, [1, 0, 2, 3]),
            lang("bb", 12, 0.2, [3, 2, 1, 0]),
        ],
        "data": {"n_profiles": 10, "facts_per_profile": 3, "n_real_authors": 4, "n_world_countries": 4,
                 "n_mcq": 12, "n_general": 10},
        "model": {"embed_dim": 16, "n_layers": 1, "n_heads": 1, "ff_mult": 2},
        "finetune": {"epochs": 3},
        "methods": [
            {"objective": "graddiff", "epochs": 1},
            {"objective": "graddiff_kl", "epochs": 1},
            {"objective": "npo", "epochs": 1},
            {"objective": "concept", "epochs": 1}
        ]
    })
}

pub fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    path
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unlearn-lab"))
        .args(args)
        .output()
        .unwrap()
}

/// Relative path -> bytes of every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Stage -> artifact digests, read from the manifests.
pub fn manifest_digests(root: &Path) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(root.join("manifests")).unwrap() {
        let p = entry.unwrap().path();
        let m: Value = serde_json::from_slice(&fs::read(&p).unwrap()).unwrap();
        out.insert(m["stage"].as_str().unwrap().to_string(), m["artifacts"].clone());
    }
    out
}
