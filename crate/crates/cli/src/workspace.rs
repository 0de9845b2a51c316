//! Fixed on-disk layout of an experiment workspace.
//!
//! ```text
//! data/         qa.{lang}.jsonl  mcq.{lang}.jsonl  general.{lang}.txt  vocab.json  distances/*.csv
//! checkpoints/  finetuned.ulck  retain_baseline.ulck  unlearned.{method}.{lang}.ulck  (+ .history.csv)
//! metrics/      {model}/{lang}.{dataset}.json  {model}/{lang}.{set}.examples.csv
//! analysis/     transfer.{method}.{set}.csv  report.json
//! report/       summary.md  table2.csv  table3.csv  mcq.csv  heatmap.{method}.{set}.csv
//! manifests/    {stage}.json
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub const FINETUNED: &str = "finetuned";
pub const RETAIN_BASELINE: &str = "retain_baseline";

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path of a workspace-relative path.
    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn qa(lang: &str) -> String {
        format!("data/qa.{lang}.jsonl")
    }

    pub fn mcq(lang: &str) -> String {
        format!("data/mcq.{lang}.jsonl")
    }

    pub fn general(lang: &str) -> String {
        format!("data/general.{lang}.txt")
    }

    pub fn vocab() -> String {
        "data/vocab.json".into()
    }

    pub fn distance_dir() -> String {
        "data/distances".into()
    }

    pub fn unlearned_id(method: &str, lang: &str) -> String {
        format!("unlearned.{method}.{lang}")
    }

    pub fn checkpoint(model_id: &str) -> String {
        format!("checkpoints/{model_id}.ulck")
    }

    pub fn history(model_id: &str) -> String {
        format!("checkpoints/{model_id}.history.csv")
    }

    pub fn metric(model_id: &str, lang: &str, dataset: &str) -> String {
        format!("metrics/{model_id}/{lang}.{dataset}.json")
    }

    pub fn examples(model_id: &str, lang: &str, dataset: &str) -> String {
        format!("metrics/{model_id}/{lang}.{dataset}.examples.csv")
    }

    pub fn transfer(method: &str, set: &str) -> String {
        format!("analysis/transfer.{method}.{set}.csv")
    }

    pub fn analysis_report() -> String {
        "analysis/report.json".into()
    }

    pub fn manifest(stage: &str) -> String {
        format!("manifests/{stage}.json")
    }

    pub fn read_to_string(&self, rel: &str) -> Result<String, CliError> {
        let p = self.path(rel);
        fs::read_to_string(&p).map_err(|e| CliError::io(p, e))
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).is_file()
    }

    /// Writes through a temporary sibling, creating parent directories.
    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(rel);
        write_atomic(&p, bytes)
    }

    pub fn ensure_parent(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        Ok(p)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let io = |e| CliError::io(path, e);
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}
