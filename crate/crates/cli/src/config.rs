//! Experiment configuration: one JSON document describing the data, the
//! model, the finetuning run and the unlearning methods.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use unlearn_core::analysis::Aggregation;
use unlearn_core::corpus::{LangSpec, TokenizerKind};
use unlearn_core::unlearn::{FinetuneConfig, KlDataset, Objective, UnlearnConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_workspace")]
    pub workspace: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Synthetic languages; the first is the base language. Ignored when
    /// `ingest` is set.
    #[serde(default)]
    pub languages: Vec<LangSpec>,
    #[serde(default)]
    pub ingest: Option<IngestConfig>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelShape,
    #[serde(default)]
    pub finetune: FinetuneSettings,
    pub methods: Vec<MethodConfig>,
    /// Languages to unlearn in; all languages when absent.
    #[serde(default)]
    pub unlearn_languages: Option<Vec<String>>,
    /// Pool every language's retain set for the retain term.
    #[serde(default)]
    pub retain_all_languages: bool,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub distances: DistanceSource,
    #[serde(default)]
    pub aggregation: Aggregation,
}

fn default_workspace() -> PathBuf {
    PathBuf::from("workspace")
}

fn default_jobs() -> usize {
    1
}

/// Pre-translated data: `{dir}/{lang}.qa.jsonl` with splits already
/// assigned, plus optional `{lang}.mcq.jsonl` and `{lang}.general.txt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub dir: PathBuf,
    pub languages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_profiles: usize,
    pub facts_per_profile: usize,
    pub forget_fraction: f64,
    pub n_real_authors: usize,
    pub real_facts_per_author: usize,
    pub n_world_countries: usize,
    pub n_perturbed: usize,
    pub n_mcq: usize,
    pub n_distractors: usize,
    pub n_general: usize,
    pub tokenizer: TokenizerKind,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_profiles: 40,
            facts_per_profile: 5,
            forget_fraction: 0.1,
            n_real_authors: 10,
            real_facts_per_author: 3,
            n_world_countries: 10,
            n_perturbed: 3,
            n_mcq: 60,
            n_distractors: 2,
            n_general: 40,
            tokenizer: TokenizerKind::Word,
        }
    }
}

/// Architecture; the vocabulary size comes from the generated data and the
/// context length defaults to the longest training sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_mult: usize,
    pub context_len: Option<usize>,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            n_layers: 2,
            n_heads: 1,
            ff_mult: 4,
            context_len: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Also train the retain-only baseline.
    pub retain_baseline: bool,
}

impl Default for FinetuneSettings {
    fn default() -> Self {
        let d = FinetuneConfig::default();
        Self {
            learning_rate: d.learning_rate,
            epochs: 30,
            batch_size: d.batch_size,
            retain_baseline: true,
        }
    }
}

impl FinetuneSettings {
    pub fn with_seed(&self, seed: u64) -> FinetuneConfig {
        FinetuneConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

/// One unlearning method. `name` defaults to the objective and must be
/// unique; it appears in every file name the method produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub objective: Objective,
    #[serde(default = "one")]
    pub alpha1: f64,
    #[serde(default = "one")]
    pub alpha2: f64,
    #[serde(default = "one")]
    pub alpha3: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "default_unlearn_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default = "default_unlearn_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub kl_dataset: Option<KlDataset>,
    #[serde(default)]
    pub npo_retain: bool,
}

fn one() -> f64 {
    1.0
}

fn default_unlearn_lr() -> f64 {
    UnlearnConfig::default().learning_rate
}

fn default_unlearn_batch() -> usize {
    UnlearnConfig::default().batch_size
}

impl MethodConfig {
    pub fn new(objective: Objective) -> Self {
        let d = UnlearnConfig::new(objective);
        Self {
            name: None,
            objective,
            alpha1: d.alpha1,
            alpha2: d.alpha2,
            alpha3: d.alpha3,
            beta: d.beta,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            kl_dataset: d.kl_dataset,
            npo_retain: d.npo_retain,
        }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.objective.as_str())
    }

    pub fn with_seed(&self, seed: u64) -> UnlearnConfig {
        UnlearnConfig {
            objective: self.objective,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            beta: self.beta,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            kl_dataset: self.kl_dataset,
            npo_retain: self.npo_retain,
            seed,
        }
    }

    pub fn is_concept(&self) -> bool {
        self.objective == Objective::Concept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalDataset {
    Forget,
    Retain,
    RealAuthorsAnalog,
    WorldFactsAnalog,
    Mcq,
    General,
}

impl EvalDataset {
    pub const ALL: [EvalDataset; 6] = [
        EvalDataset::Forget,
        EvalDataset::Retain,
        EvalDataset::RealAuthorsAnalog,
        EvalDataset::WorldFactsAnalog,
        EvalDataset::Mcq,
        EvalDataset::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalDataset::Forget => "forget",
            EvalDataset::Retain => "retain",
            EvalDataset::RealAuthorsAnalog => "real_authors_analog",
            EvalDataset::WorldFactsAnalog => "world_facts_analog",
            EvalDataset::Mcq => "mcq",
            EvalDataset::General => "general",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub datasets: Vec<EvalDataset>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            datasets: EvalDataset::ALL.to_vec(),
        }
    }
}

impl EvalConfig {
    pub fn wants(&self, d: EvalDataset) -> bool {
        self.datasets.contains(&d)
    }

    /// Utility needs the retain set and both analog sets.
    pub fn wants_utility(&self) -> bool {
        self.wants(EvalDataset::Retain)
            && self.wants(EvalDataset::RealAuthorsAnalog)
            && self.wants(EvalDataset::WorldFactsAnalog)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTag {
    Synthetic,
}

/// `"synthetic"` or `{"dir": path}` holding URIEL-style CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistanceSource {
    Synthetic(SyntheticTag),
    Dir { dir: PathBuf },
}

impl Default for DistanceSource {
    fn default() -> Self {
        DistanceSource::Synthetic(SyntheticTag::Synthetic)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn language_ids(&self) -> Vec<String> {
        match &self.ingest {
            Some(i) => i.languages.clone(),
            None => self.languages.iter().map(|l| l.lang_id.clone()).collect(),
        }
    }

    pub fn unlearn_language_ids(&self) -> Vec<String> {
        self.unlearn_languages.clone().unwrap_or_else(|| self.language_ids())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let langs = self.language_ids();
        if langs.is_empty() {
            return bad("at least one language is required".into());
        }
        let unique: BTreeSet<&String> = langs.iter().collect();
        if unique.len() != langs.len() {
            return bad("language ids must be unique".into());
        }
        if self.ingest.is_none() {
            for l in &self.languages {
                l.validate().map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        for l in &langs {
            let ok = !l.is_empty() && l.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return bad(format!("language id {l:?} must be ASCII alphanumerics, '_' or '-'"));
            }
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        let d = &self.data;
        if !(d.forget_fraction > 0.0 && d.forget_fraction < 1.0) {
            return bad("data.forget_fraction must lie in (0, 1)".into());
        }
        if d.n_profiles == 0 || d.facts_per_profile == 0 || d.n_perturbed == 0 {
            return bad("data.n_profiles, facts_per_profile and n_perturbed must be positive".into());
        }
        let m = &self.model;
        if m.embed_dim == 0 || m.n_layers == 0 || m.n_heads == 0 || m.ff_mult == 0 || m.embed_dim % m.n_heads != 0 {
            return bad("model dimensions must be positive and embed_dim divisible by n_heads".into());
        }
        let f = &self.finetune;
        if !(f.learning_rate > 0.0) || f.batch_size == 0 {
            return bad("finetune.learning_rate and batch_size must be positive".into());
        }
        let mut names = BTreeSet::new();
        for method in &self.methods {
            let name = method.name();
            let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return bad(format!("method name {name:?} must be ASCII alphanumerics, '_' or '-'"));
            }
            if !names.insert(name.to_string()) {
                return bad(format!("duplicate method name {name:?}"));
            }
            method
                .with_seed(0)
                .validate()
                .map_err(|e| CliError::Config(format!("method {name}: {e}")))?;
        }
        for l in self.unlearn_language_ids() {
            if !langs.contains(&l) {
                return bad(format!("unlearn language {l:?} is not a configured language"));
            }
        }
        Ok(())
    }

    /// Digest of everything that determines artifact contents. The workspace
    /// location and the job count do not.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workspace = PathBuf::new();
        c.jobs = 1;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// JSON schema of the configuration file, printed by `--print-schema`.
pub fn schema() -> serde_json::Value {
    let num = |d: &str| json!({"type": "number", "description": d});
    let int = |d: &str| json!({"type": "integer", "minimum": 0, "description": d});
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "unlearn-lab experiment",
        "type": "object",
        "additionalProperties": false,
        "required": ["methods"],
        "properties": {
            "workspace": {"type": "string", "default": "workspace", "description": "output directory (overridden by --out)"},
            "seed": int("global seed; every stage seed is derived from it (overridden by --seed)"),
            "jobs": {"type": "integer", "minimum": 1, "default": 1, "description": "concurrent unlearning/evaluation jobs (overridden by --jobs)"},
            "languages": {
                "type": "array",
                "description": "synthetic languages; the first is the base language",
                "items": {
                    "type": "object",
                    "additionalProperties": false,
                    "required": ["lang_id", "lexicon_seed", "shared_fraction", "word_order"],
                    "properties": {
                        "lang_id": {"type": "string", "pattern": "^[A-Za-z0-9_-]+$"},
                        "lexicon_seed": int("seed of the pseudo-word lexicon"),
                        "shared_fraction": {"type": "number", "minimum": 0, "maximum": 1, "description": "fraction of content words kept from the base language"},
                        "word_order": {"type": "array", "items": {"type": "integer"}, "minItems": 4, "maxItems": 4, "description": "permutation of the four template slots"},
                        "script_offset": int("code-point shift of non-shared words")
                    }
                }
            },
            "ingest": {
                "type": "object",
                "additionalProperties": false,
                "required": ["dir", "languages"],
                "description": "read {dir}/{lang}.qa.jsonl (+ optional .mcq.jsonl, .general.txt) instead of generating",
                "properties": {
                    "dir": {"type": "string"},
                    "languages": {"type": "array", "items": {"type": "string"}}
                }
            },
            "data": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "n_profiles": int("fictitious author profiles (default 40)"),
                    "facts_per_profile": int("QA pairs per profile (default 5)"),
                    "forget_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.1},
                    "n_real_authors": int("real-authors analog profiles (default 10)"),
                    "real_facts_per_author": int("default 3"),
                    "n_world_countries": int("world-facts analog countries (default 10)"),
                    "n_perturbed": int("perturbed answers per question (default 3)"),
                    "n_mcq": int("stereotype questions per language (default 60)"),
                    "n_distractors": int("non-stereotype identities per question (default 2)"),
                    "n_general": int("general-corpus sentences per language (default 40)"),
                    "tokenizer": {"enum": ["word", "char"], "default": "word"}
                }
            },
            "model": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "embed_dim": int("default 64"),
                    "n_layers": int("default 2"),
                    "n_heads": int("default 1"),
                    "ff_mult": int("default 4"),
                    "context_len": {"type": ["integer", "null"], "description": "defaults to the longest sequence"}
                }
            },
            "finetune": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "learning_rate": num("default 3e-3"),
                    "epochs": int("default 30"),
                    "batch_size": int("default 16"),
                    "retain_baseline": {"type": "boolean", "default": true}
                }
            },
            "methods": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": false,
                    "required": ["objective"],
                    "properties": {
                        "name": {"type": "string", "description": "defaults to the objective"},
                        "objective": {"enum": ["graddiff", "graddiff_kl", "npo", "concept"]},
                        "alpha1": num("forget / biased-answer weight (default 1)"),
                        "alpha2": num("retain / unknown-answer weight (default 1)"),
                        "alpha3": num("KL weight (default 1)"),
                        "beta": num("NPO inverse temperature (default 1)"),
                        "learning_rate": num("default 1e-3"),
                        "epochs": {"type": ["integer", "null"], "description": "default 5, or 1 for concept"},
                        "batch_size": int("default 8"),
                        "kl_dataset": {"enum": ["retain", "general", null]},
                        "npo_retain": {"type": "boolean", "default": false}
                    }
                }
            },
            "unlearn_languages": {"type": ["array", "null"], "items": {"type": "string"}},
            "retain_all_languages": {"type": "boolean", "default": false},
            "eval": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "datasets": {"type": "array", "items": {"enum": ["forget", "retain", "real_authors_analog", "world_facts_analog", "mcq", "general"]}}
                }
            },
            "distances": {
                "oneOf": [
                    {"const": "synthetic"},
                    {"type": "object", "additionalProperties": false, "required": ["dir"], "properties": {"dir": {"type": "string"}}}
                ]
            },
            "aggregation": {"enum": ["ratio_of_means", "mean_of_ratios"], "default": "ratio_of_means"}
        }
    })
}
