//! Synthetic multilingual benchmarks.
//!
//! Author profiles are rendered into question/answer items for a set of
//! synthetic languages. A language differs from the base language by the
//! fraction of content words it shares verbatim ([`LangSpec::shared_fraction`])
//! and by the order of the four template slots ([`LangSpec::word_order`]);
//! these two knobs are what the typological distance matrices measure.

pub mod distances;
pub mod facts;
pub mod io;
pub mod lang;
pub mod mcq;
pub mod templates;
pub mod vocab;

pub use distances::{synthetic_distances, DistanceKind, DistanceMatrices};
pub use facts::{generate_profiles, generate_real_authors, generate_world_facts, Domain, Fact, FactSet};
pub use lang::{general_corpus, render_language, split_forget_retain, LangSpec, Lexicon};
pub use mcq::{default_stereo_pairs, generate_mcq, StereoPair};
pub use vocab::{TokenizerKind, Vocab};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no template for relation {0:?}")]
    TemplateGap(String),
    #[error("invalid language spec {lang:?}: {reason}")]
    InvalidLangSpec { lang: String, reason: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("cannot tokenize {0:?}: irregular whitespace")]
    Untokenizable(String),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("insufficient distractor pool: {available} candidates for {requested} distractors")]
    InsufficientDistractors { available: usize, requested: usize },
    #[error("invalid example {id:?}: {reason}")]
    InvalidExample { id: String, reason: String },
    #[error("invalid distance matrix: {0}")]
    InvalidDistances(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Forget,
    Retain,
    RealAuthorsAnalog,
    WorldFactsAnalog,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Forget => "forget",
            Split::Retain => "retain",
            Split::RealAuthorsAnalog => "real_authors_analog",
            Split::WorldFactsAnalog => "world_facts_analog",
        }
    }
}

/// One benchmark question with its correct, paraphrased and perturbed answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAExample {
    pub id: String,
    pub language: String,
    pub subject_id: String,
    pub split: Split,
    pub question: String,
    pub answer: String,
    pub paraphrased_answer: String,
    pub perturbed_answers: Vec<String>,
}

impl QAExample {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |reason: &str| {
            Err(CorpusError::InvalidExample {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.id.is_empty() || self.question.is_empty() {
            return bad("id and question must be non-empty");
        }
        if self.answer.is_empty() || self.paraphrased_answer.is_empty() {
            return bad("answer and paraphrased answer must be non-empty");
        }
        if self.perturbed_answers.is_empty() {
            return bad("at least one perturbed answer is required");
        }
        for p in &self.perturbed_answers {
            if p.is_empty() {
                return bad("perturbed answers must be non-empty");
            }
            if *p == self.answer || *p == self.paraphrased_answer {
                return bad("a perturbed answer equals the answer or its paraphrase");
            }
        }
        Ok(())
    }
}

/// A stereotype probe: pick the group an attribute applies to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCQExample {
    pub id: String,
    pub language: String,
    pub question: String,
    pub options: Vec<String>,
    pub stereotype_index: usize,
    pub unknown_index: usize,
}

impl MCQExample {
    /// Checks the structural invariants; `unknown_token` is the language's
    /// rendering of the "unknown" option.
    pub fn validate(&self, unknown_token: Option<&str>) -> Result<(), CorpusError> {
        let bad = |reason: &str| {
            Err(CorpusError::InvalidExample {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        let n = self.options.len();
        if n < 3 {
            return bad("at least three options are required");
        }
        if self.stereotype_index >= n || self.unknown_index >= n || self.stereotype_index == self.unknown_index {
            return bad("stereotype and unknown indices must be distinct and in range");
        }
        if self.options.iter().any(String::is_empty) {
            return bad("options must be non-empty");
        }
        let mut sorted = self.options.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return bad("options must be pairwise distinct");
        }
        if let Some(tok) = unknown_token {
            if self.options[self.unknown_index] != tok {
                return bad("unknown_index does not point at the unknown option");
            }
            if self.options.iter().filter(|o| *o == tok).count() != 1 {
                return bad("exactly one option must be the unknown option");
            }
        }
        Ok(())
    }
}
