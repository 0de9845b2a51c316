//! Unlearning objectives and the seeded training loops.
//!
//! All objectives are built on the autodiff tape from three batches of
//! scored sequences: a forget batch, a retain batch and a batch for the KL
//! anchor. Concept unlearning reuses the same slots: questions paired with
//! their stereotyped answer fill the forget slot, the same questions paired
//! with the "unknown" option fill the retain slot, and general-corpus
//! sentences anchor the KL term.

mod loss;
mod optim;
mod train;

pub use loss::{
    cross_entropy, kl_to_reference, npo_loss, npo_loss_sigmoid_form, record_cross_entropy, record_kl, record_npo,
    record_unlearn_loss, unlearn_loss, unlearn_loss_and_grad, value_and_grad, Batches, LossComponents,
};
pub use optim::Adam;
pub use train::{run_finetune, run_unlearn, TrainHistory, TrainRecord, UnlearnData};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelError};
use crate::tensor::TensorError;

/// Learning rates used for 8B-parameter models; far too small for the
/// desk-scale defaults but kept for runs on ingested large models.
pub const LARGE_MODEL_FINETUNE_LR: f64 = 2e-5;
pub const LARGE_MODEL_UNLEARN_LR: f64 = 5e-6;

#[derive(Debug, Error)]
pub enum UnlearnError {
    #[error("objective {0:?} needs a reference model")]
    MissingReference(Objective),
    #[error("the reference model must be frozen")]
    ReferenceNotFrozen,
    #[error("vocabulary mismatch: model has {model} tokens, reference has {reference}")]
    VocabMismatch { model: usize, reference: usize },
    #[error("{0} batch is empty")]
    EmptyBatch(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("cannot train a frozen model")]
    Frozen,
    #[error("non-finite loss or parameters at step {step}")]
    Diverged {
        step: usize,
        last_good: Box<Model<f32>>,
        history: TrainHistory,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl UnlearnError {
    /// True for failures caused by the numbers themselves (overflow, log of a
    /// non-positive value) rather than by bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            UnlearnError::Tensor(TensorError::NonFinite { .. } | TensorError::Domain { .. })
                | UnlearnError::Model(ModelError::Tensor(
                    TensorError::NonFinite { .. } | TensorError::Domain { .. }
                ))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Ascend forget CE, descend retain CE.
    Graddiff,
    /// Graddiff plus a KL anchor to the reference model.
    GraddiffKl,
    /// Negative preference optimization on the forget set.
    Npo,
    /// Penalize stereotyped answers, reward "unknown", anchor on general text.
    Concept,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Graddiff => "graddiff",
            Objective::GraddiffKl => "graddiff_kl",
            Objective::Npo => "npo",
            Objective::Concept => "concept",
        }
    }

    pub fn needs_reference(self) -> bool {
        !matches!(self, Objective::Graddiff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDataset {
    Retain,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlearnConfig {
    pub objective: Objective,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub beta: f64,
    pub learning_rate: f64,
    /// Defaults to 5 for data unlearning and 1 for concept unlearning.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    /// Defaults to the retain set for data unlearning and the general corpus
    /// for concept unlearning.
    pub kl_dataset: Option<KlDataset>,
    /// Adds `alpha2 * CE(retain)` to the NPO objective.
    pub npo_retain: bool,
    pub seed: u64,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        Self::new(Objective::Graddiff)
    }
}

impl UnlearnConfig {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
            beta: 1.0,
            learning_rate: 1e-3,
            epochs: None,
            batch_size: 8,
            kl_dataset: None,
            npo_retain: false,
            seed: 0,
        }
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(match self.objective {
            Objective::Concept => 1,
            _ => 5,
        })
    }

    pub fn kl_source(&self) -> KlDataset {
        self.kl_dataset.unwrap_or(match self.objective {
            Objective::Concept => KlDataset::General,
            _ => KlDataset::Retain,
        })
    }

    pub fn uses_retain(&self) -> bool {
        !matches!(self.objective, Objective::Npo) || self.npo_retain
    }

    pub fn uses_kl(&self) -> bool {
        matches!(self.objective, Objective::GraddiffKl | Objective::Concept)
    }

    pub fn validate(&self) -> Result<(), UnlearnError> {
        let bad = |m: &str| Err(UnlearnError::InvalidConfig(m.to_string()));
        if [self.alpha1, self.alpha2, self.alpha3]
            .iter()
            .any(|a| !(*a >= 0.0 && a.is_finite()))
        {
            return bad("alpha weights must be finite and non-negative");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            epochs: 20,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<(), UnlearnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(UnlearnError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(UnlearnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}
