//! Evaluation metrics: length-normalized answer probability, truth ratio,
//! model utility, perplexity and multiple-choice selection rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, MCQExample, QAExample, Vocab};
use crate::encode::{option_seqs, qa_seq};
use crate::model::{Model, ModelError, ScoredSeq};
use crate::tensor::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("example {0:?} has no perturbed answers")]
    MissingPerturbations(String),
    #[error("model utility needs exactly three dataset summaries, got {0}")]
    SummaryCount(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Per-dataset means of the per-example metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub dataset: String,
    pub n_examples: usize,
    pub mean_normalized_prob: f64,
    pub mean_truth_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub n_questions: usize,
    pub biased_rate: f64,
    pub unknown_rate: f64,
    pub other_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleMetrics {
    pub normalized_prob: f64,
    pub truth_ratio: f64,
}

/// `exp(mean log-probability)` of the scored tokens, i.e. `P^(1/|a|)`.
fn normalized(per_token: &[f64]) -> f64 {
    (per_token.iter().sum::<f64>() / per_token.len() as f64).exp()
}

/// `P(answer | question)^(1/|answer|)`.
pub fn normalized_probability<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    question: &str,
    answer: &str,
) -> Result<f64, EvalError> {
    let seq = qa_seq(vocab, question, answer)?;
    Ok(normalized(&model.score_sequences(std::slice::from_ref(&seq))?[0]))
}

/// Mean normalized probability of the perturbed answers divided by that of
/// the paraphrased answer.
pub fn truth_ratio<T: Scalar>(model: &Model<T>, vocab: &Vocab, qa: &QAExample) -> Result<f64, EvalError> {
    Ok(example_metrics(model, vocab, std::slice::from_ref(qa))?[0].truth_ratio)
}

fn ratio_from(probs: &[f64]) -> f64 {
    // probs = [answer, paraphrase, perturbed...]
    let pert = &probs[2..];
    let mean_pert = pert.iter().sum::<f64>() / pert.len() as f64;
    mean_pert / probs[1]
}

/// Normalized probability and truth ratio of every example, scoring all
/// answers in one pass.
pub fn example_metrics<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    dataset: &[QAExample],
) -> Result<Vec<ExampleMetrics>, EvalError> {
    let mut seqs: Vec<ScoredSeq> = Vec::new();
    let mut spans = Vec::with_capacity(dataset.len());
    for ex in dataset {
        if ex.perturbed_answers.is_empty() {
            return Err(EvalError::MissingPerturbations(ex.id.clone()));
        }
        let start = seqs.len();
        seqs.push(qa_seq(vocab, &ex.question, &ex.answer)?);
        seqs.push(qa_seq(vocab, &ex.question, &ex.paraphrased_answer)?);
        for p in &ex.perturbed_answers {
            seqs.push(qa_seq(vocab, &ex.question, p)?);
        }
        spans.push(start..seqs.len());
    }
    let scores = model.score_sequences(&seqs)?;
    let probs: Vec<f64> = scores.iter().map(|s| normalized(s)).collect();
    Ok(spans
        .into_iter()
        .map(|r| {
            let p = &probs[r];
            ExampleMetrics {
                normalized_prob: p[0],
                truth_ratio: ratio_from(p),
            }
        })
        .collect())
}

/// Mean normalized probability over the correct answers only.
pub fn mean_answer_probability<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    dataset: &[QAExample],
) -> Result<f64, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Empty("dataset"));
    }
    Ok(answer_probabilities(model, vocab, dataset)?.iter().sum::<f64>() / dataset.len() as f64)
}

/// Normalized probability of each example's correct answer.
pub fn answer_probabilities<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    dataset: &[QAExample],
) -> Result<Vec<f64>, EvalError> {
    let seqs = dataset
        .iter()
        .map(|e| qa_seq(vocab, &e.question, &e.answer))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(model.score_sequences(&seqs)?.iter().map(|s| normalized(s)).collect())
}

pub fn dataset_metrics<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    dataset: &[QAExample],
    tag: &str,
) -> Result<MetricSummary, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Empty("dataset"));
    }
    let m = example_metrics(model, vocab, dataset)?;
    let n = m.len() as f64;
    Ok(MetricSummary {
        dataset: tag.to_string(),
        n_examples: m.len(),
        mean_normalized_prob: m.iter().map(|x| x.normalized_prob).sum::<f64>() / n,
        mean_truth_ratio: m.iter().map(|x| x.truth_ratio).sum::<f64>() / n,
    })
}

/// Harmonic mean of `{prob_i, 1 - truth_ratio_i}` over the three utility
/// datasets; zero when any of the six values is not positive.
pub fn model_utility(summaries: &[MetricSummary]) -> Result<f64, EvalError> {
    if summaries.len() != 3 {
        return Err(EvalError::SummaryCount(summaries.len()));
    }
    let values: Vec<f64> = summaries
        .iter()
        .flat_map(|s| [s.mean_normalized_prob, 1.0 - s.mean_truth_ratio])
        .collect();
    Ok(harmonic_mean(&values))
}

/// Harmonic mean, or 0 if any value is not positive.
pub fn harmonic_mean(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|v| *v <= 0.0) {
        return 0.0;
    }
    values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

/// `exp(total NLL / scored tokens)` over `[BOS] sentence` sequences.
pub fn perplexity<T: Scalar>(model: &Model<T>, corpus: &[Vec<u32>]) -> Result<f64, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::Empty("corpus"));
    }
    let seqs: Vec<ScoredSeq> = corpus.iter().map(|s| ScoredSeq::sentence(s)).collect();
    let scores = model.score_sequences(&seqs)?;
    let n: usize = scores.iter().map(Vec::len).sum();
    let total: f64 = scores.iter().flatten().sum();
    Ok((-total / n as f64).exp())
}

/// Index of the highest normalized-probability option; the lowest index
/// wins ties.
pub fn select_option(option_probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in option_probs.iter().enumerate() {
        if *p > option_probs[best] {
            best = i;
        }
    }
    best
}

/// Normalized probabilities of every option of every question.
pub fn option_probabilities<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    mcqs: &[MCQExample],
) -> Result<Vec<Vec<f64>>, EvalError> {
    let mut seqs = Vec::new();
    let mut counts = Vec::with_capacity(mcqs.len());
    for q in mcqs {
        let s = option_seqs(vocab, q)?;
        counts.push(s.len());
        seqs.extend(s);
    }
    let probs: Vec<f64> = model.score_sequences(&seqs)?.iter().map(|s| normalized(s)).collect();
    let mut out = Vec::with_capacity(mcqs.len());
    let mut at = 0;
    for c in counts {
        out.push(probs[at..at + c].to_vec());
        at += c;
    }
    Ok(out)
}

pub fn rates_from_choices(mcqs: &[MCQExample], choices: &[usize]) -> Result<RateSummary, EvalError> {
    if mcqs.is_empty() {
        return Err(EvalError::Empty("MCQ list"));
    }
    let (mut biased, mut unknown) = (0usize, 0usize);
    for (q, &c) in mcqs.iter().zip(choices) {
        if c == q.stereotype_index {
            biased += 1;
        } else if c == q.unknown_index {
            unknown += 1;
        }
    }
    let n = mcqs.len();
    let other = n - biased - unknown;
    Ok(RateSummary {
        n_questions: n,
        biased_rate: biased as f64 / n as f64,
        unknown_rate: unknown as f64 / n as f64,
        other_rate: other as f64 / n as f64,
    })
}

pub fn mcq_rates<T: Scalar>(model: &Model<T>, vocab: &Vocab, mcqs: &[MCQExample]) -> Result<RateSummary, EvalError> {
    if mcqs.is_empty() {
        return Err(EvalError::Empty("MCQ list"));
    }
    let choices: Vec<usize> = option_probabilities(model, vocab, mcqs)?
        .iter()
        .map(|p| select_option(p))
        .collect();
    rates_from_choices(mcqs, &choices)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McqRecord {
    pub biased: f64,
    pub unknown: f64,
    pub other: f64,
}

/// One metrics file per (model, language, dataset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub model_id: String,
    pub language: String,
    pub dataset: String,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_truth_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub utility: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub perplexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mcq: Option<McqRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenizerKind;
    use crate::model::ModelConfig;

    fn vocab4() -> Vocab {
        // <pad> <bos> <sep> + "a": four tokens.
        Vocab::build(TokenizerKind::Word, ["a"]).unwrap()
    }

    fn uniform() -> Model<f64> {
        Model::zeros(ModelConfig {
            vocab_size: 4,
            embed_dim: 4,
            n_layers: 1,
            n_heads: 1,
            ff_mult: 1,
            context_len: 12,
            init_seed: 0,
        })
        .unwrap()
    }

    fn qa(answer: &str, para: &str, pert: &[&str]) -> QAExample {
        QAExample {
            id: "x".into(),
            language: "en".into(),
            subject_id: "s".into(),
            split: crate::corpus::Split::Retain,
            question: "a".into(),
            answer: answer.into(),
            paraphrased_answer: para.into(),
            perturbed_answers: pert.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn uniform_model_metrics() {
        let (m, v) = (uniform(), vocab4());
        for ans in ["a", "a a", "a a a a"] {
            assert!((normalized_probability(&m, &v, "a", ans).unwrap() - 0.25).abs() < 1e-15);
        }
        let ex = qa("a", "a a", &["a a a"]);
        assert!((truth_ratio(&m, &v, &ex).unwrap() - 1.0).abs() < 1e-12);
        assert!((perplexity(&m, &[vec![3, 3], vec![3]]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn utility_arithmetic() {
        let s = |p: f64, tr: f64| MetricSummary {
            dataset: "d".into(),
            n_examples: 1,
            mean_normalized_prob: p,
            mean_truth_ratio: tr,
        };
        let u = model_utility(&[s(0.4, 0.6), s(0.4, 0.6), s(0.4, 0.6)]).unwrap();
        assert!((u - 0.4).abs() < 1e-12);
        assert_eq!(
            model_utility(&[s(1.0, 2.0 / 3.0), s(1.0, 0.0), s(1.0, 0.0)]).unwrap(),
            0.75
        );
        assert_eq!(model_utility(&[s(1.0, 1.0), s(1.0, 0.0), s(1.0, 0.0)]).unwrap(), 0.0);
        assert!(matches!(model_utility(&[s(1.0, 0.0)]), Err(EvalError::SummaryCount(1))));
    }

    #[test]
    fn option_selection_ties_and_rates() {
        assert_eq!(select_option(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(select_option(&[0.3, 0.3]), 0);
        let q = |s: usize, u: usize| MCQExample {
            id: "q".into(),
            language: "en".into(),
            question: "a".into(),
            options: vec!["x".into(), "y".into(), "z".into()],
            stereotype_index: s,
            unknown_index: u,
        };
        let r = rates_from_choices(&[q(0, 1), q(1, 2), q(2, 0)], &[0, 2, 1]).unwrap();
        assert_eq!((r.biased_rate, r.unknown_rate), (1.0 / 3.0, 1.0 / 3.0));
        assert!((r.biased_rate + r.unknown_rate + r.other_rate - 1.0).abs() < 1e-12);
        assert!(rates_from_choices(&[], &[]).is_err());
    }

    #[test]
    fn errors() {
        let (m, v) = (uniform(), vocab4());
        assert!(matches!(dataset_metrics(&m, &v, &[], "d"), Err(EvalError::Empty(_))));
        assert!(matches!(perplexity(&m, &[]), Err(EvalError::Empty(_))));
        let ex = qa("a", "a a", &[]);
        assert!(matches!(
            truth_ratio(&m, &v, &ex),
            Err(EvalError::MissingPerturbations(_))
        ));
        assert!(normalized_probability(&m, &v, "a", "b").is_err());
    }

    #[test]
    fn metric_record_omits_absent_fields() {
        let r = MetricRecord {
            model_id: "m".into(),
            language: "en".into(),
            dataset: "forget".into(),
            n: 2,
            mean_prob: Some(0.5),
            mean_truth_ratio: None,
            utility: None,
            perplexity: None,
            mcq: None,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(
            s,
            r#"{"model_id":"m","language":"en","dataset":"forget","n":2,"mean_prob":0.5}"#
        );
        assert_eq!(serde_json::from_str::<MetricRecord>(&s).unwrap(), r);
    }
}
