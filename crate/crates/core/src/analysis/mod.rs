//! Cross-lingual transfer matrices and the statistics run on them.

mod stats;

pub use stats::{ln_gamma, p_value_two_sided, pearson, regularized_incomplete_beta};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DistanceKind, DistanceMatrices, QAExample, Vocab};
use crate::eval::{answer_probabilities, EvalError};
use crate::model::Model;
use crate::tensor::Scalar;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("at least 3 points are required, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("correlation {0} outside [-1, 1]")]
    InvalidCorrelation(f64),
    #[error("baseline mean probability for language {0:?} is zero")]
    ZeroBaseline(String),
    #[error("language lists differ")]
    LanguageMismatch,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("distance matrix {0:?} is not available")]
    MissingDistance(DistanceKind),
    #[error("empty dataset for language {0:?}")]
    EmptyDataset(String),
    #[error("perplexity keys differ between before and after")]
    KeyMismatch,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetTag {
    Forget,
    Retain,
}

impl SetTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SetTag::Forget => "forget",
            SetTag::Retain => "retain",
        }
    }
}

/// How per-example probabilities become one matrix entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// mean(after) / mean(before)
    #[default]
    RatioOfMeans,
    /// mean(after_k / before_k)
    MeanOfRatios,
}

/// Rows are the unlearning language, columns the evaluation language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub languages: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub set: SetTag,
    pub method: String,
}

impl TransferMatrix {
    pub fn k(&self) -> usize {
        self.languages.len()
    }

    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.languages.iter().position(|l| l == row)?;
        let j = self.languages.iter().position(|l| l == col)?;
        Some(self.values[i][j])
    }

    /// Header `unlearn_lang,<ids>`, one row per unlearning language.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("unlearn_lang")
            .chain(self.languages.iter().map(String::as_str))
            .collect();
        w.write_record(&header).expect("in-memory write");
        for (lang, row) in self.languages.iter().zip(&self.values) {
            let mut rec = vec![lang.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Parses a transfer CSV; the set and method tags are not part of the file.
pub fn parse_transfer_csv(text: &str, set: SetTag, method: &str) -> Result<TransferMatrix, AnalysisError> {
    let parse_err = |line: usize, reason: String| AnalysisError::Parse { line, reason };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.get(0) != Some("unlearn_lang") || header.len() < 2 {
        return Err(parse_err(1, "header must be `unlearn_lang,<id>,...`".into()));
    }
    let languages: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if i >= languages.len() || rec.get(0) != Some(languages[i].as_str()) {
            return Err(parse_err(line, "row labels must repeat the header order".into()));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<f64>().map_err(|e| parse_err(line, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != languages.len() {
            return Err(parse_err(line, format!("expected {} values", languages.len())));
        }
        if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(parse_err(line, "values must be finite and non-negative".into()));
        }
        values.push(row);
    }
    if values.len() != languages.len() {
        return Err(parse_err(values.len() + 2, "expected one row per language".into()));
    }
    Ok(TransferMatrix {
        languages,
        values,
        set,
        method: method.to_string(),
    })
}

/// Builds the matrix from per-example probabilities: `after[i][j][k]` is the
/// probability of example `k` of language `j`'s set under the model
/// unlearned in language `i`; `before[j][k]` is the baseline's.
pub fn transfer_from_probabilities(
    languages: &[String],
    after: &[Vec<Vec<f64>>],
    before: &[Vec<f64>],
    set: SetTag,
    method: &str,
    aggregation: Aggregation,
) -> Result<TransferMatrix, AnalysisError> {
    let k = languages.len();
    if after.len() != k || before.len() != k || after.iter().any(|r| r.len() != k) {
        return Err(AnalysisError::Shape(format!(
            "expected {k} unlearned models and {k} datasets"
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut values = vec![vec![0.0; k]; k];
    for j in 0..k {
        if before[j].is_empty() {
            return Err(AnalysisError::EmptyDataset(languages[j].clone()));
        }
        let base = mean(&before[j]);
        if !(base > 0.0)
            || before[j]
                .iter()
                .any(|p| aggregation == Aggregation::MeanOfRatios && *p <= 0.0)
        {
            return Err(AnalysisError::ZeroBaseline(languages[j].clone()));
        }
        for i in 0..k {
            let a = &after[i][j];
            if a.len() != before[j].len() {
                return Err(AnalysisError::Shape(format!("example count differs for ({i}, {j})")));
            }
            values[i][j] = match aggregation {
                Aggregation::RatioOfMeans => mean(a) / base,
                Aggregation::MeanOfRatios => a.iter().zip(&before[j]).map(|(x, y)| x / y).sum::<f64>() / a.len() as f64,
            };
        }
    }
    Ok(TransferMatrix {
        languages: languages.to_vec(),
        values,
        set,
        method: method.to_string(),
    })
}

/// Evaluates every unlearned model on every language's dataset.
pub fn transfer_matrix<T: Scalar>(
    languages: &[String],
    unlearned: &[&Model<T>],
    baseline: &Model<T>,
    vocab: &Vocab,
    datasets: &[Vec<QAExample>],
    set: SetTag,
    method: &str,
    aggregation: Aggregation,
) -> Result<TransferMatrix, AnalysisError> {
    if unlearned.len() != languages.len() || datasets.len() != languages.len() {
        return Err(AnalysisError::Shape("one model and one dataset per language".into()));
    }
    for (l, d) in languages.iter().zip(datasets) {
        if d.is_empty() {
            return Err(AnalysisError::EmptyDataset(l.clone()));
        }
    }
    let before = datasets
        .iter()
        .map(|d| answer_probabilities(baseline, vocab, d))
        .collect::<Result<Vec<_>, _>>()?;
    let after = unlearned
        .iter()
        .map(|m| {
            datasets
                .iter()
                .map(|d| answer_probabilities(*m, vocab, d))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    transfer_from_probabilities(languages, &after, &before, set, method, aggregation)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    pub p: f64,
}

pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationResult, AnalysisError> {
    let r = pearson(x, y)?;
    Ok(CorrelationResult {
        r,
        n: x.len(),
        p: p_value_two_sided(r, x.len())?,
    })
}

/// Pearson over all `K^2` entries, diagonal included.
pub fn method_agreement(a: &TransferMatrix, b: &TransferMatrix) -> Result<CorrelationResult, AnalysisError> {
    if a.languages != b.languages {
        return Err(AnalysisError::LanguageMismatch);
    }
    if a.set != b.set {
        return Err(AnalysisError::Shape("matrices describe different sets".into()));
    }
    let flat = |m: &TransferMatrix| m.values.iter().flatten().copied().collect::<Vec<f64>>();
    correlate(&flat(a), &flat(b))
}

/// Pearson over the `K^2 - K` off-diagonal pairs in row-major order.
pub fn distance_correlation(
    transfer: &TransferMatrix,
    distances: &DistanceMatrices,
    kind: DistanceKind,
) -> Result<CorrelationResult, AnalysisError> {
    if transfer.languages != distances.languages {
        return Err(AnalysisError::LanguageMismatch);
    }
    let d = distances.get(kind).ok_or(AnalysisError::MissingDistance(kind))?;
    let k = transfer.k();
    let (mut x, mut y) = (Vec::with_capacity(k * k - k), Vec::with_capacity(k * k - k));
    for i in 0..k {
        for j in 0..k {
            if i != j {
                x.push(d[i][j]);
                y.push(transfer.values[i][j]);
            }
        }
    }
    correlate(&x, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityDeltaSummary {
    pub method: String,
    pub unlearned_language: String,
    pub deltas: BTreeMap<String, f64>,
    pub avg_delta: f64,
    pub max_delta_language: String,
    pub max_delta: f64,
}

impl PerplexityDeltaSummary {
    /// `Unlearned EN | 0.55 | ID | 0.71`
    pub fn table_row(&self) -> String {
        format!(
            "Unlearned {} | {:.2} | {} | {:.2}",
            self.unlearned_language.to_uppercase(),
            self.avg_delta,
            self.max_delta_language.to_uppercase(),
            self.max_delta
        )
    }
}

/// Per-language perplexity increase; the maximum goes to the
/// lexicographically first language on ties.
pub fn perplexity_delta_summary(
    method: &str,
    unlearned_language: &str,
    before: &BTreeMap<String, f64>,
    after: &BTreeMap<String, f64>,
) -> Result<PerplexityDeltaSummary, AnalysisError> {
    if before.is_empty() || !before.keys().eq(after.keys()) {
        return Err(AnalysisError::KeyMismatch);
    }
    let deltas: BTreeMap<String, f64> = before.iter().map(|(k, b)| (k.clone(), after[k] - b)).collect();
    let avg_delta = deltas.values().sum::<f64>() / deltas.len() as f64;
    let (mut max_lang, mut max) = (String::new(), f64::NEG_INFINITY);
    for (k, d) in &deltas {
        if *d > max {
            max = *d;
            max_lang = k.clone();
        }
    }
    Ok(PerplexityDeltaSummary {
        method: method.to_string(),
        unlearned_language: unlearned_language.to_string(),
        deltas,
        avg_delta,
        max_delta_language: max_lang,
        max_delta: max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementEntry {
    pub a: String,
    pub b: String,
    pub r: f64,
    pub p: f64,
}

/// The analysis stage output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub method_agreement: Vec<AgreementEntry>,
    /// method -> distance kind -> correlation
    pub distance_correlation: BTreeMap<String, BTreeMap<String, CorrelationResult>>,
    pub perplexity_summary: Vec<PerplexityDeltaSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn langs(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("l{i}")).collect()
    }

    #[test]
    fn identity_transfer_is_all_ones() {
        let before = vec![vec![0.3, 0.7], vec![0.11, 0.5, 0.2]];
        let after = vec![before.clone(), before.clone()];
        for agg in [Aggregation::RatioOfMeans, Aggregation::MeanOfRatios] {
            let m = transfer_from_probabilities(&langs(2), &after, &before, SetTag::Forget, "x", agg).unwrap();
            assert!(m.values.iter().flatten().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn aggregations_differ() {
        let before = vec![vec![0.2, 0.8]];
        let after = vec![vec![vec![0.1, 0.8]]];
        let one = langs(1);
        let rom =
            transfer_from_probabilities(&one, &after, &before, SetTag::Forget, "x", Aggregation::RatioOfMeans).unwrap();
        let mor =
            transfer_from_probabilities(&one, &after, &before, SetTag::Forget, "x", Aggregation::MeanOfRatios).unwrap();
        assert!((rom.values[0][0] - 0.9).abs() < 1e-12);
        assert!((mor.values[0][0] - 0.75).abs() < 1e-12);
        let zero = vec![vec![0.0, 0.0]];
        assert!(matches!(
            transfer_from_probabilities(&one, &after, &zero, SetTag::Forget, "x", Aggregation::RatioOfMeans),
            Err(AnalysisError::ZeroBaseline(_))
        ));
    }

    #[test]
    fn agreement_and_distance_correlation() {
        let m = TransferMatrix {
            languages: langs(3),
            values: vec![vec![0.1, 0.5, 0.9], vec![0.4, 0.2, 0.8], vec![0.7, 0.6, 0.3]],
            set: SetTag::Forget,
            method: "a".into(),
        };
        assert!((method_agreement(&m, &m).unwrap().r - 1.0).abs() < 1e-12);
        assert_eq!(method_agreement(&m, &m).unwrap().n, 9);
        let d = DistanceMatrices {
            languages: langs(3),
            syntactic: vec![vec![0.0, 0.2, 0.4], vec![0.2, 0.0, 0.6], vec![0.4, 0.6, 0.0]],
            inventory: vec![vec![0.0; 3]; 3],
            phonological: None,
        };
        let c = distance_correlation(&m, &d, DistanceKind::Syntactic).unwrap();
        assert_eq!(c.n, 6);
        let expect = pearson(&[0.2, 0.4, 0.2, 0.6, 0.4, 0.6], &[0.5, 0.9, 0.4, 0.8, 0.7, 0.6]).unwrap();
        assert!((c.r - expect).abs() < 1e-15);
        assert!(matches!(
            distance_correlation(&m, &d, DistanceKind::Phonological),
            Err(AnalysisError::MissingDistance(_))
        ));
        assert!(matches!(
            distance_correlation(&m, &d, DistanceKind::Inventory),
            Err(AnalysisError::ZeroVariance)
        ));
    }

    #[test]
    fn perplexity_summary() {
        let map = |v: &[(&str, f64)]| v.iter().map(|(k, x)| (k.to_string(), *x)).collect::<BTreeMap<_, _>>();
        let before = map(&[("a", 1.0), ("b", 2.0), ("c", 3.0)]);
        let after = map(&[("a", 1.4), ("b", 2.7), ("c", 3.1)]);
        let s = perplexity_delta_summary("npo", "en", &before, &after).unwrap();
        assert!((s.avg_delta - 0.4).abs() < 1e-12);
        assert_eq!(s.max_delta_language, "b");
        assert!((s.max_delta - 0.7).abs() < 1e-12);
        let same = perplexity_delta_summary("npo", "en", &before, &before).unwrap();
        assert_eq!(
            (same.avg_delta, same.max_delta, same.max_delta_language.as_str()),
            (0.0, 0.0, "a")
        );
        assert!(perplexity_delta_summary("npo", "en", &before, &map(&[("a", 1.0)])).is_err());
        let row = PerplexityDeltaSummary {
            method: "npo".into(),
            unlearned_language: "en".into(),
            deltas: BTreeMap::new(),
            avg_delta: 0.55,
            max_delta_language: "id".into(),
            max_delta: 0.71,
        };
        assert_eq!(row.table_row(), "Unlearned EN | 0.55 | ID | 0.71");
    }

    #[test]
    fn transfer_csv_round_trip() {
        let m = TransferMatrix {
            languages: langs(2),
            values: vec![vec![0.25, 1.5], vec![0.125, 1.0]],
            set: SetTag::Retain,
            method: "npo".into(),
        };
        let csv = m.to_csv();
        assert!(csv.starts_with("unlearn_lang,l0,l1\n"));
        assert_eq!(parse_transfer_csv(&csv, SetTag::Retain, "npo").unwrap(), m);
        assert!(parse_transfer_csv("unlearn_lang,a\na,-1\n", SetTag::Retain, "x").is_err());
        assert!(parse_transfer_csv("unlearn_lang,a,b\na,1,1\n", SetTag::Retain, "x").is_err());
        assert!(parse_transfer_csv("unlearn_lang,a,b\na,1\nb,1,1\n", SetTag::Retain, "x").is_err());
    }
}
