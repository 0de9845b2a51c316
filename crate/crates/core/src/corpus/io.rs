//! Dataset files: question/answer and multiple-choice items as JSON lines,
//! distance matrices as CSV (`lang,<id>,<id>,...` header, one row per
//! language).

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::distances::{validate_matrix, DistanceKind, DistanceMatrices};
use super::{CorpusError, MCQExample, QAExample};

fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push((i + 1, item));
    }
    Ok(out)
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("dataset items serialize"));
        s.push('\n');
    }
    s
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn check_unique<'a>(ids: impl Iterator<Item = (usize, &'a str)>) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for (line, id) in ids {
        if !seen.insert(id) {
            return Err(CorpusError::Parse {
                line,
                reason: format!("duplicate id {id:?}"),
            });
        }
    }
    Ok(())
}

/// Parses and validates question/answer JSON lines.
pub fn parse_qa_jsonl(text: &str) -> Result<Vec<QAExample>, CorpusError> {
    let items = parse_jsonl::<QAExample>(text)?;
    for (line, ex) in &items {
        ex.validate().map_err(|e| CorpusError::Parse {
            line: *line,
            reason: e.to_string(),
        })?;
    }
    check_unique(items.iter().map(|(l, e)| (*l, e.id.as_str())))?;
    Ok(items.into_iter().map(|(_, e)| e).collect())
}

/// Writes items sorted by id, so equal datasets give equal files.
pub fn write_qa_jsonl(path: impl AsRef<Path>, items: &[QAExample]) -> Result<(), CorpusError> {
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    write_atomic(path.as_ref(), to_jsonl(&sorted).as_bytes())
}

pub fn read_qa_jsonl(path: impl AsRef<Path>) -> Result<Vec<QAExample>, CorpusError> {
    parse_qa_jsonl(&fs::read_to_string(path)?)
}

/// Parses and structurally validates multiple-choice JSON lines.
pub fn parse_mcq_jsonl(text: &str) -> Result<Vec<MCQExample>, CorpusError> {
    let items = parse_jsonl::<MCQExample>(text)?;
    for (line, ex) in &items {
        ex.validate(None).map_err(|e| CorpusError::Parse {
            line: *line,
            reason: e.to_string(),
        })?;
    }
    check_unique(items.iter().map(|(l, e)| (*l, e.id.as_str())))?;
    Ok(items.into_iter().map(|(_, e)| e).collect())
}

pub fn write_mcq_jsonl(path: impl AsRef<Path>, items: &[MCQExample]) -> Result<(), CorpusError> {
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    write_atomic(path.as_ref(), to_jsonl(&sorted).as_bytes())
}

pub fn read_mcq_jsonl(path: impl AsRef<Path>) -> Result<Vec<MCQExample>, CorpusError> {
    parse_mcq_jsonl(&fs::read_to_string(path)?)
}

/// One square distance matrix with its language labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub languages: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

fn csv_err(e: csv::Error) -> CorpusError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    CorpusError::Parse {
        line,
        reason: e.to_string(),
    }
}

/// Parses a distance CSV. Rows must appear in header order.
pub fn parse_distance_csv(text: &str) -> Result<LabeledMatrix, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("lang") || header.len() < 3 {
        return Err(CorpusError::Parse {
            line: 1,
            reason: "header must be `lang,<id>,<id>,...` with at least two languages".into(),
        });
    }
    let languages: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut values = Vec::with_capacity(languages.len());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        if i >= languages.len() || rec.get(0) != Some(languages[i].as_str()) {
            return Err(CorpusError::Parse {
                line,
                reason: "row labels must repeat the header order".into(),
            });
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CorpusError::Parse {
                line,
                reason: e.to_string(),
            })?;
        values.push(row);
    }
    validate_matrix("csv", &values, languages.len())?;
    Ok(LabeledMatrix { languages, values })
}

pub fn distance_csv(languages: &[String], values: &[Vec<f64>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("lang")
        .chain(languages.iter().map(String::as_str))
        .collect();
    w.write_record(&header).expect("in-memory write");
    for (lang, row) in languages.iter().zip(values) {
        let mut rec = vec![lang.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Writes `syntactic.csv`, `inventory.csv` and, when present, `phonological.csv`.
pub fn write_distance_dir(dir: impl AsRef<Path>, d: &DistanceMatrices) -> Result<(), CorpusError> {
    d.validate()?;
    for kind in DistanceKind::ALL {
        if let Some(m) = d.get(kind) {
            let path = dir.as_ref().join(format!("{}.csv", kind.as_str()));
            write_atomic(&path, distance_csv(&d.languages, m).as_bytes())?;
        }
    }
    Ok(())
}

/// Reads the matrices written by [`write_distance_dir`]; the phonological
/// file is optional. All files must list the same languages.
pub fn read_distance_dir(dir: impl AsRef<Path>) -> Result<DistanceMatrices, CorpusError> {
    let read = |kind: DistanceKind| -> Result<Option<LabeledMatrix>, CorpusError> {
        let path = dir.as_ref().join(format!("{}.csv", kind.as_str()));
        match fs::read_to_string(&path) {
            Ok(text) => parse_distance_csv(&text).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && kind == DistanceKind::Phonological => Ok(None),
            Err(e) => Err(e.into()),
        }
    };
    let syn = read(DistanceKind::Syntactic)?.expect("required matrix");
    let inv = read(DistanceKind::Inventory)?.expect("required matrix");
    let pho = read(DistanceKind::Phonological)?;
    for other in std::iter::once(&inv).chain(pho.as_ref()) {
        if other.languages != syn.languages {
            return Err(CorpusError::InvalidDistances(
                "matrices list different languages".into(),
            ));
        }
    }
    let out = DistanceMatrices {
        languages: syn.languages,
        syntactic: syn.values,
        inventory: inv.values,
        phonological: pho.map(|m| m.values),
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_profiles, render_language, synthetic_distances, LangSpec, Split};

    #[test]
    fn qa_round_trip() {
        let fs = generate_profiles(3, 2, 1).unwrap();
        let data = render_language(&fs, &LangSpec::base("en"), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("qa.jsonl");
        write_qa_jsonl(&p, &data).unwrap();
        assert_eq!(read_qa_jsonl(&p).unwrap(), data);
    }

    #[test]
    fn qa_errors_carry_line_numbers() {
        let good = r#"{"id":"a","language":"en","subject_id":"s","split":"forget","question":"q","answer":"x","paraphrased_answer":"y","perturbed_answers":["z"]}"#;
        assert_eq!(parse_qa_jsonl(good).unwrap()[0].split, Split::Forget);
        let dup = format!("{good}\n{good}\n");
        assert!(matches!(parse_qa_jsonl(&dup), Err(CorpusError::Parse { line: 2, .. })));
        let same = good.replace(r#"["z"]"#, r#"["x"]"#);
        assert!(matches!(
            parse_qa_jsonl(&format!("\n{same}")),
            Err(CorpusError::Parse { line: 2, .. })
        ));
        assert!(parse_qa_jsonl("{").is_err());
        assert!(parse_qa_jsonl(&good.replace("\"q\"", "\"q\",\"extra\":1")).is_err());
    }

    #[test]
    fn mcq_validation() {
        let good = r#"{"id":"m","language":"en","question":"q","options":["a","b","unknown"],"stereotype_index":0,"unknown_index":2}"#;
        assert_eq!(parse_mcq_jsonl(good).unwrap().len(), 1);
        assert!(parse_mcq_jsonl(&good.replace("\"unknown_index\":2", "\"unknown_index\":0")).is_err());
        assert!(parse_mcq_jsonl(&good.replace("\"b\"", "\"a\"")).is_err());
    }

    #[test]
    fn distance_round_trip() {
        let d = synthetic_distances(&[
            LangSpec::base("en"),
            LangSpec {
                lang_id: "xx".into(),
                lexicon_seed: 2,
                shared_fraction: 0.3,
                word_order: vec![1, 0, 2, 3],
                script_offset: 0,
            },
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_distance_dir(dir.path(), &d).unwrap();
        assert_eq!(read_distance_dir(dir.path()).unwrap(), d);
    }

    #[test]
    fn distance_csv_errors() {
        assert!(parse_distance_csv("lang,a,b\na,0,0.5\nb,0.5,0\n").is_ok());
        assert!(parse_distance_csv("lang,a,b\nb,0,0.5\na,0.5,0\n").is_err());
        assert!(parse_distance_csv("lang,a,b\na,0,0.5\nb,0.4,0\n").is_err());
        assert!(parse_distance_csv("lang,a,b\na,0,x\nb,0.5,0\n").is_err());
        assert!(parse_distance_csv("lang,a,b\na,0,0.5\n").is_err());
        assert!(parse_distance_csv("id,a,b\na,0,0.5\nb,0.5,0\n").is_err());
        assert!(parse_distance_csv("").is_err());
    }
}
