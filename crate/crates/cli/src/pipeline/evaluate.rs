//! `eval`: metrics for every (checkpoint, language, dataset).

use rayon::prelude::*;

use unlearn_core::corpus::{QAExample, Split};
use unlearn_core::eval::{
    dataset_metrics, example_metrics, mcq_rates, model_utility, perplexity, McqRecord, MetricRecord,
};
use unlearn_core::model::{load_checkpoint, Model};

use super::data::Dataset;
use super::Ctx;
use crate::config::EvalDataset;
use crate::error::CliError;
use crate::workspace::{Workspace, FINETUNED, RETAIN_BASELINE};

/// Checkpoint ids in evaluation order: the baselines, then every unlearned
/// model in (method, language) config order.
pub fn model_ids(ctx: &Ctx) -> Vec<String> {
    let mut ids = vec![FINETUNED.to_string()];
    if ctx.cfg.finetune.retain_baseline {
        ids.push(RETAIN_BASELINE.to_string());
    }
    for m in &ctx.cfg.methods {
        for l in ctx.cfg.unlearn_language_ids() {
            ids.push(Workspace::unlearned_id(m.name(), &l));
        }
    }
    ids
}

fn qa_split(d: EvalDataset) -> Option<Split> {
    match d {
        EvalDataset::Forget => Some(Split::Forget),
        EvalDataset::Retain => Some(Split::Retain),
        EvalDataset::RealAuthorsAnalog => Some(Split::RealAuthorsAnalog),
        EvalDataset::WorldFactsAnalog => Some(Split::WorldFactsAnalog),
        EvalDataset::Mcq | EvalDataset::General => None,
    }
}

fn record(model_id: &str, lang: &str, dataset: &str, n: usize) -> MetricRecord {
    MetricRecord {
        model_id: model_id.to_string(),
        language: lang.to_string(),
        dataset: dataset.to_string(),
        n,
        mean_prob: None,
        mean_truth_ratio: None,
        utility: None,
        perplexity: None,
        mcq: None,
    }
}

fn examples_csv(examples: &[QAExample], probs: &[(f64, f64)]) -> String {
    let mut out = String::from("id,prob,truth_ratio\n");
    for (e, (p, t)) in examples.iter().zip(probs) {
        out.push_str(&format!("{},{p},{t}\n", e.id));
    }
    out
}

/// Output files of one model, as (relative path, bytes).
fn evaluate_model(
    ctx: &Ctx,
    data: &Dataset,
    model_id: &str,
    model: &Model<f32>,
) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let vocab = &data.vocab;
    let mut files = Vec::new();
    let mut emit = |rec: &MetricRecord| {
        let mut bytes = serde_json::to_vec_pretty(rec).expect("metric record serializes");
        bytes.push(b'\n');
        files.push((Workspace::metric(model_id, &rec.language, &rec.dataset), bytes));
    };
    let mut extra = Vec::new();
    for lang in &data.languages {
        let mut utility_parts = Vec::new();
        for d in ctx.cfg.eval.datasets.iter().copied() {
            if let Some(split) = qa_split(d) {
                let set = data.split(lang, split);
                if set.is_empty() {
                    continue;
                }
                let summary = dataset_metrics(model, vocab, &set, d.as_str())?;
                let mut r = record(model_id, lang, d.as_str(), set.len());
                r.mean_prob = Some(summary.mean_normalized_prob);
                r.mean_truth_ratio = Some(summary.mean_truth_ratio);
                emit(&r);
                if matches!(d, EvalDataset::Forget | EvalDataset::Retain) {
                    let m = example_metrics(model, vocab, &set)?;
                    let pairs: Vec<(f64, f64)> = m.iter().map(|x| (x.normalized_prob, x.truth_ratio)).collect();
                    extra.push((
                        Workspace::examples(model_id, lang, d.as_str()),
                        examples_csv(&set, &pairs).into_bytes(),
                    ));
                }
                if d != EvalDataset::Forget {
                    utility_parts.push(summary);
                }
            }
        }
        if ctx.cfg.eval.wants_utility() && utility_parts.len() == 3 {
            let mut r = record(
                model_id,
                lang,
                "utility",
                utility_parts.iter().map(|s| s.n_examples).sum(),
            );
            r.utility = Some(model_utility(&utility_parts)?);
            emit(&r);
        }
        if ctx.cfg.eval.wants(EvalDataset::General) && !data.general[lang].is_empty() {
            let corpus = data.general_tokens(lang)?;
            let mut r = record(model_id, lang, "general", corpus.len());
            r.perplexity = Some(perplexity(model, &corpus)?);
            emit(&r);
        }
        if ctx.cfg.eval.wants(EvalDataset::Mcq) && !data.mcq[lang].is_empty() {
            let rates = mcq_rates(model, vocab, &data.mcq[lang])?;
            let mut r = record(model_id, lang, "mcq", rates.n_questions);
            r.mcq = Some(McqRecord {
                biased: rates.biased_rate,
                unknown: rates.unknown_rate,
                other: rates.other_rate,
            });
            emit(&r);
        }
    }
    files.extend(extra);
    Ok(files)
}

pub fn eval(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let data = Dataset::load(ctx)?;
    let ids = model_ids(ctx);
    let results = ctx.pool()?.install(|| {
        ids.par_iter()
            .map(|id| -> Result<Vec<(String, Vec<u8>)>, CliError> {
                let ckpt = load_checkpoint(ctx.ws.path(&Workspace::checkpoint(id)))
                    .map_err(|e| CliError::runtime(Workspace::checkpoint(id), e))?;
                if ckpt.vocab != data.vocab {
                    return Err(CliError::runtime(
                        Workspace::checkpoint(id),
                        "vocabulary differs from data/vocab.json",
                    ));
                }
                let files = evaluate_model(ctx, &data, id, &ckpt.model)?;
                for (rel, bytes) in &files {
                    ctx.ws.write(rel, bytes)?;
                }
                Ok(files)
            })
            .collect::<Vec<_>>()
    });
    let mut written = Vec::new();
    for r in results {
        written.extend(r?.into_iter().map(|(rel, _)| rel));
    }
    Ok(written)
}

/// Reads the per-example probabilities written by [`eval`].
pub fn read_example_probs(ctx: &Ctx, model_id: &str, lang: &str, set: &str) -> Result<Vec<(String, f64)>, CliError> {
    let rel = Workspace::examples(model_id, lang, set);
    let text = ctx.ws.read_to_string(&rel)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut parts = line.split(',');
        let (Some(id), Some(p)) = (parts.next(), parts.next()) else {
            return Err(CliError::runtime(
                &rel,
                format!("line {}: expected id,prob,truth_ratio", i + 1),
            ));
        };
        let p: f64 = p
            .parse()
            .map_err(|e| CliError::runtime(&rel, format!("line {}: {e}", i + 1)))?;
        out.push((id.to_string(), p));
    }
    Ok(out)
}

pub fn read_metric(ctx: &Ctx, model_id: &str, lang: &str, dataset: &str) -> Result<Option<MetricRecord>, CliError> {
    let rel = Workspace::metric(model_id, lang, dataset);
    if !ctx.ws.exists(&rel) {
        return Ok(None);
    }
    serde_json::from_str(&ctx.ws.read_to_string(&rel)?)
        .map(Some)
        .map_err(|e| CliError::runtime(rel, e))
}
