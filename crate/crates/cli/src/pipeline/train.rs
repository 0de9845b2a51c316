//! `finetune` and `unlearn`.

use rayon::prelude::*;

use unlearn_core::corpus::Split;
use unlearn_core::model::{load_checkpoint, save_checkpoint, Model, ModelConfig, ScoredSeq};
use unlearn_core::unlearn::{run_finetune, run_unlearn, TrainHistory, UnlearnData, UnlearnError};

use super::data::Dataset;
use super::Ctx;
use crate::config::MethodConfig;
use crate::error::CliError;
use crate::workspace::{Workspace, FINETUNED, RETAIN_BASELINE};

fn save(
    ctx: &Ctx,
    model_id: &str,
    model: &Model<f32>,
    history: &TrainHistory,
    data: &Dataset,
) -> Result<Vec<String>, CliError> {
    let ckpt = Workspace::checkpoint(model_id);
    save_checkpoint(model, &data.vocab, ctx.ws.ensure_parent(&ckpt)?)?;
    let hist = Workspace::history(model_id);
    ctx.ws.write(&hist, history.to_csv().as_bytes())?;
    Ok(vec![ckpt, hist])
}

fn model_config(ctx: &Ctx, data: &Dataset) -> Result<ModelConfig, CliError> {
    let needed = data.max_input_len()?;
    let shape = ctx.cfg.model;
    let context_len = shape.context_len.unwrap_or(needed);
    if context_len < needed {
        return Err(CliError::Config(format!(
            "model.context_len {context_len} is shorter than the longest sequence ({needed} positions)"
        )));
    }
    Ok(ModelConfig {
        vocab_size: data.vocab.len(),
        embed_dim: shape.embed_dim,
        n_layers: shape.n_layers,
        n_heads: shape.n_heads,
        ff_mult: shape.ff_mult,
        context_len,
        init_seed: ctx.seed("finetune", "", "init"),
    })
}

/// Every language pooled: all QA splits, question -> stereotyped answer for
/// each multiple-choice item, and the general corpus.
fn training_set(data: &Dataset, include_forget: bool) -> Result<Vec<ScoredSeq>, CliError> {
    let mut out = Vec::new();
    for lang in &data.languages {
        let qa: Vec<_> = data.qa[lang]
            .iter()
            .filter(|e| include_forget || e.split != Split::Forget)
            .cloned()
            .collect();
        out.extend(data.seqs(&qa)?);
        out.extend(data.mcq_seqs(lang, |q| q.stereotype_index)?);
        out.extend(data.general_seqs(lang)?);
    }
    Ok(out)
}

pub fn finetune(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let data = Dataset::load(ctx)?;
    let mcfg = model_config(ctx, &data)?;
    let ft = ctx.cfg.finetune.with_seed(ctx.seed("finetune", "", "order"));
    let mut runs = vec![(FINETUNED, true)];
    if ctx.cfg.finetune.retain_baseline {
        runs.push((RETAIN_BASELINE, false));
    }
    let results = ctx.pool()?.install(|| {
        runs.par_iter()
            .map(|&(id, with_forget)| -> Result<_, CliError> {
                let train = training_set(&data, with_forget)?;
                let (model, history) = run_finetune(Model::init(mcfg)?, &train, &ft)?;
                Ok((id, model, history))
            })
            .collect::<Vec<_>>()
    });
    let mut written = Vec::new();
    for r in results {
        let (id, model, history) = r?;
        written.extend(save(ctx, id, &model, &history, &data)?);
    }
    Ok(written)
}

fn unlearn_data(ctx: &Ctx, data: &Dataset, method: &MethodConfig, lang: &str) -> Result<UnlearnData, CliError> {
    let general = data.general_seqs(lang)?;
    if method.is_concept() {
        return Ok(UnlearnData {
            forget: data.mcq_seqs(lang, |q| q.stereotype_index)?,
            retain: data.mcq_seqs(lang, |q| q.unknown_index)?,
            general,
        });
    }
    let retain_langs: Vec<&String> = if ctx.cfg.retain_all_languages {
        data.languages.iter().collect()
    } else {
        data.languages.iter().filter(|l| *l == lang).collect()
    };
    let mut retain = Vec::new();
    for l in retain_langs {
        retain.extend(data.seqs(&data.split(l, Split::Retain))?);
    }
    Ok(UnlearnData {
        forget: data.seqs(&data.split(lang, Split::Forget))?,
        retain,
        general,
    })
}

pub fn unlearn(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let data = Dataset::load(ctx)?;
    let base = load_checkpoint(ctx.ws.path(&Workspace::checkpoint(FINETUNED)))?;
    let reference = base.model.clone().frozen();
    let jobs: Vec<(&MethodConfig, String)> = ctx
        .cfg
        .methods
        .iter()
        .flat_map(|m| ctx.cfg.unlearn_language_ids().into_iter().map(move |l| (m, l)))
        .collect();
    let results = ctx.pool()?.install(|| {
        jobs.par_iter()
            .map(|(method, lang)| -> Result<Vec<String>, CliError> {
                let id = Workspace::unlearned_id(method.name(), lang);
                let ucfg = method.with_seed(ctx.seed("unlearn", method.name(), lang));
                let udata = unlearn_data(ctx, &data, method, lang)?;
                match run_unlearn(base.model.clone(), Some(&reference), &udata, &ucfg) {
                    Ok((model, history)) => save(ctx, &id, &model, &history, &data),
                    Err(UnlearnError::Diverged {
                        step,
                        last_good,
                        history,
                    }) => {
                        let kept = format!("{id}.diverged");
                        save(ctx, &kept, &last_good, &history, &data)?;
                        Err(CliError::Diverged {
                            method: method.name().to_string(),
                            language: lang.clone(),
                            step,
                            saved: ctx.ws.path(&Workspace::checkpoint(&kept)),
                        })
                    }
                    Err(e) => Err(CliError::runtime(format!("unlearning {} in {lang}", method.name()), e)),
                }
            })
            .collect::<Vec<_>>()
    });
    let mut written = Vec::new();
    for r in results {
        written.extend(r?);
    }
    Ok(written)
}
