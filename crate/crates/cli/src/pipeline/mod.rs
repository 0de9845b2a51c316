//! The staged pipeline and its manifest bookkeeping.

mod analyze;
mod data;
mod evaluate;
mod train;

use std::collections::BTreeMap;

use unlearn_core::seed::derive_seed;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{digest_all, now, RunManifest, TOOL_VERSION};
use crate::workspace::Workspace;

pub use data::Dataset;
pub use evaluate::model_ids;

/// What every stage gets to see.
pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub ws: Workspace,
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig) -> Self {
        let ws = Workspace::new(cfg.workspace.clone());
        Self { cfg, ws }
    }

    /// Seed of one job. It depends only on the global seed and the job's own
    /// labels, so adding a method or language leaves other jobs untouched.
    pub fn seed(&self, stage: &str, method: &str, label: &str) -> u64 {
        derive_seed(self.cfg.seed, &[stage, method, label])
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.jobs)
            .build()
            .map_err(|e| CliError::runtime("thread pool", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    GenData,
    Finetune,
    Unlearn,
    Eval,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::GenData,
        Stage::Finetune,
        Stage::Unlearn,
        Stage::Eval,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::Finetune => "finetune",
            Stage::Unlearn => "unlearn",
            Stage::Eval => "eval",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Stages whose artifacts this one reads.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::GenData => &[],
            Stage::Finetune => &[Stage::GenData],
            Stage::Unlearn => &[Stage::GenData, Stage::Finetune],
            Stage::Eval => &[Stage::GenData, Stage::Finetune, Stage::Unlearn],
            Stage::Analyze => &[Stage::GenData, Stage::Eval],
            Stage::Report => &[Stage::Eval, Stage::Analyze],
        }
    }

    fn execute(self, ctx: &Ctx) -> Result<Vec<String>, CliError> {
        match self {
            Stage::GenData => data::gen_data(ctx),
            Stage::Finetune => train::finetune(ctx),
            Stage::Unlearn => train::unlearn(ctx),
            Stage::Eval => evaluate::eval(ctx),
            Stage::Analyze => analyze::analyze(ctx),
            Stage::Report => analyze::report(ctx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    UpToDate,
}

/// Digests of the upstream artifacts, re-read from disk so that a modified
/// or deleted input is noticed.
fn gather_inputs(ctx: &Ctx, stage: Stage, hash: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut inputs = BTreeMap::new();
    for &pre in stage.prerequisites() {
        let missing = |reason: String| CliError::MissingPrerequisite {
            stage: stage.name(),
            reason,
        };
        let Some(m) = RunManifest::read(&ctx.ws, pre.name())? else {
            return Err(missing(format!("run `{}` first", pre.name())));
        };
        if m.config_hash != hash {
            return Err(missing(format!(
                "`{}` was run with a different config; re-run it",
                pre.name()
            )));
        }
        for rel in m.artifacts.keys() {
            if !ctx.ws.exists(rel) {
                return Err(missing(format!("{rel} from `{}` is gone; re-run it", pre.name())));
            }
        }
        inputs.extend(digest_all(&ctx.ws, m.artifacts.keys())?);
    }
    Ok(inputs)
}

/// Runs one stage unless its manifest shows identical config, inputs and
/// untouched outputs. A skipped stage writes nothing.
pub fn run_stage(ctx: &Ctx, stage: Stage, force: bool) -> Result<Outcome, CliError> {
    let hash = ctx.cfg.hash();
    let inputs = gather_inputs(ctx, stage, &hash)?;
    if !force {
        if let Some(m) = RunManifest::read(&ctx.ws, stage.name())? {
            if m.is_current(&ctx.ws, &hash, &inputs) {
                return Ok(Outcome::UpToDate);
            }
        }
    }
    let started_at = now();
    let mut written = stage.execute(ctx)?;
    written.sort();
    written.dedup();
    let manifest = RunManifest {
        stage: stage.name().to_string(),
        config_hash: hash,
        tool_version: TOOL_VERSION.to_string(),
        inputs,
        artifacts: digest_all(&ctx.ws, &written)?,
        started_at,
        finished_at: now(),
    };
    manifest.write(&ctx.ws)?;
    Ok(Outcome::Ran)
}

/// Every stage in order. Analysis needs two languages, so single-language
/// configs stop after `eval`.
pub fn run_all(ctx: &Ctx, force: bool) -> Result<Vec<(Stage, Outcome)>, CliError> {
    let mut out = Vec::new();
    for stage in Stage::ALL {
        if stage >= Stage::Analyze && ctx.cfg.language_ids().len() < 2 {
            break;
        }
        out.push((stage, run_stage(ctx, stage, force)?));
    }
    Ok(out)
}
