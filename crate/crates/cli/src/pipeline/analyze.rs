//! `analyze` (transfer matrices and statistics) and `report` (tables).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use unlearn_core::analysis::{
    distance_correlation, method_agreement, parse_transfer_csv, perplexity_delta_summary, transfer_from_probabilities,
    AgreementEntry, AnalysisError, AnalysisReport, SetTag, TransferMatrix,
};
use unlearn_core::corpus::DistanceKind;

use super::data::Dataset;
use super::evaluate::{read_example_probs, read_metric};
use super::Ctx;
use crate::config::MethodConfig;
use crate::error::CliError;
use crate::workspace::{Workspace, FINETUNED};

const SETS: [SetTag; 2] = [SetTag::Forget, SetTag::Retain];

/// Data-unlearning methods that were run in every language, so that their
/// transfer matrices are square.
fn transfer_methods(ctx: &Ctx) -> Vec<&MethodConfig> {
    let all = ctx.cfg.language_ids();
    let unlearned = ctx.cfg.unlearn_language_ids();
    if !all.iter().all(|l| unlearned.contains(l)) {
        return Vec::new();
    }
    ctx.cfg.methods.iter().filter(|m| !m.is_concept()).collect()
}

fn probs(ctx: &Ctx, model_id: &str, lang: &str, set: SetTag) -> Result<Vec<f64>, CliError> {
    Ok(read_example_probs(ctx, model_id, lang, set.as_str())?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

fn build_transfer(ctx: &Ctx, method: &str, set: SetTag) -> Result<TransferMatrix, CliError> {
    let langs = ctx.cfg.language_ids();
    let before = langs
        .iter()
        .map(|l| probs(ctx, FINETUNED, l, set))
        .collect::<Result<Vec<_>, _>>()?;
    let after = langs
        .iter()
        .map(|i| {
            let id = Workspace::unlearned_id(method, i);
            langs
                .iter()
                .map(|j| probs(ctx, &id, j, set))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(transfer_from_probabilities(
        &langs,
        &after,
        &before,
        set,
        method,
        ctx.cfg.aggregation,
    )?)
}

fn perplexities(ctx: &Ctx, model_id: &str) -> Result<Option<BTreeMap<String, f64>>, CliError> {
    let mut out = BTreeMap::new();
    for l in ctx.cfg.language_ids() {
        match read_metric(ctx, model_id, &l, "general")?.and_then(|r| r.perplexity) {
            Some(p) => {
                out.insert(l, p);
            }
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

pub fn analyze(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let langs = ctx.cfg.language_ids();
    if langs.len() < 2 {
        return Err(CliError::Config("analysis needs at least two languages".into()));
    }
    let mut written = Vec::new();
    let mut forget_matrices = Vec::new();
    for method in transfer_methods(ctx) {
        for set in SETS {
            let m = build_transfer(ctx, method.name(), set)?;
            let rel = Workspace::transfer(method.name(), set.as_str());
            ctx.ws.write(&rel, m.to_csv().as_bytes())?;
            written.push(rel);
            if set == SetTag::Forget {
                forget_matrices.push(m);
            }
        }
    }

    let mut report = AnalysisReport::default();
    for (i, a) in forget_matrices.iter().enumerate() {
        for b in &forget_matrices[i + 1..] {
            match method_agreement(a, b) {
                Ok(c) => report.method_agreement.push(AgreementEntry {
                    a: a.method.clone(),
                    b: b.method.clone(),
                    r: c.r,
                    p: c.p,
                }),
                Err(e) => eprintln!("method agreement {} vs {} skipped: {e}", a.method, b.method),
            }
        }
    }
    let distances = Dataset::distances(ctx)?;
    for m in &forget_matrices {
        let mut per_kind = BTreeMap::new();
        for kind in DistanceKind::ALL {
            match distance_correlation(m, &distances, kind) {
                Ok(c) => {
                    per_kind.insert(kind.as_str().to_string(), c);
                }
                Err(AnalysisError::MissingDistance(_)) => {}
                Err(e) => eprintln!("{} correlation for {} skipped: {e}", kind.as_str(), m.method),
            }
        }
        report.distance_correlation.insert(m.method.clone(), per_kind);
    }
    if let Some(before) = perplexities(ctx, FINETUNED)? {
        for method in &ctx.cfg.methods {
            for lang in ctx.cfg.unlearn_language_ids() {
                if let Some(after) = perplexities(ctx, &Workspace::unlearned_id(method.name(), &lang))? {
                    report
                        .perplexity_summary
                        .push(perplexity_delta_summary(method.name(), &lang, &before, &after)?);
                }
            }
        }
    }
    let rel = Workspace::analysis_report();
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    ctx.ws.write(&rel, &bytes)?;
    written.push(rel);
    Ok(written)
}

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}

pub fn report(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let langs = ctx.cfg.language_ids();
    let analysis: AnalysisReport = serde_json::from_str(&ctx.ws.read_to_string(&Workspace::analysis_report())?)
        .map_err(|e| CliError::runtime("analysis/report.json", e))?;
    let mut written = Vec::new();
    let mut md = String::from("# Unlearning report\n");

    let methods = transfer_methods(ctx);
    if !methods.is_empty() {
        md.push_str("\n## Same-language effect (after / before mean answer probability)\n\n");
        md.push_str("| method | language | forget | retain |\n|---|---|---|---|\n");
        for method in &methods {
            let mut by_set = BTreeMap::new();
            for set in SETS {
                let rel = Workspace::transfer(method.name(), set.as_str());
                let m = parse_transfer_csv(&ctx.ws.read_to_string(&rel)?, set, method.name())?;
                let heat = format!("report/heatmap.{}.{}.csv", method.name(), set.as_str());
                ctx.ws.write(&heat, m.to_csv().as_bytes())?;
                written.push(heat);
                by_set.insert(set.as_str(), m);
            }
            for (i, l) in langs.iter().enumerate() {
                let _ = writeln!(
                    md,
                    "| {} | {l} | {} | {} |",
                    method.name(),
                    fmt(by_set["forget"].values[i][i]),
                    fmt(by_set["retain"].values[i][i])
                );
            }
        }
    }

    let mut table2 = String::from("method,unlearned_language,avg_delta,max_delta_language,max_delta\n");
    if !analysis.perplexity_summary.is_empty() {
        md.push_str("\n## Perplexity increase on the general corpus\n\n| method | unlearned in | mean increase | largest in | largest increase |\n|---|---|---|---|---|\n");
        for s in &analysis.perplexity_summary {
            let _ = writeln!(
                md,
                "| {} | {} | {:.2} | {} | {:.2} |",
                s.method, s.unlearned_language, s.avg_delta, s.max_delta_language, s.max_delta
            );
            let _ = writeln!(
                table2,
                "{},{},{},{},{}",
                s.method, s.unlearned_language, s.avg_delta, s.max_delta_language, s.max_delta
            );
        }
    }
    ctx.ws.write("report/table2.csv", table2.as_bytes())?;
    written.push("report/table2.csv".into());

    let mut table3 = String::from("method,distance,r,p,n\n");
    if !analysis.distance_correlation.is_empty() {
        md.push_str("\n## Transfer vs. language distance (Pearson, off-diagonal)\n\n| method | distance | r | p | n |\n|---|---|---|---|---|\n");
        for (method, kinds) in &analysis.distance_correlation {
            for (kind, c) in kinds {
                let _ = writeln!(md, "| {method} | {kind} | {} | {:.3e} | {} |", fmt(c.r), c.p, c.n);
                let _ = writeln!(table3, "{method},{kind},{},{},{}", c.r, c.p, c.n);
            }
        }
    }
    ctx.ws.write("report/table3.csv", table3.as_bytes())?;
    written.push("report/table3.csv".into());

    if !analysis.method_agreement.is_empty() {
        md.push_str(
            "\n## Method agreement (Pearson over all transfer entries)\n\n| a | b | r | p |\n|---|---|---|---|\n",
        );
        for e in &analysis.method_agreement {
            let _ = writeln!(md, "| {} | {} | {} | {:.3e} |", e.a, e.b, fmt(e.r), e.p);
        }
    }

    let mut mcq = String::from("model,language,biased,unknown,other\n");
    let mut utility = String::new();
    for id in super::evaluate::model_ids(ctx) {
        for l in &langs {
            if let Some(r) = read_metric(ctx, &id, l, "mcq")?.and_then(|r| r.mcq) {
                let _ = writeln!(mcq, "{id},{l},{},{},{}", r.biased, r.unknown, r.other);
            }
            if let Some(u) = read_metric(ctx, &id, l, "utility")?.and_then(|r| r.utility) {
                let _ = writeln!(utility, "| {id} | {l} | {} |", fmt(u));
            }
        }
    }
    if mcq.lines().count() > 1 {
        md.push_str("\n## Stereotype questions (selection rates)\n\n| model | language | biased | unknown | other |\n|---|---|---|---|---|\n");
        for line in mcq.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            let rate = |s: &str| s.parse::<f64>().map(fmt).unwrap_or_default();
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                cells[0],
                cells[1],
                rate(cells[2]),
                rate(cells[3]),
                rate(cells[4])
            );
        }
    }
    ctx.ws.write("report/mcq.csv", mcq.as_bytes())?;
    written.push("report/mcq.csv".into());
    if !utility.is_empty() {
        md.push_str("\n## Model utility\n\n| model | language | utility |\n|---|---|---|\n");
        md.push_str(&utility);
    }
    ctx.ws.write("report/summary.md", md.as_bytes())?;
    written.push("report/summary.md".into());
    Ok(written)
}
