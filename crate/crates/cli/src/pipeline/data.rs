//! `gen-data`: synthetic (or ingested) benchmarks, the shared vocabulary and
//! the distance matrices.

use std::collections::BTreeMap;
use std::fs;

use unlearn_core::corpus::io::{
    read_distance_dir, read_mcq_jsonl, read_qa_jsonl, write_distance_dir, write_mcq_jsonl, write_qa_jsonl,
};
use unlearn_core::corpus::lang::render_language_with;
use unlearn_core::corpus::{
    default_stereo_pairs, general_corpus, generate_mcq, generate_profiles, generate_real_authors, generate_world_facts,
    split_forget_retain, synthetic_distances, DistanceKind, DistanceMatrices, MCQExample, QAExample, Split, Vocab,
};
use unlearn_core::encode::{answer_seq, option_seqs, qa_seq, sentence_seq};
use unlearn_core::model::ScoredSeq;

use super::Ctx;
use crate::config::DistanceSource;
use crate::error::CliError;
use crate::workspace::{write_atomic, Workspace};

/// Everything `gen-data` produced, read back from the workspace.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub languages: Vec<String>,
    pub qa: BTreeMap<String, Vec<QAExample>>,
    pub mcq: BTreeMap<String, Vec<MCQExample>>,
    pub general: BTreeMap<String, Vec<String>>,
    pub vocab: Vocab,
}

impl Dataset {
    pub fn split(&self, lang: &str, split: Split) -> Vec<QAExample> {
        self.qa[lang].iter().filter(|e| e.split == split).cloned().collect()
    }

    pub fn seqs(&self, examples: &[QAExample]) -> Result<Vec<ScoredSeq>, CliError> {
        Ok(examples
            .iter()
            .map(|e| answer_seq(&self.vocab, e))
            .collect::<Result<_, _>>()?)
    }

    /// Question paired with the option at `pick(q)`.
    pub fn mcq_seqs(&self, lang: &str, pick: impl Fn(&MCQExample) -> usize) -> Result<Vec<ScoredSeq>, CliError> {
        Ok(self.mcq[lang]
            .iter()
            .map(|q| qa_seq(&self.vocab, &q.question, &q.options[pick(q)]))
            .collect::<Result<_, _>>()?)
    }

    pub fn general_seqs(&self, lang: &str) -> Result<Vec<ScoredSeq>, CliError> {
        Ok(self.general[lang]
            .iter()
            .map(|s| sentence_seq(&self.vocab, s))
            .collect::<Result<_, _>>()?)
    }

    pub fn general_tokens(&self, lang: &str) -> Result<Vec<Vec<u32>>, CliError> {
        Ok(self.general[lang]
            .iter()
            .map(|s| self.vocab.tokenize(s))
            .collect::<Result<_, _>>()?)
    }

    /// Longest network input over every sequence any stage will score.
    pub fn max_input_len(&self) -> Result<usize, CliError> {
        let mut longest = 0;
        for lang in &self.languages {
            for e in &self.qa[lang] {
                for a in std::iter::once(&e.answer)
                    .chain(std::iter::once(&e.paraphrased_answer))
                    .chain(&e.perturbed_answers)
                {
                    longest = longest.max(qa_seq(&self.vocab, &e.question, a)?.input_len());
                }
            }
            for q in &self.mcq[lang] {
                for s in option_seqs(&self.vocab, q)? {
                    longest = longest.max(s.input_len());
                }
            }
            for s in self.general_seqs(lang)? {
                longest = longest.max(s.input_len());
            }
        }
        Ok(longest)
    }

    pub fn load(ctx: &Ctx) -> Result<Self, CliError> {
        let ws = &ctx.ws;
        let languages = ctx.cfg.language_ids();
        let mut qa = BTreeMap::new();
        let mut mcq = BTreeMap::new();
        let mut general = BTreeMap::new();
        for l in &languages {
            qa.insert(l.clone(), read_qa_jsonl(ws.path(&Workspace::qa(l)))?);
            mcq.insert(l.clone(), read_mcq_jsonl(ws.path(&Workspace::mcq(l)))?);
            general.insert(l.clone(), read_lines(&ws.read_to_string(&Workspace::general(l))?));
        }
        let vocab: Vocab = serde_json::from_str(&ws.read_to_string(&Workspace::vocab())?)
            .map_err(|e| CliError::runtime("data/vocab.json", e))?;
        Ok(Self {
            languages,
            qa,
            mcq,
            general,
            vocab,
        })
    }

    pub fn distances(ctx: &Ctx) -> Result<DistanceMatrices, CliError> {
        Ok(read_distance_dir(ctx.ws.path(&Workspace::distance_dir()))?)
    }
}

fn read_lines(text: &str) -> Vec<String> {
    text.lines().filter(|l| !l.is_empty()).map(String::from).collect()
}

struct Generated {
    qa: Vec<QAExample>,
    mcq: Vec<MCQExample>,
    general: Vec<String>,
}

fn synthesize(ctx: &Ctx) -> Result<BTreeMap<String, Generated>, CliError> {
    let d = &ctx.cfg.data;
    let seed = |label: &str| ctx.seed("gen-data", "", label);
    let profiles = generate_profiles(d.n_profiles, d.facts_per_profile, seed("profiles"))?;
    let real = match d.n_real_authors {
        0 => None,
        n => Some(generate_real_authors(n, d.real_facts_per_author, seed("real-authors"))?),
    };
    let world = match d.n_world_countries {
        0 => None,
        n => Some(generate_world_facts(n, seed("world-facts"))?),
    };
    let pairs = match d.n_mcq {
        0 => Vec::new(),
        n => default_stereo_pairs(n, seed("stereo-pairs"))?,
    };
    let mut out = BTreeMap::new();
    for spec in &ctx.cfg.languages {
        // Render and split seeds are shared by all languages so the corpora stay parallel.
        let tofu = render_language_with(&profiles, spec, seed("render"), d.n_perturbed)?;
        let (forget, retain) = split_forget_retain(&tofu, d.forget_fraction, seed("split"))?;
        let mut qa = forget;
        qa.extend(retain);
        for facts in real.iter().chain(&world) {
            qa.extend(render_language_with(facts, spec, seed("render"), d.n_perturbed)?);
        }
        qa.sort_by(|a, b| a.id.cmp(&b.id));
        let mcq = if pairs.is_empty() {
            Vec::new()
        } else {
            generate_mcq(&pairs, spec, d.n_distractors, seed("mcq"))?
        };
        let general = match d.n_general {
            0 => Vec::new(),
            n => general_corpus(spec, n, seed("general"))?,
        };
        out.insert(spec.lang_id.clone(), Generated { qa, mcq, general });
    }
    Ok(out)
}

fn ingest(ctx: &Ctx) -> Result<BTreeMap<String, Generated>, CliError> {
    let ing = ctx.cfg.ingest.as_ref().expect("ingest configured");
    let mut out = BTreeMap::new();
    for l in &ing.languages {
        let qa_path = ing.dir.join(format!("{l}.qa.jsonl"));
        if !qa_path.is_file() {
            return Err(CliError::Config(format!(
                "ingest file {} does not exist",
                qa_path.display()
            )));
        }
        let qa = read_qa_jsonl(&qa_path).map_err(|e| CliError::runtime(qa_path.display().to_string(), e))?;
        if !qa.iter().any(|e| e.split == Split::Forget) {
            return Err(CliError::Config(format!(
                "{} has no forget-split examples",
                qa_path.display()
            )));
        }
        let mcq_path = ing.dir.join(format!("{l}.mcq.jsonl"));
        let mcq = if mcq_path.is_file() {
            read_mcq_jsonl(&mcq_path).map_err(|e| CliError::runtime(mcq_path.display().to_string(), e))?
        } else {
            Vec::new()
        };
        let general_path = ing.dir.join(format!("{l}.general.txt"));
        let general = if general_path.is_file() {
            read_lines(&fs::read_to_string(&general_path).map_err(|e| CliError::io(&general_path, e))?)
        } else {
            Vec::new()
        };
        out.insert(l.clone(), Generated { qa, mcq, general });
    }
    Ok(out)
}

fn build_vocab(ctx: &Ctx, data: &BTreeMap<String, Generated>) -> Result<Vocab, CliError> {
    let mut texts: Vec<&str> = Vec::new();
    for g in data.values() {
        for e in &g.qa {
            texts.extend([e.question.as_str(), e.answer.as_str(), e.paraphrased_answer.as_str()]);
            texts.extend(e.perturbed_answers.iter().map(String::as_str));
        }
        for q in &g.mcq {
            texts.push(&q.question);
            texts.extend(q.options.iter().map(String::as_str));
        }
        texts.extend(g.general.iter().map(String::as_str));
    }
    Ok(Vocab::build(ctx.cfg.data.tokenizer, texts)?)
}

fn distance_matrices(ctx: &Ctx) -> Result<Option<DistanceMatrices>, CliError> {
    let langs = ctx.cfg.language_ids();
    if langs.len() < 2 {
        return Ok(None);
    }
    match &ctx.cfg.distances {
        DistanceSource::Synthetic(_) => {
            if ctx.cfg.ingest.is_some() {
                return Err(CliError::Config(
                    "synthetic distances need synthetic languages; give distances.dir".into(),
                ));
            }
            Ok(Some(synthetic_distances(&ctx.cfg.languages)?))
        }
        DistanceSource::Dir { dir } => {
            if !dir.is_dir() {
                return Err(CliError::Config(format!(
                    "distance directory {} does not exist",
                    dir.display()
                )));
            }
            let d = read_distance_dir(dir).map_err(|e| CliError::runtime(dir.display().to_string(), e))?;
            Ok(Some(reorder(&d, &langs)?))
        }
    }
}

/// Restricts and reorders ingested matrices to the configured languages.
fn reorder(d: &DistanceMatrices, langs: &[String]) -> Result<DistanceMatrices, CliError> {
    let idx: Vec<usize> = langs
        .iter()
        .map(|l| {
            d.languages
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| CliError::Config(format!("distance matrices have no row for language {l:?}")))
        })
        .collect::<Result<_, _>>()?;
    let pick = |m: &Vec<Vec<f64>>| idx.iter().map(|&i| idx.iter().map(|&j| m[i][j]).collect()).collect();
    Ok(DistanceMatrices {
        languages: langs.to_vec(),
        syntactic: pick(&d.syntactic),
        inventory: pick(&d.inventory),
        phonological: d.phonological.as_ref().map(pick),
    })
}

pub fn gen_data(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let data = if ctx.cfg.ingest.is_some() {
        ingest(ctx)?
    } else {
        synthesize(ctx)?
    };
    let vocab = build_vocab(ctx, &data)?;
    let ws = &ctx.ws;
    let mut written = Vec::new();
    for (lang, g) in &data {
        let qa = Workspace::qa(lang);
        write_qa_jsonl(ws.ensure_parent(&qa)?, &g.qa)?;
        let mcq = Workspace::mcq(lang);
        write_mcq_jsonl(ws.ensure_parent(&mcq)?, &g.mcq)?;
        let general = Workspace::general(lang);
        let mut text = g.general.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        ws.write(&general, text.as_bytes())?;
        written.extend([qa, mcq, general]);
    }
    let mut vocab_json = serde_json::to_vec_pretty(&vocab).expect("vocab serializes");
    vocab_json.push(b'\n');
    write_atomic(&ws.path(&Workspace::vocab()), &vocab_json)?;
    written.push(Workspace::vocab());
    if let Some(d) = distance_matrices(ctx)? {
        let dir = Workspace::distance_dir();
        fs::create_dir_all(ws.path(&dir)).map_err(|e| CliError::io(ws.path(&dir), e))?;
        write_distance_dir(ws.path(&dir), &d)?;
        for kind in DistanceKind::ALL {
            if d.get(kind).is_some() {
                written.push(format!("{dir}/{}.csv", kind.as_str()));
            }
        }
    }
    Ok(written)
}
