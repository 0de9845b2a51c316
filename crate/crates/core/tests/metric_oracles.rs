//! Evaluation metrics against brute-force oracles on a four-token vocabulary.
//!
//! The oracle never uses the batched scoring path: every conditional
//! probability comes from a separate forward pass over the exact prefix, and
//! the answer distribution is checked to sum to one by enumerating all
//! sequences of the answer length.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use unlearn_core::corpus::{MCQExample, QAExample, Split, TokenizerKind, Vocab};
use unlearn_core::eval::{example_metrics, mcq_rates, normalized_probability, perplexity, truth_ratio};
use unlearn_core::model::{Model, ModelConfig};
use unlearn_core::tensor::Tensor;

const V: usize = 4;
const BOS: u32 = 1;
const SEP: u32 = 2;

fn vocab() -> Vocab {
    Vocab::from_tokens(
        TokenizerKind::Word,
        ["<pad>", "<bos>", "<sep>", "x"].map(String::from).to_vec(),
    )
    .unwrap()
}

fn config() -> ModelConfig {
    ModelConfig {
        vocab_size: V,
        embed_dim: 8,
        n_layers: 1,
        n_heads: 2,
        ff_mult: 2,
        context_len: 12,
        init_seed: 11,
    }
}

/// A seeded model whose output distributions are far from uniform.
fn seeded_model() -> Model<f64> {
    let base = Model::<f64>::init(config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let noise = Normal::new(0.0, 0.7).unwrap();
    let params = base
        .params()
        .iter()
        .map(|p| {
            let data = p.data().iter().map(|x| x + noise.sample(&mut rng)).collect();
            Tensor::new(p.shape().to_vec(), data).unwrap()
        })
        .collect();
    Model::from_params(config(), params).unwrap()
}

/// `P(next | prefix)` from one forward pass over exactly `prefix`.
fn next_prob(model: &Model<f64>, prefix: &[u32], next: u32) -> f64 {
    let rows = model.next_token_logprobs(prefix).unwrap();
    rows.last().unwrap()[next as usize].exp()
}

fn oracle_answer_prob(model: &Model<f64>, question: &[u32], answer: &[u32]) -> f64 {
    let mut prefix = vec![BOS];
    prefix.extend_from_slice(question);
    prefix.push(SEP);
    let mut p = 1.0;
    for &t in answer {
        p *= next_prob(model, &prefix, t);
        prefix.push(t);
    }
    p
}

fn oracle_normalized(model: &Model<f64>, question: &[u32], answer: &[u32]) -> f64 {
    oracle_answer_prob(model, question, answer).powf(1.0 / answer.len() as f64)
}

fn all_sequences(len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..V as u32).map(move |t| {
                    let mut n = s.clone();
                    n.push(t);
                    n
                })
            })
            .collect();
    }
    out
}

fn xs(n: usize) -> String {
    vec!["x"; n].join(" ")
}

fn ids(n: usize) -> Vec<u32> {
    vec![3; n]
}

fn qa(q: usize, a: usize, para: usize, pert: &[usize]) -> QAExample {
    QAExample {
        id: format!("q{q}-a{a}"),
        language: "en".into(),
        subject_id: "s".into(),
        split: Split::Forget,
        question: xs(q),
        answer: xs(a),
        paraphrased_answer: xs(para),
        perturbed_answers: pert.iter().map(|&n| xs(n)).collect(),
    }
}

#[test]
fn answer_distribution_sums_to_one() {
    let m = seeded_model();
    for len in 1..=4 {
        let total: f64 = all_sequences(len)
            .iter()
            .map(|a| oracle_answer_prob(&m, &[3, 0], a))
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "length {len}: {total}");
    }
}

#[test]
fn answer_logprob_matches_enumeration() {
    let m = seeded_model();
    for q in [vec![3], vec![3, 3, 0], vec![0, 1, 2, 3]] {
        for a in all_sequences(3) {
            let got = m.answer_logprob(&q, &a).unwrap();
            let want = oracle_answer_prob(&m, &q, &a);
            assert!((got.total_logprob.exp() - want).abs() < 1e-9);
            assert!((got.normalized_prob - want.powf(1.0 / 3.0)).abs() < 1e-9);
        }
    }
}

#[test]
fn normalized_probability_matches_oracle() {
    let (m, v) = (seeded_model(), vocab());
    for q in 1..=3 {
        for a in 1..=4 {
            let got = normalized_probability(&m, &v, &xs(q), &xs(a)).unwrap();
            let want = oracle_normalized(&m, &ids(q), &ids(a));
            assert!((got - want).abs() < 1e-9, "q{q} a{a}: {got} vs {want}");
        }
    }
}

#[test]
fn truth_ratio_matches_oracle() {
    let (m, v) = (seeded_model(), vocab());
    let examples = [qa(2, 1, 2, &[3, 4, 5]), qa(1, 3, 1, &[2]), qa(3, 2, 4, &[1, 5])];
    let batched = example_metrics(&m, &v, &examples).unwrap();
    for (ex, b) in examples.iter().zip(&batched) {
        let q = ids(ex.question.split(' ').count());
        let norm = |s: &str| oracle_normalized(&m, &q, &ids(s.split(' ').count()));
        let pert: f64 = ex.perturbed_answers.iter().map(|p| norm(p)).sum::<f64>() / ex.perturbed_answers.len() as f64;
        let want = pert / norm(&ex.paraphrased_answer);
        assert!((truth_ratio(&m, &v, ex).unwrap() - want).abs() < 1e-9);
        assert!((b.truth_ratio - want).abs() < 1e-9);
        assert!((b.normalized_prob - norm(&ex.answer)).abs() < 1e-9);
    }
}

#[test]
fn perplexity_matches_oracle() {
    let m = seeded_model();
    let corpus = vec![vec![3, 3], vec![0, 3, 2, 1], vec![3]];
    let (mut nll, mut n) = (0.0, 0usize);
    for s in &corpus {
        let mut prefix = vec![BOS];
        for &t in s {
            nll -= next_prob(&m, &prefix, t).ln();
            n += 1;
            prefix.push(t);
        }
    }
    let want = (nll / n as f64).exp();
    assert!((perplexity(&m, &corpus).unwrap() - want).abs() < 1e-9);
}

#[test]
fn mcq_rates_match_oracle() {
    let (m, v) = (seeded_model(), vocab());
    let mut mcqs = Vec::new();
    for q in 1..=4 {
        for (s, u) in [(0usize, 1usize), (1, 2), (2, 0)] {
            mcqs.push(MCQExample {
                id: format!("m{q}-{s}"),
                language: "en".into(),
                question: xs(q),
                options: vec![xs(1), xs(2), xs(3)],
                stereotype_index: s,
                unknown_index: u,
            });
        }
    }
    let (mut biased, mut unknown) = (0usize, 0usize);
    for q in &mcqs {
        let qi = ids(q.question.split(' ').count());
        let probs: Vec<f64> = (1..=3).map(|n| oracle_normalized(&m, &qi, &ids(n))).collect();
        let mut best = 0;
        for i in 1..probs.len() {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        if best == q.stereotype_index {
            biased += 1;
        } else if best == q.unknown_index {
            unknown += 1;
        }
    }
    let n = mcqs.len() as f64;
    let r = mcq_rates(&m, &v, &mcqs).unwrap();
    assert!((r.biased_rate - biased as f64 / n).abs() < 1e-9);
    assert!((r.unknown_rate - unknown as f64 / n).abs() < 1e-9);
    assert!((r.other_rate - (mcqs.len() - biased - unknown) as f64 / n).abs() < 1e-9);
    assert!((r.biased_rate + r.unknown_rate + r.other_rate - 1.0).abs() < 1e-12);
}

#[test]
fn uniform_model_is_exact() {
    let (m, v) = (Model::<f64>::zeros(config()).unwrap(), vocab());
    assert_eq!(normalized_probability(&m, &v, &xs(2), &xs(3)).unwrap(), 1.0 / V as f64);
    assert_eq!(truth_ratio(&m, &v, &qa(2, 1, 2, &[3, 4])).unwrap(), 1.0);
    assert_eq!(perplexity(&m, &[vec![3, 3, 0], vec![2]]).unwrap(), V as f64);
}
