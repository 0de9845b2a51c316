//! A small pre-norm causal transformer.
//!
//! Sequences are laid out as `[BOS] question [SEP] answer` (or `[BOS]
//! sentence` for plain text). Position `t` of the output predicts token
//! `t + 1`, so the final token is never fed to the network. Only the tokens
//! from [`ScoredSeq::score_from`] onwards contribute to likelihoods.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::vocab::{BOS_ID, SEP_ID};
use crate::tensor::{Scalar, Tape, Tensor, TensorError, Var};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;
const MASK_VALUE: f64 = -1e9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of {len} positions exceeds the context length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("token id {id} outside vocabulary of size {vocab}")]
    UnknownToken { id: u32, vocab: usize },
    #[error("parameter {name}: expected shape {expected:?}, got {got:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("model is frozen")]
    Frozen,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_mult: usize,
    pub context_len: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 128,
            embed_dim: 64,
            n_layers: 2,
            n_heads: 1,
            ff_mult: 4,
            context_len: 64,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Gain,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2");
        }
        if self.embed_dim < 4 {
            return bad("embed_dim must be at least 4");
        }
        if self.n_layers < 1 {
            return bad("n_layers must be at least 1");
        }
        if self.n_heads < 1 || self.embed_dim % self.n_heads != 0 {
            return bad("n_heads must be positive and divide embed_dim");
        }
        if self.ff_mult < 1 {
            return bad("ff_mult must be at least 1");
        }
        if self.context_len < 1 {
            return bad("context_len must be at least 1");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    /// Parameter names, shapes and kinds in canonical order.
    pub fn layout(&self) -> Vec<ParamSpec> {
        let (v, d, t) = (self.vocab_size, self.embed_dim, self.context_len);
        let (dh, f) = (self.head_dim(), self.ff_mult * self.embed_dim);
        let mut out = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, kind| out.push(ParamSpec { name, shape, kind });
        push("tok_emb".into(), vec![v, d], ParamKind::Weight);
        push("pos_emb".into(), vec![t, d], ParamKind::Weight);
        for l in 0..self.n_layers {
            push(format!("layers.{l}.ln1.gain"), vec![1, d], ParamKind::Gain);
            push(format!("layers.{l}.ln1.bias"), vec![1, d], ParamKind::Bias);
            for h in 0..self.n_heads {
                push(format!("layers.{l}.attn.{h}.q"), vec![d, dh], ParamKind::Weight);
                push(format!("layers.{l}.attn.{h}.k"), vec![d, dh], ParamKind::Weight);
                push(format!("layers.{l}.attn.{h}.v"), vec![d, dh], ParamKind::Weight);
                push(format!("layers.{l}.attn.{h}.o"), vec![dh, d], ParamKind::Weight);
            }
            push(format!("layers.{l}.ln2.gain"), vec![1, d], ParamKind::Gain);
            push(format!("layers.{l}.ln2.bias"), vec![1, d], ParamKind::Bias);
            push(format!("layers.{l}.ff.w1"), vec![d, f], ParamKind::Weight);
            push(format!("layers.{l}.ff.b1"), vec![1, f], ParamKind::Bias);
            push(format!("layers.{l}.ff.w2"), vec![f, d], ParamKind::Weight);
            push(format!("layers.{l}.ff.b2"), vec![1, d], ParamKind::Bias);
        }
        push("ln_f.gain".into(), vec![1, d], ParamKind::Gain);
        push("ln_f.bias".into(), vec![1, d], ParamKind::Bias);
        push("lm_head".into(), vec![d, v], ParamKind::Weight);
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }
}

/// A token sequence whose tokens from `score_from` onwards are scored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredSeq {
    pub tokens: Vec<u32>,
    pub score_from: usize,
}

impl ScoredSeq {
    /// `[BOS] question [SEP] answer`, scoring the answer.
    pub fn question_answer(question: &[u32], answer: &[u32]) -> Self {
        let mut tokens = Vec::with_capacity(question.len() + answer.len() + 2);
        tokens.push(BOS_ID);
        tokens.extend_from_slice(question);
        tokens.push(SEP_ID);
        tokens.extend_from_slice(answer);
        Self {
            tokens,
            score_from: question.len() + 2,
        }
    }

    /// `[BOS] sentence`, scoring every sentence token.
    pub fn sentence(tokens: &[u32]) -> Self {
        let mut all = Vec::with_capacity(tokens.len() + 1);
        all.push(BOS_ID);
        all.extend_from_slice(tokens);
        Self {
            tokens: all,
            score_from: 1,
        }
    }

    pub fn n_scored(&self) -> usize {
        self.tokens.len().saturating_sub(self.score_from)
    }

    /// Number of positions fed to the network.
    pub fn input_len(&self) -> usize {
        self.tokens.len().saturating_sub(1)
    }
}

/// Model parameters in canonical layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: Vec<Tensor<T>>,
    frozen: bool,
}

/// Parameters of a model recorded on a tape, plus shared constants.
pub struct Bound {
    vars: Vec<Var>,
    avg_col: Var,
    ones_row: Var,
    eps: Var,
    masks: HashMap<usize, Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogProbResult {
    pub total_logprob: f64,
    pub per_token_logprobs: Vec<f64>,
    pub normalized_prob: f64,
}

impl LogProbResult {
    fn from_per_token(per_token: Vec<f64>) -> Self {
        let total: f64 = per_token.iter().sum();
        let normalized_prob = (total / per_token.len() as f64).exp();
        Self {
            total_logprob: total,
            per_token_logprobs: per_token,
            normalized_prob,
        }
    }
}

impl<T: Scalar> Model<T> {
    /// Seeded initialization: normal(0, 0.02) weights, zero biases, unit gains.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let params = config
            .layout()
            .into_iter()
            .map(|spec| {
                let n: usize = spec.shape.iter().product();
                let data: Vec<T> = match spec.kind {
                    ParamKind::Weight => (0..n).map(|_| T::from_f64c(normal.sample(&mut rng))).collect(),
                    ParamKind::Bias => vec![T::zero(); n],
                    ParamKind::Gain => vec![T::one(); n],
                };
                Tensor::new(spec.shape, data).expect("layout shapes are positive")
            })
            .collect();
        Ok(Self {
            config,
            params,
            frozen: false,
        })
    }

    /// Every parameter zero: the output distribution is uniform everywhere.
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = config.layout().into_iter().map(|s| Tensor::zeros(s.shape)).collect();
        Ok(Self {
            config,
            params,
            frozen: false,
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<Tensor<T>>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != params.len() {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for (spec, p) in layout.iter().zip(&params) {
            if spec.shape != p.shape() {
                return Err(ModelError::ParamShape {
                    name: spec.name.clone(),
                    expected: spec.shape.clone(),
                    got: p.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            config,
            params,
            frozen: false,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    /// Mutable access for optimizers; refused for frozen models.
    pub fn params_mut(&mut self) -> Result<&mut [Tensor<T>], ModelError> {
        if self.frozen {
            return Err(ModelError::Frozen);
        }
        Ok(&mut self.params)
    }

    pub fn param_names(&self) -> Vec<String> {
        self.config.layout().into_iter().map(|s| s.name).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn unfrozen(mut self) -> Self {
        self.frozen = false;
        self
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config,
            params: self.params.iter().map(Tensor::cast).collect(),
            frozen: self.frozen,
        }
    }

    /// Records the parameters on `tape`, as trainable leaves if `trainable`.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Result<Bound, ModelError> {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let d = self.config.embed_dim;
        let avg_col = tape.constant(Tensor::filled(vec![d, 1], T::from_f64c(1.0 / d as f64)))?;
        let ones_row = tape.constant(Tensor::ones(vec![1, d]))?;
        let eps = tape.constant(Tensor::filled(vec![1, 1], T::from_f64c(LN_EPS)))?;
        Ok(Bound {
            vars,
            avg_col,
            ones_row,
            eps,
            masks: HashMap::new(),
        })
    }

    fn check_ids(&self, tokens: &[u32]) -> Result<(), ModelError> {
        match tokens.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            Some(&id) => Err(ModelError::UnknownToken {
                id,
                vocab: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<(), ModelError> {
        if tokens.len() > self.config.context_len {
            return Err(ModelError::SequenceTooLong {
                len: tokens.len(),
                max: self.config.context_len,
            });
        }
        self.check_ids(tokens)
    }

    fn layer_norm(&self, tape: &mut Tape<T>, b: &Bound, x: Var, gain: Var, bias: Var) -> Result<Var, ModelError> {
        let mean = tape.matmul(x, b.avg_col)?;
        let mean = tape.matmul(mean, b.ones_row)?;
        let centered = tape.sub(x, mean)?;
        let sq = tape.mul(centered, centered)?;
        let var = tape.matmul(sq, b.avg_col)?;
        let var = tape.add(var, b.eps)?;
        let log_var = tape.log(var)?;
        let half = tape.scale(log_var, -0.5)?;
        let inv_std = tape.exp(half)?;
        let inv_std = tape.matmul(inv_std, b.ones_row)?;
        let normed = tape.mul(centered, inv_std)?;
        let scaled = tape.mul(normed, gain)?;
        Ok(tape.add(scaled, bias)?)
    }

    fn causal_mask(tape: &mut Tape<T>, b: &mut Bound, n: usize) -> Result<Var, ModelError> {
        if let Some(&m) = b.masks.get(&n) {
            return Ok(m);
        }
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i + 1..n {
                data[i * n + j] = T::from_f64c(MASK_VALUE);
            }
        }
        let m = tape.constant(Tensor::new(vec![n, n], data)?)?;
        b.masks.insert(n, m);
        Ok(m)
    }

    /// Next-token log-probabilities `[n, V]` for the `n` input tokens.
    pub fn log_probs(&self, tape: &mut Tape<T>, b: &mut Bound, tokens: &[u32]) -> Result<Var, ModelError> {
        self.check_tokens(tokens)?;
        let n = tokens.len();
        if n == 0 {
            return Err(ModelError::EmptyAnswer);
        }
        let cfg = &self.config;
        let p = b.vars.clone();
        let mut idx = 0usize;
        let mut next = || {
            let v = p[idx];
            idx += 1;
            v
        };
        let tok_emb = next();
        let pos_emb = next();
        let tok = tape.gather_rows(tok_emb, tokens.iter().map(|&t| t as usize).collect())?;
        let pos = tape.gather_rows(pos_emb, (0..n).collect())?;
        let mut x = tape.add(tok, pos)?;
        let mask = Self::causal_mask(tape, b, n)?;
        let attn_scale = 1.0 / (cfg.head_dim() as f64).sqrt();

        for _ in 0..cfg.n_layers {
            let (g1, b1) = (next(), next());
            let h = self.layer_norm(tape, b, x, g1, b1)?;
            let mut attn: Option<Var> = None;
            for _ in 0..cfg.n_heads {
                let (wq, wk, wv, wo) = (next(), next(), next(), next());
                let q = tape.matmul(h, wq)?;
                let k = tape.matmul(h, wk)?;
                let v = tape.matmul(h, wv)?;
                let kt = tape.transpose(k)?;
                let scores = tape.matmul(q, kt)?;
                let scores = tape.scale(scores, attn_scale)?;
                let scores = tape.add(scores, mask)?;
                let logw = tape.log_softmax_rows(scores)?;
                let w = tape.exp(logw)?;
                let ctx = tape.matmul(w, v)?;
                let out = tape.matmul(ctx, wo)?;
                attn = Some(match attn {
                    Some(acc) => tape.add(acc, out)?,
                    None => out,
                });
            }
            x = tape.add(x, attn.expect("at least one head"))?;

            let (g2, b2) = (next(), next());
            let (w1, bias1, w2, bias2) = (next(), next(), next(), next());
            let h = self.layer_norm(tape, b, x, g2, b2)?;
            let a = tape.matmul(h, w1)?;
            let a = tape.add(a, bias1)?;
            let gate = tape.sigmoid(a)?;
            let act = tape.mul(a, gate)?;
            let f = tape.matmul(act, w2)?;
            let f = tape.add(f, bias2)?;
            x = tape.add(x, f)?;
        }
        let (gf, bf) = (next(), next());
        let head = next();
        let h = self.layer_norm(tape, b, x, gf, bf)?;
        let logits = tape.matmul(h, head)?;
        Ok(tape.log_softmax_rows(logits)?)
    }

    /// Records the summed log-probability of the scored tokens of `seq`.
    /// Returns `(total, log_prob_matrix)`.
    pub fn seq_logprob(&self, tape: &mut Tape<T>, b: &mut Bound, seq: &ScoredSeq) -> Result<(Var, Var), ModelError> {
        if seq.score_from == 0 || seq.n_scored() == 0 {
            return Err(ModelError::EmptyAnswer);
        }
        let input = &seq.tokens[..seq.tokens.len() - 1];
        self.check_ids(&seq.tokens)?;
        let lp = self.log_probs(tape, b, input)?;
        let v = self.config.vocab_size;
        let mut onehot = vec![T::zero(); input.len() * v];
        for t in seq.score_from..seq.tokens.len() {
            onehot[(t - 1) * v + seq.tokens[t] as usize] = T::one();
        }
        let onehot = tape.constant(Tensor::new(vec![input.len(), v], onehot)?)?;
        let picked = tape.mul(lp, onehot)?;
        Ok((tape.sum(picked)?, lp))
    }

    /// Per-token log-probabilities of the scored tokens of each sequence.
    pub fn score_sequences(&self, seqs: &[ScoredSeq]) -> Result<Vec<Vec<f64>>, ModelError> {
        const CHUNK: usize = 32;
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(CHUNK) {
            let mut tape = Tape::new();
            let mut b = self.bind(&mut tape, false)?;
            for seq in chunk {
                let (_, lp) = self.seq_logprob(&mut tape, &mut b, seq)?;
                let lp = tape.value(lp);
                let v = self.config.vocab_size;
                out.push(
                    (seq.score_from..seq.tokens.len())
                        .map(|t| lp.data()[(t - 1) * v + seq.tokens[t] as usize].to_f64c())
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    /// Log-probability of `answer` given `question`.
    pub fn answer_logprob(&self, question: &[u32], answer: &[u32]) -> Result<LogProbResult, ModelError> {
        if answer.is_empty() {
            return Err(ModelError::EmptyAnswer);
        }
        let seq = ScoredSeq::question_answer(question, answer);
        let per_token = self.score_sequences(std::slice::from_ref(&seq))?.remove(0);
        Ok(LogProbResult::from_per_token(per_token))
    }

    /// Full next-token distributions (as log-probabilities) for `tokens`.
    pub fn next_token_logprobs(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut tape = Tape::new();
        let mut b = self.bind(&mut tape, false)?;
        let lp = self.log_probs(&mut tape, &mut b, tokens)?;
        let v = self.config.vocab_size;
        Ok(tape
            .value(lp)
            .data()
            .chunks(v)
            .map(|r| r.iter().map(|x| x.to_f64c()).collect())
            .collect())
    }
}

impl LogProbResult {
    pub fn from_token_logprobs(per_token: Vec<f64>) -> Self {
        Self::from_per_token(per_token)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(v: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: v,
            embed_dim: 8,
            n_layers: 1,
            n_heads: 2,
            ff_mult: 2,
            context_len: 10,
            init_seed: 7,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(4);
        c.n_heads = 3;
        assert!(matches!(Model::<f32>::init(c), Err(ModelError::InvalidConfig(_))));
        c.n_heads = 1;
        c.vocab_size = 1;
        assert!(Model::<f32>::init(c).is_err());
    }

    #[test]
    fn closed_form_param_count() {
        for c in [
            cfg(4),
            ModelConfig::default(),
            ModelConfig {
                n_layers: 3,
                n_heads: 4,
                ..ModelConfig::default()
            },
        ] {
            let (v, d, t, l, f) = (
                c.vocab_size,
                c.embed_dim,
                c.context_len,
                c.n_layers,
                c.ff_mult * c.embed_dim,
            );
            let per_layer = 4 * d + 4 * d * d + 2 * d * f + f + d;
            let expected = v * d + t * d + l * per_layer + 2 * d + d * v;
            assert_eq!(c.param_count(), expected);
            assert_eq!(Model::<f32>::init(c).unwrap().param_count(), expected);
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = Model::<f32>::init(cfg(5)).unwrap();
        let b = Model::<f32>::init(cfg(5)).unwrap();
        assert_eq!(a, b);
        let c = Model::<f32>::init(ModelConfig { init_seed: 8, ..cfg(5) }).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn uniform_model_scores() {
        let m = Model::<f64>::zeros(cfg(4)).unwrap();
        let r = m.answer_logprob(&[3, 2], &[3, 3, 3]).unwrap();
        assert!((r.total_logprob - 3.0 * 0.25f64.ln()).abs() < 1e-12);
        assert!((r.normalized_prob - 0.25).abs() < 1e-12);
    }

    #[test]
    fn total_is_sum_of_per_token() {
        let m = Model::<f64>::init(cfg(6)).unwrap();
        let r = m.answer_logprob(&[3, 4], &[5, 3, 4]).unwrap();
        assert_eq!(r.total_logprob, r.per_token_logprobs.iter().sum::<f64>());
        let one = m.answer_logprob(&[3, 4], &[5]).unwrap();
        assert!((one.normalized_prob - one.total_logprob.exp()).abs() < 1e-15);
    }

    #[test]
    fn error_paths() {
        let m = Model::<f64>::init(cfg(6)).unwrap();
        assert!(matches!(m.answer_logprob(&[3], &[]), Err(ModelError::EmptyAnswer)));
        assert!(matches!(
            m.answer_logprob(&[3], &[9]),
            Err(ModelError::UnknownToken { id: 9, .. })
        ));
        assert!(matches!(
            m.answer_logprob(&[3; 8], &[4, 4]),
            Err(ModelError::SequenceTooLong { .. })
        ));
        // 1 + 7 + 1 + 2 = 11 tokens, 10 inputs: fits exactly.
        assert!(m.answer_logprob(&[3; 7], &[4, 4]).is_ok());
    }

    #[test]
    fn frozen_model_refuses_mutation() {
        let mut m = Model::<f32>::init(cfg(4)).unwrap().frozen();
        assert!(matches!(m.params_mut(), Err(ModelError::Frozen)));
    }

    #[test]
    fn distributions_are_normalized_and_causal() {
        let m = Model::<f64>::init(cfg(7)).unwrap();
        let a = m.next_token_logprobs(&[1, 3, 4, 5, 6]).unwrap();
        for row in &a {
            let s: f64 = row.iter().map(|x| x.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let b = m.next_token_logprobs(&[1, 3, 4, 6, 2]).unwrap();
        for t in 0..3 {
            assert_eq!(a[t], b[t], "position {t} changed");
        }
        let m32 = m.cast::<f32>();
        for row in m32.next_token_logprobs(&[1, 3, 4]).unwrap() {
            let s: f64 = row.iter().map(|x| x.exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}
