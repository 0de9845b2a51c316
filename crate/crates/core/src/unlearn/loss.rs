use crate::model::{Bound, Model, ScoredSeq};
use crate::tensor::{Scalar, Tape, Tensor, Var};

use super::{Objective, UnlearnConfig, UnlearnError};

/// The three batches an objective may draw on.
#[derive(Debug, Clone, Copy, Default)]
pub struct Batches<'a> {
    pub forget: &'a [ScoredSeq],
    pub retain: &'a [ScoredSeq],
    pub kl: &'a [ScoredSeq],
}

/// Loss value and its unweighted components; unused components are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub total: f64,
    pub forget_ce: Option<f64>,
    pub retain_ce: Option<f64>,
    pub kl: Option<f64>,
    pub npo: Option<f64>,
}

impl LossComponents {
    /// Recombines the components with the signs and weights of `cfg`.
    pub fn weighted_sum(&self, cfg: &UnlearnConfig) -> f64 {
        let f = self.forget_ce.unwrap_or(0.0);
        let r = self.retain_ce.unwrap_or(0.0);
        let k = self.kl.unwrap_or(0.0);
        match cfg.objective {
            Objective::Npo => self.npo.unwrap_or(0.0) + cfg.alpha2 * r,
            _ => -cfg.alpha1 * f + cfg.alpha2 * r + cfg.alpha3 * k,
        }
    }
}

fn check_reference<T: Scalar>(model: &Model<T>, reference: &Model<T>) -> Result<(), UnlearnError> {
    if !reference.is_frozen() {
        return Err(UnlearnError::ReferenceNotFrozen);
    }
    let (m, r) = (model.config().vocab_size, reference.config().vocab_size);
    if m != r {
        return Err(UnlearnError::VocabMismatch { model: m, reference: r });
    }
    Ok(())
}

/// Token-weighted mean negative log-likelihood of the scored tokens.
pub fn record_cross_entropy<T: Scalar>(
    tape: &mut Tape<T>,
    model: &Model<T>,
    b: &mut Bound,
    batch: &[ScoredSeq],
) -> Result<Var, UnlearnError> {
    let mut acc: Option<Var> = None;
    let mut n_tokens = 0usize;
    for seq in batch {
        let (total, _) = model.seq_logprob(tape, b, seq)?;
        n_tokens += seq.n_scored();
        acc = Some(match acc {
            Some(a) => tape.add(a, total)?,
            None => total,
        });
    }
    let acc = acc.ok_or(UnlearnError::EmptyBatch("cross-entropy"))?;
    Ok(tape.scale(acc, -1.0 / n_tokens as f64)?)
}

/// Mean over scored positions of `KL(model || reference)` of the next-token
/// distributions. The reference is evaluated off-tape, so it receives no
/// gradient.
pub fn record_kl<T: Scalar>(
    tape: &mut Tape<T>,
    model: &Model<T>,
    b: &mut Bound,
    reference: &Model<T>,
    batch: &[ScoredSeq],
) -> Result<Var, UnlearnError> {
    check_reference(model, reference)?;
    let v = model.config().vocab_size;
    let mut acc: Option<Var> = None;
    let mut n_positions = 0usize;
    for seq in batch {
        if seq.n_scored() == 0 || seq.score_from == 0 {
            return Err(crate::model::ModelError::EmptyAnswer.into());
        }
        let input = &seq.tokens[..seq.tokens.len() - 1];
        let lp = model.log_probs(tape, b, input)?;
        let ref_rows = reference.next_token_logprobs(input)?;
        let ref_lp: Vec<T> = ref_rows.iter().flatten().map(|&x| T::from_f64c(x)).collect();
        let ref_lp = tape.constant(Tensor::new(vec![input.len(), v], ref_lp)?)?;
        let mut mask = vec![T::zero(); input.len() * v];
        for row in seq.score_from - 1..input.len() {
            mask[row * v..(row + 1) * v].fill(T::one());
        }
        let mask = tape.constant(Tensor::new(vec![input.len(), v], mask)?)?;
        let p = tape.exp(lp)?;
        let diff = tape.sub(lp, ref_lp)?;
        let terms = tape.mul(p, diff)?;
        let terms = tape.mul(terms, mask)?;
        let s = tape.sum(terms)?;
        n_positions += seq.n_scored();
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    let acc = acc.ok_or(UnlearnError::EmptyBatch("KL"))?;
    Ok(tape.scale(acc, 1.0 / n_positions as f64)?)
}

/// Mean over forget examples of `(2/beta) * softplus(beta * log(pi / pi_ref))`,
/// which is `(2/beta) * log(1 + ratio^beta)` evaluated in log space.
pub fn record_npo<T: Scalar>(
    tape: &mut Tape<T>,
    model: &Model<T>,
    b: &mut Bound,
    reference: &Model<T>,
    batch: &[ScoredSeq],
    beta: f64,
) -> Result<Var, UnlearnError> {
    check_reference(model, reference)?;
    if batch.is_empty() {
        return Err(UnlearnError::EmptyBatch("NPO forget"));
    }
    let ref_totals = reference.score_sequences(batch)?;
    let mut acc: Option<Var> = None;
    for (seq, ref_lp) in batch.iter().zip(ref_totals) {
        let (total, _) = model.seq_logprob(tape, b, seq)?;
        let ref_total: f64 = ref_lp.iter().sum();
        let r = tape.constant(Tensor::scalar(T::from_f64c(ref_total)))?;
        let log_ratio = tape.sub(total, r)?;
        let z = tape.scale(log_ratio, beta)?;
        let sp = tape.softplus(z)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, sp)?,
            None => sp,
        });
    }
    Ok(tape.scale(acc.expect("non-empty batch"), 2.0 / (beta * batch.len() as f64))?)
}

/// Per-example NPO loss for a given log-ratio, in log space.
pub fn npo_loss(log_ratio: f64, beta: f64) -> f64 {
    let z = beta * log_ratio;
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    2.0 / beta * softplus
}

/// The same loss written as `-(2/beta) * log sigmoid(-beta * log_ratio)`.
pub fn npo_loss_sigmoid_form(log_ratio: f64, beta: f64) -> f64 {
    let z = -beta * log_ratio;
    // log sigmoid(z) = -log(1 + e^-z), split by sign for stability.
    let log_sigmoid = if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    };
    -2.0 / beta * log_sigmoid
}

/// Component variables recorded alongside the total.
struct ComponentVars {
    forget_ce: Option<Var>,
    retain_ce: Option<Var>,
    kl: Option<Var>,
    npo: Option<Var>,
}

fn weighted<T: Scalar>(tape: &mut Tape<T>, acc: Option<Var>, term: Var, w: f64) -> Result<Option<Var>, UnlearnError> {
    let t = tape.scale(term, w)?;
    Ok(Some(match acc {
        Some(a) => tape.add(a, t)?,
        None => t,
    }))
}

fn record_all<T: Scalar>(
    tape: &mut Tape<T>,
    model: &Model<T>,
    b: &mut Bound,
    cfg: &UnlearnConfig,
    reference: Option<&Model<T>>,
    batches: Batches<'_>,
) -> Result<(Var, ComponentVars), UnlearnError> {
    cfg.validate()?;
    let reference = match (cfg.objective.needs_reference(), reference) {
        (true, None) => return Err(UnlearnError::MissingReference(cfg.objective)),
        (_, r) => r,
    };
    let mut c = ComponentVars {
        forget_ce: None,
        retain_ce: None,
        kl: None,
        npo: None,
    };
    if batches.forget.is_empty() {
        return Err(UnlearnError::EmptyBatch("forget"));
    }
    let mut total = None;
    if cfg.objective == Objective::Npo {
        let npo = record_npo(tape, model, b, reference.expect("checked"), batches.forget, cfg.beta)?;
        c.npo = Some(npo);
        total = Some(npo);
    } else {
        let f = record_cross_entropy(tape, model, b, batches.forget)?;
        c.forget_ce = Some(f);
        total = weighted(tape, total, f, -cfg.alpha1)?;
    }
    if cfg.uses_retain() {
        if batches.retain.is_empty() {
            return Err(UnlearnError::EmptyBatch("retain"));
        }
        let r = record_cross_entropy(tape, model, b, batches.retain)?;
        c.retain_ce = Some(r);
        total = weighted(tape, total, r, cfg.alpha2)?;
    }
    if cfg.uses_kl() {
        if batches.kl.is_empty() {
            return Err(UnlearnError::EmptyBatch("KL"));
        }
        let k = record_kl(tape, model, b, reference.expect("checked"), batches.kl)?;
        c.kl = Some(k);
        total = weighted(tape, total, k, cfg.alpha3)?;
    }
    Ok((total.expect("forget term recorded"), c))
}

fn read_components<T: Scalar>(tape: &Tape<T>, total: Var, c: &ComponentVars) -> LossComponents {
    let val = |v: Option<Var>| v.map(|v| tape.value(v).item().to_f64c());
    LossComponents {
        total: tape.value(total).item().to_f64c(),
        forget_ce: val(c.forget_ce),
        retain_ce: val(c.retain_ce),
        kl: val(c.kl),
        npo: val(c.npo),
    }
}

/// Records the objective of `cfg` on `tape` and returns the total loss.
pub fn record_unlearn_loss<T: Scalar>(
    tape: &mut Tape<T>,
    model: &Model<T>,
    b: &mut Bound,
    cfg: &UnlearnConfig,
    reference: Option<&Model<T>>,
    batches: Batches<'_>,
) -> Result<(Var, LossComponents), UnlearnError> {
    let (total, c) = record_all(tape, model, b, cfg, reference, batches)?;
    let comps = read_components(tape, total, &c);
    Ok((total, comps))
}

/// Evaluates a loss recorded by `f` and its gradient with respect to every
/// model parameter, in layout order.
pub fn value_and_grad<T, F>(model: &Model<T>, f: F) -> Result<(f64, Vec<Tensor<T>>), UnlearnError>
where
    T: Scalar,
    F: FnOnce(&mut Tape<T>, &mut Bound) -> Result<Var, UnlearnError>,
{
    let mut tape = Tape::new();
    let mut b = model.bind(&mut tape, true)?;
    let loss = f(&mut tape, &mut b)?;
    let value = tape.value(loss).item().to_f64c();
    let grads = tape.backward(loss)?;
    let out = b
        .vars()
        .iter()
        .zip(model.params())
        .map(|(v, p)| {
            grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
        })
        .collect();
    Ok((value, out))
}

fn eval_only<T, R, F>(model: &Model<T>, f: F) -> Result<R, UnlearnError>
where
    T: Scalar,
    F: FnOnce(&mut Tape<T>, &mut Bound) -> Result<R, UnlearnError>,
{
    let mut tape = Tape::new();
    let mut b = model.bind(&mut tape, false)?;
    f(&mut tape, &mut b)
}

pub fn cross_entropy<T: Scalar>(model: &Model<T>, batch: &[ScoredSeq]) -> Result<f64, UnlearnError> {
    eval_only(model, |tape, b| {
        let v = record_cross_entropy(tape, model, b, batch)?;
        Ok(tape.value(v).item().to_f64c())
    })
}

pub fn kl_to_reference<T: Scalar>(
    model: &Model<T>,
    reference: &Model<T>,
    batch: &[ScoredSeq],
) -> Result<f64, UnlearnError> {
    eval_only(model, |tape, b| {
        let v = record_kl(tape, model, b, reference, batch)?;
        Ok(tape.value(v).item().to_f64c())
    })
}

pub fn unlearn_loss<T: Scalar>(
    cfg: &UnlearnConfig,
    model: &Model<T>,
    reference: Option<&Model<T>>,
    batches: Batches<'_>,
) -> Result<LossComponents, UnlearnError> {
    eval_only(model, |tape, b| {
        Ok(record_unlearn_loss(tape, model, b, cfg, reference, batches)?.1)
    })
}

pub fn unlearn_loss_and_grad<T: Scalar>(
    cfg: &UnlearnConfig,
    model: &Model<T>,
    reference: Option<&Model<T>>,
    batches: Batches<'_>,
) -> Result<(LossComponents, Vec<Tensor<T>>), UnlearnError> {
    let mut comps = LossComponents::default();
    let (_, grads) = value_and_grad(model, |tape, b| {
        let (total, c) = record_unlearn_loss(tape, model, b, cfg, reference, batches)?;
        comps = c;
        Ok(total)
    })?;
    Ok((comps, grads))
}
