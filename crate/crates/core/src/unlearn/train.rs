use std::io::Write;

use rand::seq::SliceRandom;

use super::loss::{record_cross_entropy, unlearn_loss_and_grad, value_and_grad, Batches, LossComponents};
use super::optim::Adam;
use super::{FinetuneConfig, KlDataset, UnlearnConfig, UnlearnError};
use crate::model::{Model, ScoredSeq};
use crate::seed::{self, derive_seed, Rng};
use crate::tensor::Tensor;

/// Training data for one unlearning run.
#[derive(Debug, Clone, Default)]
pub struct UnlearnData {
    pub forget: Vec<ScoredSeq>,
    pub retain: Vec<ScoredSeq>,
    pub general: Vec<ScoredSeq>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: LossComponents,
}

/// Per-step losses. Finetuning records its cross-entropy in the `retain_ce`
/// column, since it is the term being descended.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<TrainRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "total", "forget_ce", "retain_ce", "kl", "npo"])
            .expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let l = &r.loss;
            w.write_record([
                r.step.to_string(),
                l.total.to_string(),
                opt(l.forget_ce),
                opt(l.retain_ce),
                opt(l.kl),
                opt(l.npo),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(self.to_csv().as_bytes())
    }
}

/// Endless stream of indices in reshuffled passes over `0..n`.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl Cycler {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            rng: seed::rng(seed),
        }
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn pick(data: &[ScoredSeq], idx: &[usize]) -> Vec<ScoredSeq> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

fn all_finite(params: &[Tensor<f32>]) -> bool {
    params.iter().all(Tensor::is_finite)
}

/// Shared loop: one epoch is a shuffled pass over `n_main` items in batches
/// of `batch_size`; `step_fn` returns the loss record and gradients.
fn train_loop<F>(
    mut model: Model<f32>,
    n_main: usize,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    order_seed: u64,
    mut step_fn: F,
) -> Result<(Model<f32>, TrainHistory), UnlearnError>
where
    F: FnMut(&Model<f32>, &[usize]) -> Result<(LossComponents, Vec<Tensor<f32>>), UnlearnError>,
{
    if model.is_frozen() {
        return Err(UnlearnError::Frozen);
    }
    let mut history = TrainHistory::default();
    if epochs == 0 {
        return Ok((model, history));
    }
    let mut opt = Adam::new(lr, model.params());
    let mut rng = seed::rng(order_seed);
    let mut order: Vec<usize> = (0..n_main).collect();
    let mut step = 0;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let diverged = |model: &Model<f32>, history: &TrainHistory| UnlearnError::Diverged {
                step,
                last_good: Box::new(model.clone()),
                history: history.clone(),
            };
            let (loss, grads) = match step_fn(&model, chunk) {
                Ok(r) => r,
                Err(e) if e.is_numeric() => return Err(diverged(&model, &history)),
                Err(e) => return Err(e),
            };
            if !loss.total.is_finite() || !all_finite(&grads) {
                return Err(diverged(&model, &history));
            }
            let before = model.clone();
            opt.step(model.params_mut()?, &grads);
            if !all_finite(model.params()) {
                return Err(diverged(&before, &history));
            }
            history.records.push(TrainRecord { step, loss });
            step += 1;
        }
    }
    Ok((model, history))
}

/// Minimizes the token-weighted cross-entropy of `data`.
pub fn run_finetune(
    model: Model<f32>,
    data: &[ScoredSeq],
    cfg: &FinetuneConfig,
) -> Result<(Model<f32>, TrainHistory), UnlearnError> {
    cfg.validate()?;
    if data.is_empty() && cfg.epochs > 0 {
        return Err(UnlearnError::EmptyBatch("finetune"));
    }
    train_loop(
        model,
        data.len(),
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate,
        derive_seed(cfg.seed, &["finetune-order"]),
        |m, idx| {
            let batch = pick(data, idx);
            let (ce, grads) = value_and_grad(m, |tape, b| record_cross_entropy(tape, m, b, &batch))?;
            let loss = LossComponents {
                total: ce,
                retain_ce: Some(ce),
                ..Default::default()
            };
            Ok((loss, grads))
        },
    )
}

/// Runs the objective of `cfg`; an epoch is one pass over the forget set,
/// with retain and KL batches drawn from their own seeded streams.
pub fn run_unlearn(
    model: Model<f32>,
    reference: Option<&Model<f32>>,
    data: &UnlearnData,
    cfg: &UnlearnConfig,
) -> Result<(Model<f32>, TrainHistory), UnlearnError> {
    cfg.validate()?;
    let epochs = cfg.epochs();
    if epochs > 0 && data.forget.is_empty() {
        return Err(UnlearnError::EmptyBatch("forget"));
    }
    let kl_data: &[ScoredSeq] = match cfg.kl_source() {
        KlDataset::Retain => &data.retain,
        KlDataset::General => &data.general,
    };
    if epochs > 0 && cfg.uses_retain() && data.retain.is_empty() {
        return Err(UnlearnError::EmptyBatch("retain"));
    }
    if epochs > 0 && cfg.uses_kl() && kl_data.is_empty() {
        return Err(UnlearnError::EmptyBatch("KL"));
    }
    let mut retain_stream = Cycler::new(data.retain.len(), derive_seed(cfg.seed, &["retain-stream"]));
    let mut kl_stream = Cycler::new(kl_data.len(), derive_seed(cfg.seed, &["kl-stream"]));
    train_loop(
        model,
        data.forget.len(),
        epochs,
        cfg.batch_size,
        cfg.learning_rate,
        derive_seed(cfg.seed, &["forget-order"]),
        |m, idx| {
            let forget = pick(&data.forget, idx);
            let retain = if cfg.uses_retain() {
                pick(&data.retain, &retain_stream.take(cfg.batch_size))
            } else {
                Vec::new()
            };
            let kl = if cfg.uses_kl() {
                pick(kl_data, &kl_stream.take(cfg.batch_size))
            } else {
                Vec::new()
            };
            let batches = Batches {
                forget: &forget,
                retain: &retain,
                kl: &kl,
            };
            unlearn_loss_and_grad(cfg, m, reference, batches)
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::unlearn::{cross_entropy, Objective};

    fn model() -> Model<f32> {
        Model::init(ModelConfig {
            vocab_size: 8,
            embed_dim: 8,
            n_layers: 1,
            n_heads: 1,
            ff_mult: 2,
            context_len: 8,
            init_seed: 1,
        })
        .unwrap()
    }

    fn toy() -> Vec<ScoredSeq> {
        vec![
            ScoredSeq::question_answer(&[3], &[4, 5]),
            ScoredSeq::question_answer(&[4], &[6, 7]),
            ScoredSeq::question_answer(&[5], &[3, 3]),
            ScoredSeq::question_answer(&[6], &[7, 4]),
        ]
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let m = model();
        let cfg = FinetuneConfig {
            epochs: 0,
            ..Default::default()
        };
        let (out, hist) = run_finetune(m.clone(), &toy(), &cfg).unwrap();
        assert_eq!(out, m);
        assert!(hist.records.is_empty());
    }

    #[test]
    fn finetune_lowers_ce_and_is_reproducible() {
        let cfg = FinetuneConfig {
            epochs: 30,
            batch_size: 2,
            learning_rate: 1e-2,
            seed: 4,
        };
        let before = cross_entropy(&model(), &toy()).unwrap();
        let (a, ha) = run_finetune(model(), &toy(), &cfg).unwrap();
        let (b, hb) = run_finetune(model(), &toy(), &cfg).unwrap();
        assert!(cross_entropy(&a, &toy()).unwrap() < before * 0.5);
        assert_eq!(a, b);
        assert_eq!(ha.to_csv(), hb.to_csv());
        assert_eq!(ha.records.len(), 60);
    }

    #[test]
    fn graddiff_raises_forget_ce() {
        let ft = FinetuneConfig {
            epochs: 30,
            batch_size: 2,
            learning_rate: 1e-2,
            seed: 4,
        };
        let (m, _) = run_finetune(model(), &toy(), &ft).unwrap();
        let data = UnlearnData {
            forget: toy()[..1].to_vec(),
            retain: toy()[1..].to_vec(),
            general: Vec::new(),
        };
        let before = cross_entropy(&m, &data.forget).unwrap();
        let reference = m.clone().frozen();
        let cfg = UnlearnConfig {
            learning_rate: 1e-2,
            ..UnlearnConfig::new(Objective::Graddiff)
        };
        let (u, hist) = run_unlearn(m, None, &data, &cfg).unwrap();
        assert!(cross_entropy(&u, &data.forget).unwrap() > before);
        assert_eq!(hist.records.len(), 5);
        let csv = hist.to_csv();
        assert!(csv.starts_with("step,total,forget_ce,retain_ce,kl,npo\n0,"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",,"));

        let cfg = UnlearnConfig {
            learning_rate: 1e-2,
            ..UnlearnConfig::new(Objective::GraddiffKl)
        };
        let snapshot = reference.clone();
        run_unlearn(reference.clone().unfrozen(), Some(&reference), &data, &cfg).unwrap();
        assert_eq!(reference, snapshot);
    }

    #[test]
    fn frozen_and_divergent_runs() {
        let cfg = FinetuneConfig::default();
        assert!(matches!(
            run_finetune(model().frozen(), &toy(), &cfg),
            Err(UnlearnError::Frozen)
        ));

        let data = UnlearnData {
            forget: toy(),
            retain: toy(),
            general: Vec::new(),
        };
        let cfg = UnlearnConfig {
            learning_rate: 1e36,
            epochs: Some(200),
            alpha2: 0.0,
            ..UnlearnConfig::new(Objective::Graddiff)
        };
        match run_unlearn(model(), None, &data, &cfg) {
            Err(UnlearnError::Diverged {
                step,
                last_good,
                history,
            }) => {
                assert_eq!(history.records.len(), step);
                assert!(all_finite(last_good.params()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
