//! Exact reverse-mode gradients through the SLiCE stack, AdamW with a
//! warm-up/cosine schedule, and the token-tagging training loop.

mod backward;
mod optim;

use std::io::Write;

use rayon::prelude::*;

pub use backward::{backward, batch_loss, gradient_check, Example, GroupCheck};
pub use optim::{adamw_step, lr_schedule, AdamW, OptimConfig};

use crate::error::{Error, Result};
use crate::linalg::Rng;
use crate::model::{predict_batch, SliceModel};
use crate::tasks::{sample_batch, LengthSampler, Task, TaskInstance};

/// Which accuracy a task is judged by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Every position.
    All,
    /// Final position only.
    Final,
}

impl Task {
    /// All positions for A5, the final position for the regular tasks.
    pub fn primary_metric(&self) -> Metric {
        match self {
            Task::A5 => Metric::All,
            _ => Metric::Final,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluate every this many steps (and after the last step).
    pub eval_every: usize,
    /// Validation sequences per evaluation length.
    pub eval_samples: usize,
    /// Share of each A5 batch made of length-2 sequences.
    pub short_fraction: f64,
    /// Stop once every evaluation length reaches this accuracy.
    pub target_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optim: OptimConfig::default(),
            batch_size: 64,
            seed: 0,
            eval_every: 500,
            eval_samples: 256,
            short_fraction: 0.125,
            target_acc: None,
        }
    }
}

/// Accuracy of one evaluation length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthAccuracy {
    pub length: usize,
    pub acc_all: f64,
    pub acc_final: f64,
}

impl LengthAccuracy {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::All => self.acc_all,
            Metric::Final => self.acc_final,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub lr: f64,
    /// Mean training loss since the previous record.
    pub train_loss: f64,
    pub accuracy: Vec<LengthAccuracy>,
}

impl EvalRecord {
    pub fn min_acc(&self, m: Metric) -> f64 {
        self.accuracy.iter().map(|a| a.get(m)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub records: Vec<EvalRecord>,
    pub optimizer: AdamW,
    pub steps_done: usize,
}

/// Fraction of correct argmax predictions over all positions and over final
/// positions.
pub fn evaluate(model: &SliceModel, instances: &[TaskInstance]) -> Result<(f64, f64)> {
    let tokens: Vec<Vec<usize>> = instances.iter().map(|i| i.tokens.clone()).collect();
    let logits = predict_batch(model, &tokens)?;
    let (mut hit_all, mut n_all, mut hit_final) = (0usize, 0usize, 0usize);
    for (inst, lg) in instances.iter().zip(&logits) {
        for (j, &y) in inst.labels.iter().enumerate() {
            let row = lg.row(j);
            let pred = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0;
            hit_all += usize::from(pred == y);
            n_all += 1;
            if j + 1 == inst.labels.len() {
                hit_final += usize::from(pred == y);
            }
        }
    }
    if instances.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    Ok((hit_all as f64 / n_all as f64, hit_final as f64 / instances.len() as f64))
}

/// Fixed validation sets, one per length.
pub fn validation_sets(task: Task, lengths: &[usize], samples: usize, seed: u64) -> Result<Vec<(usize, Vec<TaskInstance>)>> {
    lengths
        .iter()
        .map(|&len| {
            let mut rng = Rng::new(seed).child(len as u64);
            let set = (0..samples).map(|_| task.generate(&mut rng, len)).collect::<Result<Vec<_>>>()?;
            Ok((len, set))
        })
        .collect()
}

pub fn evaluate_lengths(model: &SliceModel, sets: &[(usize, Vec<TaskInstance>)]) -> Result<Vec<LengthAccuracy>> {
    sets.par_iter()
        .map(|(len, set)| {
            let (acc_all, acc_final) = evaluate(model, set)?;
            Ok(LengthAccuracy {
                length: *len,
                acc_all,
                acc_final,
            })
        })
        .collect()
}

const VALIDATION_STREAM: u64 = 0x05ee_d0f7_a11d;

/// Token-tagging training. `on_record` sees every evaluation record as it is
/// produced. Deterministic for a fixed seed.
pub fn train(
    model: &mut SliceModel,
    task: Task,
    train_lengths: &LengthSampler,
    eval_lengths: &[usize],
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&EvalRecord),
) -> Result<TrainLog> {
    cfg.optim.validate()?;
    if cfg.batch_size == 0 || cfg.eval_every == 0 {
        return Err(Error::Config("batch_size and eval_every must be positive".into()));
    }
    let sets = validation_sets(task, eval_lengths, cfg.eval_samples, cfg.seed ^ VALIDATION_STREAM)?;
    let mut data_rng = Rng::new(cfg.seed).child(1);
    let mut opt = AdamW::new(model.params());
    let mut records = Vec::new();
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    let metric = task.primary_metric();
    let mut step = 0;
    while step < cfg.optim.steps {
        let batch: Vec<Example> = sample_batch(task, train_lengths, cfg.batch_size, cfg.short_fraction, &mut data_rng)?
            .iter()
            .map(TaskInstance::to_example)
            .collect();
        let dropout_seed = Rng::new(cfg.seed).child(2 + step as u64).seed();
        let (loss, grads) = backward(model, &batch, true, dropout_seed)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        let lr = lr_schedule(step, &cfg.optim);
        opt.step(model.params_mut(), &grads, lr, &cfg.optim)
            .map_err(|_| Error::Diverged { step, loss })?;
        loss_sum += loss;
        loss_n += 1;
        step += 1;
        if step % cfg.eval_every == 0 || step == cfg.optim.steps {
            let rec = EvalRecord {
                step,
                lr,
                train_loss: loss_sum / loss_n as f64,
                accuracy: evaluate_lengths(model, &sets)?,
            };
            on_record(&rec);
            let done = cfg.target_acc.is_some_and(|t| rec.min_acc(metric) >= t);
            records.push(rec);
            (loss_sum, loss_n) = (0.0, 0);
            if done {
                break;
            }
        }
    }
    Ok(TrainLog {
        records,
        optimizer: opt,
        steps_done: step,
    })
}

/// Header of the metrics CSV for the given evaluation lengths.
pub fn metrics_header(lengths: &[usize]) -> Vec<String> {
    let mut h = vec!["step".to_string(), "lr".into(), "train_loss".into()];
    for l in lengths {
        h.push(format!("acc_all_{l}"));
        h.push(format!("acc_final_{l}"));
    }
    h
}

/// Writes records as CSV with a header row.
pub fn write_metrics_csv<W: Write>(out: W, lengths: &[usize], records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("metrics CSV: {e}"));
    w.write_record(metrics_header(lengths)).map_err(io)?;
    for r in records {
        let mut row = vec![r.step.to_string(), format!("{:e}", r.lr), format!("{}", r.train_loss)];
        for a in &r.accuracy {
            row.push(format!("{}", a.acc_all));
            row.push(format!("{}", a.acc_final));
        }
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("metrics CSV: {e}")))?;
    Ok(())
}
