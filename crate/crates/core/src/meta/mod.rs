//! Meta-learning: per-instance latent fitting (inner loop), shared-weight
//! updates (outer loop), inference-time adaptation and imputation.

mod checkpoint;
mod gradcheck;
mod task;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_masking, znorm_metrics, MaskSpec, TimeSeriesInstance};
use crate::embedding::DelayConfig;
use crate::error::{Error, Result};
use crate::model::{init_params, LatentCode, ModelConfig, ModelParams, Weights};
use crate::seeding;
use crate::tensor::{Tape, Tensor, Var};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use gradcheck::{pipeline_gradcheck, PIPELINE_TOLERANCE};
pub use task::{build_tasks, Layout, Reconstruction, Task, TaskOptions};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Inner-loop step size `α` on the latent code.
    pub inner_lr: f64,
    /// Adam step size `η` on the shared weights.
    pub outer_lr: f64,
    pub inner_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the first-difference penalty on reconstructed series.
    pub tv_weight: f64,
    /// Delay dimension; `None` chooses per series.
    pub delay_m: Option<usize>,
    pub delay_lag: usize,
    /// Masked instance normalization (disable for ablations).
    pub normalize: bool,
    pub layout: Layout,
    /// Fraction of tasks held out for model selection.
    pub validation_fraction: f64,
    /// Fraction of a validation series' observed entries hidden for scoring.
    pub validation_hide: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            inner_lr: 1e-2,
            outer_lr: 5e-4,
            inner_steps: 3,
            batch_size: 8,
            epochs: 20,
            tv_weight: 1e-4,
            delay_m: None,
            delay_lag: 1,
            normalize: true,
            layout: Layout::Series,
            validation_fraction: 0.1,
            validation_hide: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let err = |field: &str, msg: &str| Err(Error::Config(format!("train.{field}: {msg}")));
        if !(self.inner_lr.is_finite() && self.inner_lr >= 0.0) {
            return err("inner_lr", "must be finite and >= 0");
        }
        if !(self.outer_lr.is_finite() && self.outer_lr >= 0.0) {
            return err("outer_lr", "must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be positive");
        }
        if !(self.tv_weight.is_finite() && self.tv_weight >= 0.0) {
            return err("tv_weight", "must be finite and >= 0");
        }
        if self.delay_m == Some(0) || self.delay_lag == 0 {
            return err("delay_m", "delay dimension and lag must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return err("validation_fraction", "must be in [0, 1)");
        }
        if !(self.validation_hide > 0.0 && self.validation_hide < 1.0) {
            return err("validation_hide", "must be in (0, 1)");
        }
        Ok(())
    }

    pub fn task_options(&self) -> TaskOptions {
        TaskOptions {
            delay: self.delay_m.map(|m| DelayConfig { m, delta: self.delay_lag }),
            normalize: self.normalize,
        }
    }
}

/// Adam moments laid out like the weights they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Weights<Tensor>,
    pub second: Weights<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(weights: &Weights<Tensor>) -> Self {
        let zeros = weights.map(|_, t| Tensor::zeros(t.shape()));
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `weights` along `grads`.
    pub fn update(&mut self, weights: &mut Weights<Tensor>, grads: &Weights<Tensor>, lr: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let moments = self.first.entries_mut().into_iter().zip(self.second.entries_mut());
        for ((w, g), (m, v)) in weights.entries_mut().into_iter().zip(grads.entries()).zip(moments) {
            let entries = w.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut());
            for (((w, &g), m), v) in entries {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Loss of a task on the tape: mean squared error over observed cells plus
/// `tv_weight` times the mean squared first difference of the
/// reconstructed series.
pub(crate) fn loss_on_tape(tape: &mut Tape, w: &Weights<Var>, task: &Task, phi: Var, tv_weight: f64) -> Result<Var> {
    let pred = crate::model::grid_taped(tape, w, &task.input, phi)?;
    let labels = tape.constant(task.labels.clone());
    let weights = tape.constant(task.cell_weights.clone());
    let diff = tape.sub(pred, labels)?;
    let sq = tape.square(diff);
    let weighted = tape.mul(sq, weights)?;
    let data = tape.sum(weighted, None)?;
    if tv_weight == 0.0 {
        return Ok(data);
    }
    let d = tape.sparse_map(pred, task.variation.clone())?;
    let d2 = tape.square(d);
    let tv = tape.mean(d2, None)?;
    let tv = tape.scale(tv, tv_weight);
    tape.add(data, tv)
}

/// Loss of `task` at latent `phi`.
pub fn instance_loss(task: &Task, phi: &LatentCode, params: &ModelParams, config: &TrainConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let w = params.weights.record(&mut tape, false);
    let p = tape.constant(phi.as_row());
    let loss = loss_on_tape(&mut tape, &w, task, p, config.tv_weight)?;
    Ok(tape.value(loss).item())
}

/// Gradient of the task loss with respect to the latent code only.
fn latent_gradient(task: &Task, phi: &LatentCode, params: &ModelParams, tv_weight: f64) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let w = params.weights.record(&mut tape, false);
    let p = tape.param(phi.as_row());
    let loss = loss_on_tape(&mut tape, &w, task, p, tv_weight)?;
    let value = tape.value(loss).item();
    let mut grads = tape.backward(loss)?;
    let g = grads.take(p).map(Tensor::into_data).unwrap_or_else(|| vec![0.0; phi.dim()]);
    Ok((value, g))
}

/// `steps` gradient steps on the latent code from zero; the weights are
/// left untouched.
pub fn adapt_latent(task: &Task, params: &ModelParams, lr: f64, steps: usize, tv_weight: f64) -> Result<LatentCode> {
    let mut phi = params.zero_latent();
    for step in 0..steps {
        let (_, g) = latent_gradient(task, &phi, params, tv_weight)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite latent gradient at inner step {} of task `{}`",
                step + 1,
                task.key
            )));
        }
        phi.values.iter_mut().zip(&g).for_each(|(p, g)| *p -= lr * g);
    }
    Ok(phi)
}

/// Inner loop with the configured step size and step count.
pub fn inner_adapt(task: &Task, params: &ModelParams, config: &TrainConfig) -> Result<LatentCode> {
    adapt_latent(task, params, config.inner_lr, config.inner_steps, config.tv_weight)
}

/// Loss and weight gradients of one task with its latent held fixed.
pub fn weight_gradients(task: &Task, phi: &LatentCode, params: &ModelParams, tv_weight: f64) -> Result<(f64, Weights<Tensor>)> {
    let mut tape = Tape::new();
    let w = params.weights.record(&mut tape, true);
    let p = tape.constant(phi.as_row());
    let loss = loss_on_tape(&mut tape, &w, task, p, tv_weight)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let g = w.map(|_, v| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(*v).shape())));
    Ok((value, g))
}

/// One outer update over a batch: adapt each task's latent, then take an
/// Adam step on the mean loss with the latents held fixed (first-order).
/// Tasks may be processed in parallel; gradients are summed in batch order.
/// Returns the mean batch loss.
pub fn outer_step(batch: &[&Task], params: &mut ModelParams, adam: &mut AdamState, config: &TrainConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("outer step needs a non-empty batch"));
    }
    let shared = &*params;
    let results: Vec<Result<(f64, Weights<Tensor>)>> = batch
        .par_iter()
        .map(|task| {
            let phi = inner_adapt(task, shared, config)?;
            weight_gradients(task, &phi, shared, config.tv_weight)
        })
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut sum: Option<Weights<Tensor>> = None;
    for (task, r) in batch.iter().zip(results) {
        let (loss, g) = r?;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite loss on task `{}`", task.key)));
        }
        total += loss;
        match &mut sum {
            None => sum = Some(g),
            Some(acc) => {
                for (a, b) in acc.entries_mut().into_iter().zip(g.entries()) {
                    a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let mut grads = sum.expect("non-empty batch");
    grads.visit_mut(|_, t| t.scale_in_place(scale));
    if !grads.all_finite() {
        return Err(Error::numeric("non-finite outer gradient"));
    }
    adam.update(&mut params.weights, &grads, config.outer_lr);
    Ok(total * scale)
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over the epoch's outer batches of the mean batch loss.
    pub train_loss: f64,
    /// Z-normalized MAE on hidden entries of the validation tasks.
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Lowest validation error; equals `last` without a validation split.
    pub best: Checkpoint,
    pub history: Vec<EpochLog>,
}

struct ValidationTask {
    task: Task,
    truth: Vec<f64>,
    hidden: Vec<bool>,
}

fn validation_tasks(instances: &[&TimeSeriesInstance], config: &TrainConfig, params: &ModelParams) -> Result<Vec<ValidationTask>> {
    let mut out = Vec::new();
    for inst in instances {
        let observed = inst.observed_count();
        if observed < 2 {
            continue;
        }
        let keep = (1.0 - config.validation_hide) * observed as f64 / inst.len() as f64;
        let spec = MaskSpec::for_series(keep, seeding::derive_seed(config.seed, "validation", &[]), &inst.id);
        let reduced = apply_masking(inst, &spec)?;
        let hidden: Vec<bool> = inst.mask.iter().zip(&reduced.mask).map(|(&a, &b)| a && !b).collect();
        if !hidden.iter().any(|&h| h) {
            continue;
        }
        let truth = inst.values.iter().zip(&inst.mask).map(|(&v, &m)| if m { v } else { f64::NAN }).collect();
        let task = Task::from_series(&reduced, &params.crf, &config.task_options())?;
        out.push(ValidationTask { task, truth, hidden });
    }
    Ok(out)
}

fn validation_mae(tasks: &[ValidationTask], params: &ModelParams, config: &TrainConfig) -> Result<f64> {
    let maes: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|v| {
            let phi = inner_adapt(&v.task, params, config)?;
            let grid = params.predict_grid(&v.task.input, &phi)?;
            let pred = v.task.decode(&grid)?.remove(0);
            Ok(znorm_metrics(&pred, &v.truth, &v.hidden)?.mae)
        })
        .collect();
    let maes = maes.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(maes.iter().sum::<f64>() / maes.len() as f64)
}

/// Meta-train on `dataset`, whose masks mark what the model may see.
///
/// A seeded `validation_fraction` of series (sensor layout: none) is held out
/// of the outer loop and scored every epoch by hiding part of their observed
/// entries; the best-scoring weights are kept alongside the final ones.
pub fn train(dataset: &[TimeSeriesInstance], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut params = init_params(&config.model, config.seed)?;
    let options = config.task_options();

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let n_val = match config.layout {
        Layout::Series if dataset.len() >= 2 => (config.validation_fraction * dataset.len() as f64).round() as usize,
        _ => 0,
    };
    order.shuffle(&mut seeding::rng(config.seed, "validation-split", &[]));
    let (val_idx, mut train_idx) = (order[..n_val].to_vec(), order[n_val..].to_vec());
    train_idx.sort_unstable();
    let train_set: Vec<TimeSeriesInstance> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
    let tasks = build_tasks(&train_set, config.layout, &params.crf, &options)?;
    let val_refs: Vec<&TimeSeriesInstance> = val_idx.iter().map(|&i| &dataset[i]).collect();
    let val_tasks = validation_tasks(&val_refs, config, &params)?;

    let mut adam = AdamState::new(&params.weights);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;
    for epoch in 0..config.epochs {
        let started = std::time::Instant::now();
        let mut idx: Vec<usize> = (0..tasks.len()).collect();
        idx.shuffle(&mut seeding::rng(config.seed, "epoch-shuffle", &[epoch as u64]));
        let mut losses = Vec::new();
        for (b, chunk) in idx.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Task> = chunk.iter().map(|&i| &tasks[i]).collect();
            let loss = outer_step(&batch, &mut params, &mut adam, config)
                .map_err(|e| e.context(format!("epoch {epoch}, batch {b}")))?;
            losses.push(loss);
        }
        let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let val_mae = if val_tasks.is_empty() {
            None
        } else {
            Some(validation_mae(&val_tasks, &params, config).map_err(|e| e.context(format!("epoch {epoch} validation")))?)
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, val z-MAE {}, {:.2}s",
            val_mae.map_or("n/a".to_string(), |v| format!("{v:.4}")),
            started.elapsed().as_secs_f64()
        );
        history.push(EpochLog {
            epoch,
            train_loss,
            val_mae,
        });
        if let Some(v) = val_mae {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, Checkpoint::new(config.clone(), params.clone(), epoch + 1, history.clone())));
            }
        }
    }
    let last = Checkpoint::new(config.clone(), params, config.epochs, history.clone());
    let best = best.map_or_else(|| last.clone(), |(_, c)| c);
    Ok(TrainOutcome { last, best, history })
}

/// Few-shot adaptation to a new series with frozen weights, followed by
/// imputation. Returns the adapted code and the full-length series in the
/// original scale.
pub fn infer_adapt(
    instance: &TimeSeriesInstance,
    params: &ModelParams,
    config: &TrainConfig,
    overwrite_observed: bool,
) -> Result<(LatentCode, Vec<f64>)> {
    let task = Task::from_series(instance, &params.crf, &config.task_options())?;
    let phi = inner_adapt(&task, params, config)?;
    let series = impute_task(&task, &phi, params, overwrite_observed)?.remove(0);
    Ok((phi, series))
}

/// Decode a task at `phi` and map it back to the original scale.
pub fn impute_task(task: &Task, phi: &LatentCode, params: &ModelParams, overwrite_observed: bool) -> Result<Vec<Vec<f64>>> {
    let grid = params.predict_grid(&task.input, phi)?;
    task.impute_from_grid(&grid, overwrite_observed)
}

/// Full-length predictions for one series at a given latent code.
pub fn impute(
    instance: &TimeSeriesInstance,
    phi: &LatentCode,
    params: &ModelParams,
    config: &TrainConfig,
    overwrite_observed: bool,
) -> Result<Vec<f64>> {
    let task = Task::from_series(instance, &params.crf, &config.task_options())?;
    Ok(impute_task(&task, phi, params, overwrite_observed)?.remove(0))
}

/// Decode `μ φ₁ + (1 − μ) φ₂` in the context (grid and scale) of `task`.
pub fn latent_interpolate(
    a: &LatentCode,
    b: &LatentCode,
    mu: f64,
    task: &Task,
    params: &ModelParams,
) -> Result<Vec<Vec<f64>>> {
    let phi = LatentCode::interpolate(a, b, mu)?;
    impute_task(task, &phi, params, false)
}
