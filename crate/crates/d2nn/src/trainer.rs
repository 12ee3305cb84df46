//! Mini-batch training and evaluation over byte datasets.

use std::time::Instant;

use d2nn_core::network::{CompiledModel, MultiTaskD2NN};
use d2nn_core::readout::{decide, LabelCodec};
use d2nn_core::train::{
    adam_step, combine_task_gradients, paper_rule_step, regularizer, AdamState, GradientSet, TrainConfig,
    UpdateRule,
};
use d2nn_core::{ComplexField, InputEncoding, Propagator};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fft::RustFftEngine;

/// Samples per parallel work unit. Fixed so the reduction order, and hence
/// the result, does not depend on the thread count.
const CHUNK: usize = 8;

pub type HostPropagator = Propagator<RustFftEngine>;

/// Builds the FFT-backed propagator for a model's grid.
pub fn propagator_for(model: &MultiTaskD2NN) -> Result<HostPropagator> {
    let (rows, cols) = model.spec.compute_shape();
    Ok(Propagator::new(model.spec, RustFftEngine::new(rows, cols))?)
}

/// Train and test splits of one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub regularizer: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub optimizer: Option<AdamState>,
}

fn encode(ds: &Dataset, index: usize, model: &MultiTaskD2NN, encoding: &InputEncoding) -> Result<ComplexField> {
    ds.encode(index, model.spec.grid_rows, model.spec.grid_cols, encoding)
}

/// Mean loss and mean gradient of one task over `indices`.
fn batch_gradient(
    compiled: &CompiledModel<'_>,
    propagator: &HostPropagator,
    codec: &LabelCodec,
    ds: &Dataset,
    indices: &[usize],
    encoding: &InputEncoding,
    gain: f64,
) -> Result<(f64, GradientSet)> {
    let model = compiled.model();
    let partials: Vec<Result<(f64, GradientSet)>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grads = GradientSet::zeros_like(model);
            for &i in chunk {
                let x = encode(ds, i, model, encoding)?;
                let (l, g) = compiled.sample_gradient(propagator, &x, codec, ds.label(i), gain)?;
                loss += l;
                grads.add_scaled(&g, 1.0);
            }
            Ok((loss, grads))
        })
        .collect();
    let mut loss = 0.0;
    let mut grads = GradientSet::zeros_like(model);
    for p in partials {
        let (l, g) = p?;
        loss += l;
        grads.add_scaled(&g, 1.0);
    }
    let n = indices.len() as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

/// Predicted class of every sample under `codec`, in dataset order.
pub fn predict(
    model: &MultiTaskD2NN,
    propagator: &HostPropagator,
    codec: &LabelCodec,
    ds: &Dataset,
    encoding: &InputEncoding,
) -> Result<Vec<usize>> {
    let compiled = CompiledModel::new(model)?;
    (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let x = encode(ds, i, model, encoding)?;
            Ok(decide(&compiled.reading(propagator, &x)?, codec)?)
        })
        .collect()
}

/// Fraction of correct decisions; an empty set is an error.
pub fn accuracy(
    model: &MultiTaskD2NN,
    propagator: &HostPropagator,
    codec: &LabelCodec,
    ds: &Dataset,
    encoding: &InputEncoding,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty test set".into()));
    }
    let pred = predict(model, propagator, codec, ds, encoding)?;
    let correct = pred.iter().enumerate().filter(|&(i, &p)| p == ds.label(i)).count();
    Ok(correct as f64 / ds.len() as f64)
}

/// Clean test accuracy per task.
pub fn evaluate(
    model: &MultiTaskD2NN,
    propagator: &HostPropagator,
    tasks: &[TaskData],
    encoding: &InputEncoding,
) -> Result<Vec<f64>> {
    let codecs = model.codecs()?;
    tasks
        .iter()
        .zip(&codecs)
        .map(|(t, c)| accuracy(model, propagator, c, &t.test, encoding))
        .collect()
}

fn permutation(len: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut p: Vec<usize> = (0..len).collect();
    p.shuffle(&mut rng);
    p
}

/// Interleaved training: every step draws one batch per task and applies a
/// single update. Each epoch runs `ceil(max_len / batch)` steps; shorter
/// tasks wrap around their shuffled order. `on_epoch` sees each epoch's
/// metrics as soon as they exist.
pub fn train(
    model: &mut MultiTaskD2NN,
    propagator: &HostPropagator,
    tasks: &[TaskData],
    cfg: &TrainConfig,
    encoding: &InputEncoding,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if tasks.len() != model.tasks() {
        return Err(Error::Dataset(format!(
            "model has {} tasks but {} datasets were given",
            model.tasks(),
            tasks.len()
        )));
    }
    if let Some(t) = tasks.iter().find(|t| t.train.is_empty()) {
        return Err(Error::Dataset(format!("training set of task {} is empty", t.name)));
    }
    let codecs = model.codecs()?;
    let steps = tasks.iter().map(|t| t.train.len().div_ceil(cfg.batch_size)).max().unwrap_or(0);
    let mut adam = (cfg.update_rule == UpdateRule::AdamAutograd).then(|| AdamState::new(model));
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let orders: Vec<Vec<usize>> = tasks
            .iter()
            .enumerate()
            .map(|(t, d)| permutation(d.train.len(), cfg.seed, (epoch * tasks.len() + t) as u64))
            .collect();
        let mut loss_sum = vec![0.0; tasks.len()];
        for step in 0..steps {
            let compiled = CompiledModel::new(model)?;
            let mut per_task = Vec::with_capacity(tasks.len());
            for (t, task) in tasks.iter().enumerate() {
                let order = &orders[t];
                let idx: Vec<usize> = (0..cfg.batch_size)
                    .map(|i| order[(step * cfg.batch_size + i) % order.len()])
                    .collect();
                let (loss, grads) = batch_gradient(&compiled, propagator, &codecs[t], &task.train, &idx, encoding, cfg.readout_gain)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "task {} loss is {loss} at epoch {epoch}, step {step}",
                        task.name
                    )));
                }
                grads.check_finite(model)?;
                loss_sum[t] += loss;
                per_task.push((loss, grads));
            }
            drop(compiled);
            match &mut adam {
                Some(state) => {
                    let pairs: Vec<(usize, &GradientSet)> = per_task.iter().map(|(_, g)| g).enumerate().collect();
                    let grads = combine_task_gradients(model, cfg, &pairs);
                    adam_step(model, &grads, cfg, state)?;
                }
                None => {
                    let grads: Vec<GradientSet> = per_task.into_iter().map(|(_, g)| g).collect();
                    paper_rule_step(model, &grads, cfg)?;
                }
            }
        }
        let test_accuracy = evaluate(model, propagator, tasks, encoding)?;
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum.iter().map(|l| l / steps as f64).collect(),
            test_accuracy,
            regularizer: regularizer(model, cfg),
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(TrainOutcome { metrics, optimizer: adam })
}
