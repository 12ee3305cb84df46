//! Training objective, reverse-mode adjoint gradients and parameter updates.
//!
//! The per-task loss is the mean squared error between the log-softmax of
//! the detector reading and the codec's target vector. The adjoint sweep
//! mirrors the forward pass backwards:
//!
//! * intensity `|z|²` sends `2·g·z` upstream for a real upstream `g`;
//! * a free-space hop's adjoint is the hop with `conj(H)`;
//! * modulation by `exp(jθ)` sends `conj(exp(jθ))·ẇ` upstream and gives
//!   `∂L/∂θ = Im(ẇ · conj(w))` at the modulated field `w`;
//! * the splitter's adjoint scales by the (real) port amplitude and the
//!   recombination's adjoint fans the detector adjoint out to every branch.
//!
//! Complex adjoints use `ẇ = ∂L/∂Re(w) + j·∂L/∂Im(w)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // float math is inherent in `core` on newer toolchains
use num_traits::Float;

use crate::field::{ComplexField, Propagator};
use crate::network::{CompiledModel, MultiTaskD2NN};
use crate::readout::{encode_target, LabelCodec};
use crate::spectral::SpectralEngine;
use crate::{Complex, Error, Result};

/// Which optimizer drives the masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum UpdateRule {
    /// Exact gradients of the loss fed to Adam.
    #[default]
    AdamAutograd,
    /// The closed-form shared/branch SGD rule, applied as printed.
    PaperRuleSgd,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Loss weights of tasks beyond the second (default 1 each).
    pub extra_task_weights: Vec<f64>,
    pub lambda_l2: f64,
    /// Inside the loss each reading is divided by the sample's input energy
    /// and multiplied by this factor, which sets the softmax temperature.
    /// Decisions do not depend on it.
    pub readout_gain: f64,
    pub eta: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub update_rule: UpdateRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            extra_task_weights: Vec::new(),
            lambda_l2: 1e-4,
            readout_gain: 100.0,
            eta: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            update_rule: UpdateRule::AdamAutograd,
        }
    }
}

impl TrainConfig {
    /// All violations, empty when valid.
    pub fn violations(&self) -> Vec<alloc::string::String> {
        let mut out = Vec::new();
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.lambda1) {
            out.push(format!("lambda1 must be > 0 (got {})", self.lambda1));
        }
        if !positive(self.lambda2) {
            out.push(format!("lambda2 must be > 0 (got {})", self.lambda2));
        }
        if let Some(w) = self.extra_task_weights.iter().find(|w| !positive(**w)) {
            out.push(format!("extra task weights must be > 0 (got {w})"));
        }
        if !(self.lambda_l2.is_finite() && self.lambda_l2 >= 0.0) {
            out.push(format!("lambda_l2 must be >= 0 (got {})", self.lambda_l2));
        }
        if !positive(self.readout_gain) {
            out.push(format!("readout_gain must be > 0 (got {})", self.readout_gain));
        }
        if !positive(self.eta) {
            out.push(format!("eta must be > 0 (got {})", self.eta));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                out.push(format!("{name} must lie in [0, 1) (got {b})"));
            }
        }
        if !positive(self.adam_eps) {
            out.push(format!("adam_eps must be > 0 (got {})", self.adam_eps));
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(v) => Err(Error::InvalidConfig(v)),
            None => Ok(()),
        }
    }

    /// Loss weight of task `task` (λ1, λ2, then the extra weights).
    pub fn task_weight(&self, task: usize) -> f64 {
        match task {
            0 => self.lambda1,
            1 => self.lambda2,
            t => self.extra_task_weights.get(t - 2).copied().unwrap_or(1.0),
        }
    }

    /// Coefficient of the branch-mask penalty, `λ_L2 · λ2/λ1`.
    pub fn regularizer_coefficient(&self) -> f64 {
        self.lambda_l2 * self.lambda2 / self.lambda1
    }
}

/// One gradient grid per mask, mirroring the model's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub shared: Vec<Vec<f64>>,
    pub branches: Vec<Vec<Vec<f64>>>,
}

impl GradientSet {
    pub fn zeros_like(model: &MultiTaskD2NN) -> Self {
        let zeros = |m: &crate::PhaseMask| vec![0.0; m.theta().len()];
        Self {
            shared: model.shared.iter().map(zeros).collect(),
            branches: model.branches.iter().map(|b| b.iter().map(zeros).collect()).collect(),
        }
    }

    /// Grids in declaration order.
    pub fn layers(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.shared.iter().chain(self.branches.iter().flatten())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.shared.iter_mut().chain(self.branches.iter_mut().flatten())
    }

    /// `self += weight · other`.
    pub fn add_scaled(&mut self, other: &GradientSet, weight: f64) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += weight * y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.layers_mut().flatten().for_each(|x| *x *= factor);
    }

    pub fn matches(&self, model: &MultiTaskD2NN) -> bool {
        self.shared.len() == model.shared.len()
            && self.branches.len() == model.branches.len()
            && self.branches.iter().zip(&model.branches).all(|(g, b)| g.len() == b.len())
            && self.layers().zip(model.masks()).all(|(g, m)| g.len() == m.theta().len())
    }

    /// Fails with the first layer holding a non-finite entry.
    pub fn check_finite(&self, model: &MultiTaskD2NN) -> Result<()> {
        match self.layers().position(|g| g.iter().any(|x| !x.is_finite())) {
            Some(i) => Err(Error::NonFinite(format!("gradient of {}", model.mask_name(i)))),
            None => Ok(()),
        }
    }
}

fn log_softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    values.iter().map(|v| v - lse).collect()
}

/// `mean_k (log_softmax(reading)_k - target_k)²`.
pub fn task_loss(reading: &[f64], target: &[f64]) -> Result<f64> {
    Ok(task_loss_grad(reading, target)?.0)
}

/// Loss and its gradient with respect to the reading.
pub fn task_loss_grad(reading: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if reading.is_empty() {
        return Err(Error::Empty("detector reading"));
    }
    if reading.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: reading.len(),
            actual: target.len(),
        });
    }
    let n = reading.len() as f64;
    let ls = log_softmax(reading);
    let err: Vec<f64> = ls.iter().zip(target).map(|(l, t)| l - t).collect();
    let loss = err.iter().map(|e| e * e).sum::<f64>() / n;
    let err_sum: f64 = err.iter().sum();
    let grad = ls
        .iter()
        .zip(&err)
        .map(|(l, e)| 2.0 / n * (e - l.exp() * err_sum))
        .collect();
    Ok((loss, grad))
}

/// One task's mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct TaskBatch<'a> {
    pub task: usize,
    pub inputs: &'a [ComplexField],
    pub labels: &'a [usize],
}

impl TaskBatch<'_> {
    fn check(&self, codecs: &[LabelCodec]) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Empty("task batch"));
        }
        if self.inputs.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                expected: self.inputs.len(),
                actual: self.labels.len(),
            });
        }
        if self.task >= codecs.len() {
            return Err(Error::InvalidTopology(format!(
                "batch for task {} but the model has {} tasks",
                self.task,
                codecs.len()
            )));
        }
        Ok(())
    }
}

impl CompiledModel<'_> {
    /// Loss of one sample under `codec`, readings scaled by `gain` per unit
    /// input energy.
    pub fn sample_loss<E: SpectralEngine>(
        &self,
        propagator: &Propagator<E>,
        input: &ComplexField,
        codec: &LabelCodec,
        class: usize,
        gain: f64,
    ) -> Result<f64> {
        let reading = self.reading(propagator, input)?;
        let gain = gain / input_energy(input)?;
        let scaled: Vec<f64> = reading.values.iter().map(|v| gain * v).collect();
        task_loss(&scaled, &encode_target(codec, class)?)
    }

    /// Loss of one sample and its exact gradient with respect to every mask.
    pub fn sample_gradient<E: SpectralEngine>(
        &self,
        propagator: &Propagator<E>,
        input: &ComplexField,
        codec: &LabelCodec,
        class: usize,
        gain: f64,
    ) -> Result<(f64, GradientSet)> {
        let target = encode_target(codec, class)?;
        let gain = gain / input_energy(input)?;
        let (plane, cache) = self.run(propagator, input, true)?;
        let cache = cache.expect("cache requested");
        let image: Vec<f64> = plane.iter().map(|z| z.norm_sqr()).collect();
        let scaled: Vec<f64> = self.read_image(&image).values.iter().map(|v| gain * v).collect();
        let (loss, d_scaled) = task_loss_grad(&scaled, &target)?;
        let d_reading: Vec<f64> = d_scaled.iter().map(|d| gain * d).collect();

        let zero = Complex::new(0.0, 0.0);
        let mut detector_adj: Vec<Complex> = cache
            .detector
            .iter()
            .zip(&self.cell_map)
            .map(|(z, &cell)| if cell == usize::MAX { zero } else { z * (2.0 * d_reading[cell]) })
            .collect();
        // every branch sees the same detector adjoint through the shared final hop
        propagator.adjoint_in_place(&mut detector_adj);

        let mut grads = GradientSet::zeros_like(self.model);
        let mut trunk_adj = vec![zero; plane.len()];
        for (t, (phasors, &amp)) in self.branches.iter().zip(&self.amplitudes).enumerate() {
            let mut adj = detector_adj.clone();
            for m in (0..phasors.len()).rev() {
                accumulate_phase_grad(&mut grads.branches[t][m], &adj, &cache.branches[t][m]);
                adj.iter_mut().zip(&phasors[m]).for_each(|(a, p)| *a *= p.conj());
                propagator.adjoint_in_place(&mut adj);
            }
            trunk_adj.iter_mut().zip(&adj).for_each(|(s, a)| *s += a * amp);
        }
        for l in (0..self.shared.len()).rev() {
            accumulate_phase_grad(&mut grads.shared[l], &trunk_adj, &cache.shared[l]);
            if l == 0 {
                break;
            }
            trunk_adj.iter_mut().zip(&self.shared[l]).for_each(|(a, p)| *a *= p.conj());
            propagator.adjoint_in_place(&mut trunk_adj);
        }
        Ok((loss, grads))
    }
}

/// Input energy, or 1 for an all-dark input.
fn input_energy(input: &ComplexField) -> Result<f64> {
    let e = input.energy();
    if !e.is_finite() {
        return Err(Error::NonFinite("input energy".into()));
    }
    Ok(if e > 0.0 { e } else { 1.0 })
}

fn accumulate_phase_grad(grad: &mut [f64], adjoint: &[Complex], modulated: &[Complex]) {
    for ((g, a), w) in grad.iter_mut().zip(adjoint).zip(modulated) {
        *g += (a * w.conj()).im;
    }
}

/// `λ_L2 · λ2/λ1 · Σ θ²` over the branch masks.
pub fn regularizer(model: &MultiTaskD2NN, cfg: &TrainConfig) -> f64 {
    let squares: f64 = model.branches.iter().flatten().flat_map(|m| m.theta()).map(|t| t * t).sum();
    cfg.regularizer_coefficient() * squares
}

/// Adds the regularizer's gradient `2·λ_L2·λ2/λ1·θ` to the branch grids.
pub fn add_regularizer_gradient(model: &MultiTaskD2NN, cfg: &TrainConfig, grads: &mut GradientSet) {
    let c = 2.0 * cfg.regularizer_coefficient();
    for (g_branch, m_branch) in grads.branches.iter_mut().zip(&model.branches) {
        for (g, m) in g_branch.iter_mut().zip(m_branch) {
            g.iter_mut().zip(m.theta()).for_each(|(x, t)| *x += c * t);
        }
    }
}

/// Per-batch mean loss and mean gradient, unweighted, one entry per batch.
pub fn task_gradients<E: SpectralEngine>(
    model: &MultiTaskD2NN,
    propagator: &Propagator<E>,
    batches: &[TaskBatch<'_>],
    gain: f64,
) -> Result<Vec<(f64, GradientSet)>> {
    let compiled = CompiledModel::new(model)?;
    let codecs = model.codecs()?;
    batches
        .iter()
        .map(|batch| {
            batch.check(&codecs)?;
            let codec = &codecs[batch.task];
            let mut total = GradientSet::zeros_like(model);
            let mut loss = 0.0;
            for (input, &label) in batch.inputs.iter().zip(batch.labels) {
                let (l, g) = compiled.sample_gradient(propagator, input, codec, label, gain)?;
                loss += l;
                total.add_scaled(&g, 1.0);
            }
            let n = batch.inputs.len() as f64;
            total.scale(1.0 / n);
            Ok((loss / n, total))
        })
        .collect()
}

/// Weighted sum of per-task gradients plus the regularizer gradient.
pub fn combine_task_gradients(model: &MultiTaskD2NN, cfg: &TrainConfig, per_task: &[(usize, &GradientSet)]) -> GradientSet {
    let mut grads = GradientSet::zeros_like(model);
    for &(task, g) in per_task {
        grads.add_scaled(g, cfg.task_weight(task));
    }
    add_regularizer_gradient(model, cfg, &mut grads);
    grads
}

/// `Σ_t λ_t · mean L_t + λ_L2·λ2/λ1·Σθ²_branch`.
pub fn total_loss<E: SpectralEngine>(
    model: &MultiTaskD2NN,
    propagator: &Propagator<E>,
    batches: &[TaskBatch<'_>],
    cfg: &TrainConfig,
) -> Result<f64> {
    if batches.is_empty() {
        return Err(Error::Empty("batch set"));
    }
    let compiled = CompiledModel::new(model)?;
    let codecs = model.codecs()?;
    let mut loss = 0.0;
    for batch in batches {
        batch.check(&codecs)?;
        let mut sum = 0.0;
        for (input, &label) in batch.inputs.iter().zip(batch.labels) {
            sum += compiled.sample_loss(propagator, input, &codecs[batch.task], label, cfg.readout_gain)?;
        }
        loss += cfg.task_weight(batch.task) * sum / batch.inputs.len() as f64;
    }
    Ok(loss + regularizer(model, cfg))
}

/// Exact gradient of [`total_loss`].
pub fn backward<E: SpectralEngine>(
    model: &MultiTaskD2NN,
    propagator: &Propagator<E>,
    batches: &[TaskBatch<'_>],
    cfg: &TrainConfig,
) -> Result<GradientSet> {
    if batches.is_empty() {
        return Err(Error::Empty("batch set"));
    }
    let per_task = task_gradients(model, propagator, batches, cfg.readout_gain)?;
    let pairs: Vec<(usize, &GradientSet)> = batches.iter().zip(&per_task).map(|(b, (_, g))| (b.task, g)).collect();
    let grads = combine_task_gradients(model, cfg, &pairs);
    grads.check_finite(model)?;
    Ok(grads)
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &MultiTaskD2NN) -> Self {
        Self {
            m: GradientSet::zeros_like(model),
            v: GradientSet::zeros_like(model),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut MultiTaskD2NN, grads: &GradientSet, cfg: &TrainConfig, state: &mut AdamState) -> Result<()> {
    if !grads.matches(model) || !state.m.matches(model) || !state.v.matches(model) {
        return Err(Error::InvalidTopology("gradient or optimizer state shape differs from the model".into()));
    }
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let layers = model
        .masks_mut()
        .zip(grads.layers())
        .zip(state.m.layers_mut().zip(state.v.layers_mut()));
    for ((mask, g), (m, v)) in layers {
        for (((theta, g), m), v) in mask.theta_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= cfg.eta * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// The closed-form update, taken literally:
///
/// * shared: `θ -= ½·η·(λ2/λ1)·Σ_t ∇_t`
/// * branch `t`: `θ_t -= η·∇_t + 2·η·λ_L2·Σ_s θ_s` (elementwise over the
///   branch masks at the same depth)
///
/// `task_grads[t]` is the unweighted gradient of task `t`'s loss.
pub fn paper_rule_step(model: &mut MultiTaskD2NN, task_grads: &[GradientSet], cfg: &TrainConfig) -> Result<()> {
    if task_grads.len() != model.tasks() || task_grads.iter().any(|g| !g.matches(model)) {
        return Err(Error::InvalidTopology("one gradient set per task, shaped like the model, is required".into()));
    }
    let shared_rate = 0.5 * cfg.eta * cfg.lambda2 / cfg.lambda1;
    for (l, mask) in model.shared.iter_mut().enumerate() {
        for g in task_grads {
            mask.theta_mut().iter_mut().zip(&g.shared[l]).for_each(|(t, x)| *t -= shared_rate * x);
        }
    }
    let depth = model.branch_layers();
    let decay = 2.0 * cfg.eta * cfg.lambda_l2;
    for m in 0..depth {
        let n = model.branches[0][m].theta().len();
        let sum: Vec<f64> = (0..n)
            .map(|i| model.branches.iter().map(|b| b[m].theta()[i]).sum())
            .collect();
        for (t, branch) in model.branches.iter_mut().enumerate() {
            let grad = &task_grads[t].branches[t][m];
            for ((theta, g), s) in branch[m].theta_mut().iter_mut().zip(grad).zip(&sum) {
                *theta -= cfg.eta * g + decay * s;
            }
        }
    }
    Ok(())
}
