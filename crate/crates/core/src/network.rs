//! Multi-task forward model: shared diffractive trunk, beam split, per-task
//! branches, coherent recombination on one detector plane.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::field::{ComplexField, PropagationSpec, Propagator};
use crate::optics::{BeamSplitterSpec, PhaseMask};
use crate::readout::{DetectorLayout, DetectorReading, LabelCodec};
use crate::spectral::SpectralEngine;
use crate::{Complex, Error, Result};

/// Topology and physics of a model, everything except the mask values.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ArchConfig {
    pub shared_layers: usize,
    pub branch_layers: usize,
    pub tasks: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_classes"))]
    pub classes: usize,
    pub spec: PropagationSpec,
    #[cfg_attr(feature = "serde", serde(default))]
    pub splitter: BeamSplitterSpec,
    /// `None` places the centered default layout for the grid and task count.
    #[cfg_attr(feature = "serde", serde(default))]
    pub layout: Option<DetectorLayout>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
    /// Modulate the input plane directly instead of propagating to the first mask.
    #[cfg_attr(feature = "serde", serde(default))]
    pub modulate_at_input: bool,
}

#[cfg(feature = "serde")]
fn default_classes() -> usize {
    10
}

impl Default for ArchConfig {
    /// Four shared layers, two tasks with two layers each, 200×200 grid.
    fn default() -> Self {
        Self {
            shared_layers: 4,
            branch_layers: 2,
            tasks: 2,
            classes: 10,
            spec: PropagationSpec::default(),
            splitter: BeamSplitterSpec::nominal(),
            layout: None,
            seed: 0,
            modulate_at_input: false,
        }
    }
}

impl ArchConfig {
    pub fn resolved_layout(&self) -> Result<DetectorLayout> {
        match &self.layout {
            Some(layout) => Ok(layout.clone()),
            None => DetectorLayout::centered(
                self.spec.grid_rows,
                self.spec.grid_cols,
                LabelCodec::sub_split_for(self.tasks),
            ),
        }
    }
}

/// The whole trainable system.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskD2NN {
    pub shared: Vec<PhaseMask>,
    pub branches: Vec<Vec<PhaseMask>>,
    pub spec: PropagationSpec,
    pub splitter: BeamSplitterSpec,
    pub layout: DetectorLayout,
    pub classes: usize,
    pub modulate_at_input: bool,
}

fn check_topology(shared: usize, branches: usize, depth: usize) -> Result<()> {
    if shared == 0 {
        return Err(Error::InvalidTopology("at least one shared layer is required".into()));
    }
    if branches == 0 {
        return Err(Error::InvalidTopology("at least one branch is required".into()));
    }
    if depth == 0 {
        return Err(Error::InvalidTopology("branches need at least one layer".into()));
    }
    Ok(())
}

/// Initializes masks i.i.d. uniform on `[0, 2π)`, deterministically from `seed`.
pub fn build_model(config: &ArchConfig) -> Result<MultiTaskD2NN> {
    check_topology(config.shared_layers, config.tasks, config.branch_layers)?;
    config.spec.validate()?;
    let (rows, cols) = (config.spec.grid_rows, config.spec.grid_cols);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shared = (0..config.shared_layers).map(|_| PhaseMask::random(rows, cols, &mut rng)).collect();
    let branches = (0..config.tasks)
        .map(|_| (0..config.branch_layers).map(|_| PhaseMask::random(rows, cols, &mut rng)).collect())
        .collect();
    let model = MultiTaskD2NN {
        shared,
        branches,
        spec: config.spec,
        splitter: config.splitter,
        layout: config.resolved_layout()?,
        classes: config.classes,
        modulate_at_input: config.modulate_at_input,
    };
    model.validate()?;
    Ok(model)
}

impl MultiTaskD2NN {
    pub fn validate(&self) -> Result<()> {
        let depth = self.branches.first().map_or(0, Vec::len);
        check_topology(self.shared.len(), self.branches.len(), depth)?;
        if self.branches.iter().any(|b| b.len() != depth) {
            return Err(Error::InvalidTopology("branches differ in depth".into()));
        }
        self.spec.validate()?;
        self.splitter.validate()?;
        let shape = (self.spec.grid_rows, self.spec.grid_cols);
        if let Some(bad) = self.masks().position(|m| m.shape() != shape) {
            return Err(Error::InvalidTopology(format!("mask {bad} does not match the {shape:?} grid")));
        }
        self.layout.validate_within(shape.0, shape.1)?;
        let codecs = LabelCodec::for_tasks(self.tasks(), self.classes)?;
        if self.layout.cell_count() != codecs[0].cells {
            return Err(Error::InvalidLayout(format!(
                "{} tasks with {} classes need {} readout cells, layout has {}",
                self.tasks(),
                self.classes,
                codecs[0].cells,
                self.layout.cell_count()
            )));
        }
        Ok(())
    }

    pub fn tasks(&self) -> usize {
        self.branches.len()
    }

    pub fn branch_layers(&self) -> usize {
        self.branches.first().map_or(0, Vec::len)
    }

    pub fn arch(&self, seed: u64) -> ArchConfig {
        ArchConfig {
            shared_layers: self.shared.len(),
            branch_layers: self.branch_layers(),
            tasks: self.tasks(),
            classes: self.classes,
            spec: self.spec,
            splitter: self.splitter,
            layout: Some(self.layout.clone()),
            seed,
            modulate_at_input: self.modulate_at_input,
        }
    }

    pub fn codecs(&self) -> Result<Vec<LabelCodec>> {
        LabelCodec::for_tasks(self.tasks(), self.classes)
    }

    /// Masks in declaration order: trunk, then each branch in turn.
    pub fn masks(&self) -> impl Iterator<Item = &PhaseMask> {
        self.shared.iter().chain(self.branches.iter().flatten())
    }

    pub fn masks_mut(&mut self) -> impl Iterator<Item = &mut PhaseMask> {
        self.shared.iter_mut().chain(self.branches.iter_mut().flatten())
    }

    pub fn mask_count(&self) -> usize {
        self.shared.len() + self.branches.iter().map(Vec::len).sum::<usize>()
    }

    pub fn parameter_count(&self) -> usize {
        self.masks().map(|m| m.theta().len()).sum()
    }

    /// Human-readable name of mask `index` in declaration order.
    pub fn mask_name(&self, index: usize) -> String {
        if index < self.shared.len() {
            format!("shared[{index}]")
        } else {
            let k = index - self.shared.len();
            let depth = self.branch_layers();
            format!("branch[{}][{}]", k / depth, k % depth)
        }
    }
}

/// A model with its phasors and splitter amplitudes evaluated once, ready
/// for repeated forward (and adjoint) passes.
#[derive(Debug, Clone)]
pub struct CompiledModel<'m> {
    pub(crate) model: &'m MultiTaskD2NN,
    pub(crate) shared: Vec<Vec<Complex>>,
    pub(crate) branches: Vec<Vec<Vec<Complex>>>,
    pub(crate) amplitudes: Vec<f64>,
    pub(crate) cell_map: Vec<usize>,
}

/// Fields retained by a forward pass for the adjoint sweep: the output of
/// every modulation plus the detector-plane field.
pub(crate) struct ForwardCache {
    pub shared: Vec<Vec<Complex>>,
    pub branches: Vec<Vec<Vec<Complex>>>,
    pub detector: Vec<Complex>,
}

impl<'m> CompiledModel<'m> {
    pub fn new(model: &'m MultiTaskD2NN) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model,
            shared: model.shared.iter().map(PhaseMask::phasors).collect(),
            branches: model.branches.iter().map(|b| b.iter().map(PhaseMask::phasors).collect()).collect(),
            amplitudes: model.splitter.branch_amplitudes(model.tasks()),
            cell_map: model.layout.cell_map(model.spec.grid_rows, model.spec.grid_cols),
        })
    }

    pub fn model(&self) -> &MultiTaskD2NN {
        self.model
    }

    fn check<E: SpectralEngine>(&self, propagator: &Propagator<E>, input: &ComplexField) -> Result<()> {
        if propagator.spec() != &self.model.spec {
            return Err(Error::InvalidSpec("propagator spec differs from the model's"));
        }
        input.ensure_shape(self.model.spec.grid_rows, self.model.spec.grid_cols)
    }

    fn hops_into_layer(&self, shared_index: usize) -> bool {
        !(shared_index == 0 && self.model.modulate_at_input)
    }

    pub(crate) fn run<E: SpectralEngine>(
        &self,
        propagator: &Propagator<E>,
        input: &ComplexField,
        keep: bool,
    ) -> Result<(Vec<Complex>, Option<ForwardCache>)> {
        self.check(propagator, input)?;
        let n = input.data().len();
        let mut buf = input.data().to_vec();
        let mut shared_cache = Vec::new();
        for (l, phasor) in self.shared.iter().enumerate() {
            if self.hops_into_layer(l) {
                propagator.propagate_in_place(&mut buf);
            }
            buf.iter_mut().zip(phasor).for_each(|(z, m)| *z *= m);
            if keep {
                shared_cache.push(buf.clone());
            }
        }

        // The final hop is linear, so the branch fields are summed first and
        // propagated to the detector plane once.
        let mut plane = vec![Complex::new(0.0, 0.0); n];
        let mut branch_cache = Vec::new();
        let mut branch = vec![Complex::new(0.0, 0.0); n];
        for (phasors, &amp) in self.branches.iter().zip(&self.amplitudes) {
            branch.iter_mut().zip(&buf).for_each(|(b, z)| *b = z * amp);
            let mut layers = Vec::new();
            for phasor in phasors {
                propagator.propagate_in_place(&mut branch);
                branch.iter_mut().zip(phasor).for_each(|(z, m)| *z *= m);
                if keep {
                    layers.push(branch.clone());
                }
            }
            plane.iter_mut().zip(&branch).for_each(|(p, b)| *p += b);
            branch_cache.push(layers);
        }
        propagator.propagate_in_place(&mut plane);
        if plane.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("detector-plane field".into()));
        }
        let cache = keep.then(|| ForwardCache {
            shared: shared_cache,
            branches: branch_cache,
            detector: plane.clone(),
        });
        Ok((plane, cache))
    }

    /// Detector-plane intensity `|field|²`.
    pub fn intensity<E: SpectralEngine>(&self, propagator: &Propagator<E>, input: &ComplexField) -> Result<Vec<f64>> {
        let (plane, _) = self.run(propagator, input, false)?;
        Ok(plane.iter().map(|z| z.norm_sqr()).collect())
    }

    /// Sums an intensity image over the layout's readout cells.
    pub fn read_image(&self, image: &[f64]) -> DetectorReading {
        let mut values = vec![0.0; self.model.layout.cell_count()];
        for (&cell, &v) in self.cell_map.iter().zip(image) {
            if cell != usize::MAX {
                values[cell] += v;
            }
        }
        DetectorReading { values }
    }

    pub fn reading<E: SpectralEngine>(&self, propagator: &Propagator<E>, input: &ComplexField) -> Result<DetectorReading> {
        Ok(self.read_image(&self.intensity(propagator, input)?))
    }
}

/// Detector-plane intensity image for one input.
pub fn forward<E: SpectralEngine>(
    model: &MultiTaskD2NN,
    propagator: &Propagator<E>,
    input: &ComplexField,
) -> Result<Vec<f64>> {
    CompiledModel::new(model)?.intensity(propagator, input)
}

/// Every intermediate field of one forward pass, for visualization.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: ComplexField,
    /// Output of each shared layer.
    pub shared: Vec<ComplexField>,
    /// Output of each branch layer, per branch.
    pub branches: Vec<Vec<ComplexField>>,
    /// Each branch's field after the final hop, before recombination.
    pub detector_fields: Vec<ComplexField>,
    pub combined: ComplexField,
    /// `|combined|²`, identical to [`forward`]'s output.
    pub intensity: Vec<f64>,
}

/// One exportable trace stage.
#[derive(Debug, Clone, Copy)]
pub enum StageData<'a> {
    Field(&'a ComplexField),
    Intensity(&'a [f64]),
}

impl ForwardTrace {
    /// Stages along one input-to-detector path: shared layers, one branch's
    /// layers, the recombined field and the intensity image.
    pub fn path_len(&self) -> usize {
        self.shared.len() + self.branches.first().map_or(0, Vec::len) + 2
    }

    /// All stages in propagation order with stable names.
    pub fn stages(&self) -> Vec<(String, StageData<'_>)> {
        let mut out = vec![(String::from("input"), StageData::Field(&self.input))];
        for (l, f) in self.shared.iter().enumerate() {
            out.push((format!("shared{l}"), StageData::Field(f)));
        }
        for (t, layers) in self.branches.iter().enumerate() {
            for (m, f) in layers.iter().enumerate() {
                out.push((format!("branch{t}_layer{m}"), StageData::Field(f)));
            }
            out.push((format!("branch{t}_detector"), StageData::Field(&self.detector_fields[t])));
        }
        out.push((String::from("combined"), StageData::Field(&self.combined)));
        out.push((String::from("intensity"), StageData::Intensity(&self.intensity)));
        out
    }
}

/// Forward pass that keeps every intermediate field.
pub fn forward_trace<E: SpectralEngine>(
    model: &MultiTaskD2NN,
    propagator: &Propagator<E>,
    input: &ComplexField,
) -> Result<ForwardTrace> {
    let compiled = CompiledModel::new(model)?;
    let (plane, cache) = compiled.run(propagator, input, true)?;
    let cache = cache.expect("cache requested");
    let (rows, cols) = input.shape();
    let wrap = |data: Vec<Complex>| ComplexField::from_raw(rows, cols, data);
    let detector_fields = cache
        .branches
        .iter()
        .map(|layers| {
            let mut last = layers.last().expect("branches have at least one layer").clone();
            propagator.propagate_in_place(&mut last);
            wrap(last)
        })
        .collect();
    Ok(ForwardTrace {
        input: input.clone(),
        shared: cache.shared.into_iter().map(wrap).collect(),
        branches: cache.branches.into_iter().map(|b| b.into_iter().map(wrap).collect()).collect(),
        detector_fields,
        intensity: plane.iter().map(|z| z.norm_sqr()).collect(),
        combined: wrap(plane),
    })
}
