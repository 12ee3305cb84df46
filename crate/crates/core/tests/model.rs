use d2nn_core::network::{build_model, ArchConfig, MultiTaskD2NN};
use d2nn_core::noise::apply_detector_noise;
use d2nn_core::readout::DetectorReading;
use d2nn_core::train::{backward, task_loss, TaskBatch, TrainConfig};
use d2nn_core::{
    decide, diffractive_layer, DetectorLayout, encode_target, forward, Complex, ComplexField, CompiledModel, LabelCodec, NaiveDft,
    NoiseSpec, PhaseMask, PropagationSpec, Propagator,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy(tasks: usize, n: usize, seed: u64) -> (MultiTaskD2NN, Propagator<NaiveDft>) {
    let model = build_model(&ArchConfig {
        shared_layers: 2,
        branch_layers: 1,
        tasks,
        spec: PropagationSpec::default().with_grid(n, n),
        layout: Some(DetectorLayout::centered_blocks(n, n, 2, 2, 5, LabelCodec::sub_split_for(tasks)).unwrap()),
        seed,
        ..ArchConfig::default()
    })
    .unwrap();
    let prop = Propagator::new(model.spec, NaiveDft::new(n, n)).unwrap();
    (model, prop)
}

fn random_field(n: usize, rng: &mut ChaCha8Rng) -> ComplexField {
    ComplexField::from_fn(n, n, |_, _| Complex::new(rng.random_range(0.0..1.0), rng.random_range(-0.5..0.5)))
}

#[test]
fn codecs_round_trip_every_class() {
    for tasks in [1, 2, 4] {
        for codec in LabelCodec::for_tasks(tasks, 10).unwrap() {
            for class in 0..10 {
                let target = encode_target(&codec, class).unwrap();
                assert_eq!(decide(&DetectorReading { values: target }, &codec).unwrap(), class);
            }
        }
    }
}

#[test]
fn four_task_codecs_use_disjoint_halves() {
    let codecs = LabelCodec::for_tasks(4, 10).unwrap();
    for a in &codecs {
        for b in &codecs {
            if a.polarity == b.polarity && a.task != b.task {
                assert_ne!(a.offset, b.offset, "tasks {} and {}", a.task, b.task);
            }
        }
    }
}

#[test]
fn layer_chains_conserve_energy() {
    let n = 16;
    let spec = PropagationSpec::default().with_grid(n, n);
    let prop = Propagator::new(spec, NaiveDft::new(n, n)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let mut u = random_field(n, &mut rng);
        let e0 = u.energy();
        for _ in 0..6 {
            u = diffractive_layer(&u, &PhaseMask::random(n, n, &mut rng), &prop).unwrap();
        }
        assert!((u.energy() - e0).abs() < 1e-12 * e0);
    }
}

#[test]
fn lossless_network_keeps_single_branch_energy() {
    // one task: no splitter, so the whole chain is unitary
    let (model, prop) = toy(1, 16, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = random_field(16, &mut rng);
    let total: f64 = forward(&model, &prop, &u).unwrap().iter().sum();
    assert!((total - u.energy()).abs() < 1e-10 * u.energy());
}

#[test]
fn compiled_and_direct_forward_agree() {
    let (model, prop) = toy(4, 16, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = random_field(16, &mut rng);
    let a = forward(&model, &prop, &u).unwrap();
    let b = CompiledModel::new(&model).unwrap().intensity(&prop, &u).unwrap();
    assert_eq!(a, b);
}

/// `L(up) - L(down)` for one sample from two forward readings, evaluated in
/// difference form so the near-constant part of the loss cancels exactly.
fn loss_difference(up: &[f64], down: &[f64], target: &[f64], gain: f64) -> f64 {
    let n = up.len() as f64;
    let s_down: Vec<f64> = down.iter().map(|r| gain * r).collect();
    let ds: Vec<f64> = up.iter().zip(down).map(|(a, b)| gain * (a - b)).collect();
    let max = s_down.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = s_down.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = w.iter().sum();
    let d_lse = (w.iter().zip(&ds).map(|(w, d)| w * d.exp_m1()).sum::<f64>() / z).ln_1p();
    let lse_down = max + z.ln();
    let mut total = 0.0;
    for k in 0..up.len() {
        let b = s_down[k] - lse_down;
        let delta = ds[k] - d_lse;
        let a = b + delta;
        total += delta * (a + b - 2.0 * target[k]);
    }
    total / n
}

/// Central difference of the full objective for one parameter, from
/// forward passes only.
fn central_difference<E: d2nn_core::SpectralEngine>(
    model: &mut MultiTaskD2NN,
    prop: &Propagator<E>,
    batches: &[TaskBatch<'_>],
    cfg: &TrainConfig,
    mask: usize,
    idx: usize,
    h: f64,
) -> f64 {
    let original = model.masks().nth(mask).unwrap().theta()[idx];
    let readings = |model: &MultiTaskD2NN| -> Vec<Vec<Vec<f64>>> {
        let compiled = CompiledModel::new(model).unwrap();
        batches
            .iter()
            .map(|b| b.inputs.iter().map(|x| compiled.reading(prop, x).unwrap().values).collect())
            .collect()
    };
    model.masks_mut().nth(mask).unwrap().theta_mut()[idx] = original + h;
    let up = readings(model);
    model.masks_mut().nth(mask).unwrap().theta_mut()[idx] = original - h;
    let down = readings(model);
    model.masks_mut().nth(mask).unwrap().theta_mut()[idx] = original;
    let codecs = model.codecs().unwrap();
    let mut diff = 0.0;
    for (t, b) in batches.iter().enumerate() {
        let mut sum = 0.0;
        for (i, (x, &label)) in b.inputs.iter().zip(b.labels).enumerate() {
            let gain = cfg.readout_gain / x.energy();
            let target = encode_target(&codecs[b.task], label).unwrap();
            sum += loss_difference(&up[t][i], &down[t][i], &target, gain);
        }
        diff += cfg.task_weight(b.task) * sum / b.inputs.len() as f64;
    }
    if mask >= model.shared.len() {
        // (θ+h)² - (θ-h)² = 4θh
        diff += cfg.regularizer_coefficient() * 4.0 * original * h;
    }
    diff / (2.0 * h)
}

#[test]
fn four_task_adjoint_matches_differences() {
    let (mut model, prop) = toy(4, 16, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<ComplexField> = (0..4).map(|_| random_field(16, &mut rng)).collect();
    let labels = [1, 8, 3, 6];
    let batches: Vec<TaskBatch<'_>> = (0..4)
        .map(|t| TaskBatch { task: t, inputs: &xs[t..t + 1], labels: &labels[t..t + 1] })
        .collect();
    let cfg = TrainConfig { extra_task_weights: vec![0.8, 1.2], lambda_l2: 0.01, ..TrainConfig::default() };
    let grads = backward(&model, &prop, &batches, &cfg).unwrap();
    let flat: Vec<f64> = grads.layers().flatten().copied().collect();
    let per_mask = 256;
    // four parameters in every one of the 6 masks
    for mask in 0..model.mask_count() {
        for _ in 0..4 {
            let idx = rng.random_range(0..per_mask);
            let k = mask * per_mask + idx;
            let fd = central_difference(&mut model, &prop, &batches, &cfg, mask, idx, 1e-6);
            let rel = (fd - flat[k]).abs() / fd.abs().max(flat[k].abs());
            assert!(rel < 1e-5, "{} [{idx}]: adjoint {} vs fd {fd}", model.mask_name(mask), flat[k]);
        }
    }
}

#[test]
fn difference_form_matches_plain_subtraction() {
    let up = [0.3, 0.1, 0.7, 0.2];
    let down = [0.25, 0.15, 0.6, 0.2];
    let target = [0.0, 1.0, 0.0, 0.0];
    let plain = task_loss(&up.map(|r| 3.0 * r), &target).unwrap() - task_loss(&down.map(|r| 3.0 * r), &target).unwrap();
    assert!((loss_difference(&up, &down, &target, 3.0) - plain).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn detector_offset_never_changes_decisions(seed in any::<u64>(), mu in 0.0f64..5.0) {
        let (model, prop) = toy(2, 16, seed);
        let compiled = CompiledModel::new(&model).unwrap();
        let codecs = model.codecs().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let image = compiled.intensity(&prop, &random_field(16, &mut rng)).unwrap();
        let shifted = apply_detector_noise(&image, &NoiseSpec { detector_mu: mu, ..NoiseSpec::default() }).unwrap();
        for c in &codecs {
            prop_assert_eq!(
                decide(&compiled.read_image(&image), c).unwrap(),
                decide(&compiled.read_image(&shifted), c).unwrap()
            );
        }
    }

    #[test]
    fn intensity_is_phase_invariant(seed in any::<u64>(), phi in 0.0f64..6.3) {
        let (model, prop) = toy(2, 16, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_field(16, &mut rng);
        let a = forward(&model, &prop, &u).unwrap();
        let b = forward(&model, &prop, &u.scaled(Complex::from_polar(1.0, phi))).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}
