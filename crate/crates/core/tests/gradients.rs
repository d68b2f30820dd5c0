//! Analytic gradients against central finite differences.

use itn_core::phantom::compute_class_labels;
use itn_core::predictor::loss::{evaluate, LossTarget, LossWeights};
use itn_core::predictor::{softmax, Architecture, ClassHeads, PredictorOutput, RawPose, RegressionMode, RegressorModel};
use itn_core::rng::stream_rng;
use itn_core::transform::{RigidTransform, UnitQuaternion, Vec3};
use itn_core::volume::{InputMode, PlaneImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const PROBES: usize = 25;
const H: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs())).max(1e-6)
}

fn random_delta(rng: &mut ChaCha8Rng) -> RigidTransform {
    let t = Vec3::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    RigidTransform::new(t, UnitQuaternion::from_axis_angle(axis, rng.random_range(0.05..1.2)))
}

/// Flat vector of every raw output the loss can see: regression values then logits.
fn raw_vector(mode: RegressionMode, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = 3 + mode.regression_len() + if mode == RegressionMode::Quat { 12 } else { 0 };
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn output_from(mode: RegressionMode, x: &[f64]) -> PredictorOutput {
    let t = Vec3::new(x[0], x[1], x[2]);
    let r = &x[3..3 + mode.regression_len()];
    let pose = match mode {
        RegressionMode::Quat => RawPose::Quaternion { t, q: r.try_into().unwrap() },
        RegressionMode::Euler => RawPose::Euler { t, radians: r.try_into().unwrap() },
        RegressionMode::Matrix => RawPose::Matrix { t, r: r.try_into().unwrap() },
        RegressionMode::Anchors => RawPose::Anchors(r.try_into().unwrap()),
    };
    let logits = &x[3 + mode.regression_len()..];
    let (p, q) = if logits.is_empty() {
        (None, None)
    } else {
        (Some(softmax(&logits[..6].try_into().unwrap())), Some(softmax(&logits[6..].try_into().unwrap())))
    };
    PredictorOutput { pose, p, q }
}

fn analytic(mode: RegressionMode, x: &[f64], target: &LossTarget, w: &LossWeights) -> Vec<f64> {
    let g = evaluate(&output_from(mode, x), target, w).gradients;
    let mut v = g.translation.to_vec();
    v.extend(g.regression);
    if let (Some(p), Some(q)) = (g.p_logits, g.q_logits) {
        v.extend(p);
        v.extend(q);
    }
    v
}

#[test]
fn loss_gradients_match_finite_differences_for_every_mode() {
    let w = LossWeights { alpha: 0.7, beta: 1.3, gamma: 0.9, delta: 1.1 };
    for mode in RegressionMode::ALL {
        let mut rng = stream_rng(100 + mode.code() as u64, 0);
        for _ in 0..PROBES {
            let delta = random_delta(&mut rng);
            let target = LossTarget::new(&delta, &compute_class_labels(&delta), mode, 32).unwrap();
            let x = raw_vector(mode, &mut rng);
            let g = analytic(mode, &x, &target, &w);
            // The anchors head has no translation outputs.
            let skip = if mode == RegressionMode::Anchors { 3 } else { 0 };
            for i in skip..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += H;
                xm[i] -= H;
                let fd = (evaluate(&output_from(mode, &xp), &target, &w).breakdown.total
                    - evaluate(&output_from(mode, &xm), &target, &w).breakdown.total)
                    / (2.0 * H);
                assert!(rel_err(g[i], fd) < 1e-4, "{mode} coordinate {i}: analytic {} vs numeric {fd}", g[i]);
            }
        }
    }
}

fn tiny_model(mode: RegressionMode, heads: ClassHeads, input: InputMode, seed: u64) -> RegressorModel {
    let arch = Architecture { input_size: 8, conv_channels: vec![3, 4, 3], head_width: 5, translation_scale: 3.0 };
    RegressorModel::random(arch, mode, heads, input, 0.5, &mut stream_rng(seed, 0)).unwrap()
}

#[test]
fn network_parameter_gradients_match_finite_differences() {
    let w = LossWeights::default();
    let cases = [
        (RegressionMode::Quat, ClassHeads::BOTH, InputMode::Single),
        (RegressionMode::Quat, ClassHeads::NONE, InputMode::Triplet),
        (RegressionMode::Euler, ClassHeads::NONE, InputMode::Single),
        (RegressionMode::Matrix, ClassHeads::NONE, InputMode::Single),
        (RegressionMode::Anchors, ClassHeads::NONE, InputMode::Single),
    ];
    for (k, (mode, heads, input)) in cases.into_iter().enumerate() {
        let mut rng = stream_rng(200 + k as u64, 1);
        let model = tiny_model(mode, heads, input, 300 + k as u64);
        let images: Vec<PlaneImage> = (0..input.channels())
            .map(|_| PlaneImage::new(8, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let delta = random_delta(&mut rng);
        let target = LossTarget::new(&delta, &compute_class_labels(&delta), mode, 8).unwrap();
        let mut grad = vec![0.0; model.params().len()];
        model.accumulate_gradient(&images, &target, &w, &mut grad).unwrap();

        let loss_at = |params: Vec<f64>| {
            let mut m = model.clone();
            m.set_params(params).unwrap();
            let mut scratch = vec![0.0; grad.len()];
            m.accumulate_gradient(&images, &target, &w, &mut scratch).unwrap().total
        };
        let mut checked = 0;
        let mut agreed = 0;
        for i in 0..grad.len() {
            let mut pp = model.params().to_vec();
            let mut pm = pp.clone();
            pp[i] += H;
            pm[i] -= H;
            let fd = (loss_at(pp) - loss_at(pm)) / (2.0 * H);
            if grad[i].abs() < 1e-9 && fd.abs() < 1e-9 {
                continue;
            }
            checked += 1;
            if rel_err(grad[i], fd) < 1e-4 {
                agreed += 1;
            }
        }
        // A probe straddling a ReLU or max-pool switch can legitimately disagree;
        // with random inputs that is rare.
        assert!(checked >= 20, "{mode}: only {checked} nonzero gradient entries");
        assert!(agreed as f64 >= 0.99 * checked as f64, "{mode}: {agreed}/{checked} entries agree");
    }
}
