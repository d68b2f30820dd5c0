//! Multi-task training loss.
//!
//! For translation + rotation modes:
//!
//! ```text
//! L = α‖t* − t‖² + β‖r* − r‖² − γ log P[c*] − δ log Q[k*]
//! ```
//!
//! where the rotation term compares `q* ` against `q/‖q‖` in quaternion mode,
//! Euler angles (radians) in Euler mode and all nine entries in matrix mode.
//! Anchor mode uses the unweighted `Σ‖A*ᵢ − Aᵢ‖²`. Classification terms only
//! appear when the corresponding head is present.

use serde::{Deserialize, Serialize};

use super::{PredictorOutput, Probabilities, RawPose, RegressionMode};
use crate::phantom::{ClassLabels, TrainingSample};
use crate::transform::{quat_to_euler, quat_to_matrix, transform_to_anchors, EulerConvention, RigidTransform, TransformError};

/// Lower bound applied to the probability inside `log`.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 1.0, delta: 1.0 }
    }
}

/// Regression and classification targets for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTarget {
    pub mode: RegressionMode,
    pub translation: [f64; 3],
    /// Quaternion `(w,x,y,z)` with `w >= 0`, xyz Euler radians, row-major
    /// matrix, or flattened anchors, depending on `mode`.
    pub regression: Vec<f64>,
    pub translation_class: usize,
    pub rotation_class: usize,
}

impl LossTarget {
    pub fn new(
        delta: &RigidTransform,
        labels: &ClassLabels,
        mode: RegressionMode,
        plane_size: usize,
    ) -> Result<Self, TransformError> {
        let regression = match mode {
            RegressionMode::Quat => delta.rotation.to_array().to_vec(),
            RegressionMode::Euler => quat_to_euler(&delta.rotation, EulerConvention::Xyz)
                .angles
                .degrees
                .iter()
                .map(|d| d.to_radians())
                .collect(),
            RegressionMode::Matrix => quat_to_matrix(&delta.rotation).to_flat().to_vec(),
            RegressionMode::Anchors => transform_to_anchors(delta, plane_size as f64)?.to_flat().to_vec(),
        };
        Ok(Self {
            mode,
            translation: delta.translation.to_array(),
            regression,
            translation_class: labels.translation.index(),
            rotation_class: labels.rotation.index(),
        })
    }

    pub fn from_sample(sample: &TrainingSample, mode: RegressionMode, plane_size: usize) -> Result<Self, TransformError> {
        Self::new(&sample.delta_gt, &sample.labels, mode, plane_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub translation: f64,
    pub rotation: f64,
    pub anchors: f64,
    pub translation_class: f64,
    pub rotation_class: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, o: &LossBreakdown) {
        self.total += o.total;
        self.translation += o.translation;
        self.rotation += o.rotation;
        self.anchors += o.anchors;
        self.translation_class += o.translation_class;
        self.rotation_class += o.rotation_class;
    }

    pub fn scale(&mut self, k: f64) {
        self.total *= k;
        self.translation *= k;
        self.rotation *= k;
        self.anchors *= k;
        self.translation_class *= k;
        self.rotation_class *= k;
    }
}

/// Gradients with respect to the raw head outputs (logits for classification).
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub translation: [f64; 3],
    pub regression: Vec<f64>,
    pub p_logits: Option<[f64; 6]>,
    pub q_logits: Option<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub breakdown: LossBreakdown,
    pub gradients: LossGradients,
}

fn squared_error(target: &[f64], pred: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for ((g, p), d) in target.iter().zip(pred).zip(grad.iter_mut()) {
        let e = g - p;
        sum += e * e;
        *d = -2.0 * weight * e;
    }
    weight * sum
}

fn cross_entropy(probs: &Probabilities, class: usize, weight: f64) -> (f64, [f64; 6]) {
    let p = probs[class];
    let value = -weight * p.max(PROBABILITY_FLOOR).ln();
    let mut grad = [0.0; 6];
    if p > PROBABILITY_FLOOR {
        for (i, g) in grad.iter_mut().enumerate() {
            *g = weight * (probs[i] - if i == class { 1.0 } else { 0.0 });
        }
    }
    (value, grad)
}

fn raw_parts(pose: &RawPose) -> ([f64; 3], &[f64]) {
    match pose {
        RawPose::Quaternion { t, q } => (t.to_array(), q.as_slice()),
        RawPose::Euler { t, radians } => (t.to_array(), radians.as_slice()),
        RawPose::Matrix { t, r } => (t.to_array(), r.as_slice()),
        RawPose::Anchors(a) => ([0.0; 3], a.as_slice()),
    }
}

/// Evaluates the loss and its gradient with respect to the raw outputs.
///
/// Panics if `output` and `target` use different regression modes.
pub fn evaluate(output: &PredictorOutput, target: &LossTarget, w: &LossWeights) -> LossEvaluation {
    assert_eq!(output.pose.mode(), target.mode, "output and target regression modes differ");
    let (t, reg) = raw_parts(&output.pose);
    let mut b = LossBreakdown::default();
    let mut g_t = [0.0; 3];
    let mut g_reg = vec![0.0; reg.len()];

    if target.mode.has_translation_head() {
        b.translation = squared_error(&target.translation, &t, w.alpha, &mut g_t);
    }
    match target.mode {
        RegressionMode::Quat => {
            let norm = reg.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
            let n: Vec<f64> = reg.iter().map(|c| c / norm).collect();
            let mut g_n = [0.0; 4];
            b.rotation = squared_error(&target.regression, &n, w.beta, &mut g_n);
            // d(q/|q|)/dq = (I - n nᵀ)/|q|
            let radial: f64 = n.iter().zip(&g_n).map(|(a, b)| a * b).sum();
            for i in 0..4 {
                g_reg[i] = (g_n[i] - n[i] * radial) / norm;
            }
        }
        RegressionMode::Euler | RegressionMode::Matrix => {
            b.rotation = squared_error(&target.regression, reg, w.beta, &mut g_reg);
        }
        RegressionMode::Anchors => {
            b.anchors = squared_error(&target.regression, reg, 1.0, &mut g_reg);
        }
    }

    let p_logits = output.p.map(|p| {
        let (v, g) = cross_entropy(&p, target.translation_class, w.gamma);
        b.translation_class = v;
        g
    });
    let q_logits = output.q.map(|q| {
        let (v, g) = cross_entropy(&q, target.rotation_class, w.delta);
        b.rotation_class = v;
        g
    });
    b.total = b.translation + b.rotation + b.anchors + b.translation_class + b.rotation_class;
    LossEvaluation { breakdown: b, gradients: LossGradients { translation: g_t, regression: g_reg, p_logits, q_logits } }
}
