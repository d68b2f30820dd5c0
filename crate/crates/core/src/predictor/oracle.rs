//! Ground-truth stand-ins for a trained model.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{one_hot, PredictError, PredictionInput, Predictor, PredictorOutput, Probabilities, RawPose, RegressionMode};
use crate::phantom::compute_class_labels;
use crate::rng::{mix64, stream_rng};
use crate::transform::{
    inverse_compose, quat_to_euler, quat_to_matrix, transform_to_anchors, EulerConvention, RigidTransform, UnitQuaternion,
    Vec3,
};

/// Step limits for a capped oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCap {
    /// Maximum translation norm, voxels.
    pub max_translation: f64,
    /// Maximum rotation angle, degrees.
    pub max_rotation_deg: f64,
}

/// Returns the exact relative transform to the target, optionally clipped.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    target: RigidTransform,
    cap: Option<OracleCap>,
    representation: RegressionMode,
    plane_size: usize,
}

impl ExactOracle {
    pub fn new(target: RigidTransform) -> Self {
        Self { target, cap: None, representation: RegressionMode::Quat, plane_size: 0 }
    }

    pub fn capped(target: RigidTransform, cap: OracleCap) -> Self {
        Self { cap: Some(cap), ..Self::new(target) }
    }

    /// Reports the step in another parameterization (without class
    /// probabilities unless it is `Quat`). Anchors need the plane size.
    pub fn with_representation(mut self, mode: RegressionMode, plane_size: usize) -> Self {
        self.representation = mode;
        self.plane_size = plane_size;
        self
    }

    /// The (possibly capped) step from `pose` towards the target.
    pub fn step(&self, pose: &RigidTransform) -> RigidTransform {
        let mut delta = inverse_compose(&self.target, pose);
        if let Some(cap) = self.cap {
            let n = delta.translation.norm();
            if n > cap.max_translation {
                delta.translation = delta.translation * (cap.max_translation / n);
            }
            delta.rotation = delta.rotation.clamp_angle(cap.max_rotation_deg.to_radians());
        }
        delta
    }

    fn output_for(&self, delta: &RigidTransform) -> Result<PredictorOutput, PredictError> {
        let t = delta.translation;
        let pose = match self.representation {
            RegressionMode::Quat => {
                let labels = compute_class_labels(delta);
                return Ok(PredictorOutput {
                    pose: RawPose::Quaternion { t, q: delta.rotation.to_array() },
                    p: Some(one_hot(labels.translation.index())),
                    q: Some(one_hot(labels.rotation.index())),
                });
            }
            RegressionMode::Euler => RawPose::Euler {
                t,
                radians: quat_to_euler(&delta.rotation, EulerConvention::Xyz).angles.degrees.map(f64::to_radians),
            },
            RegressionMode::Matrix => RawPose::Matrix { t, r: quat_to_matrix(&delta.rotation).to_flat() },
            RegressionMode::Anchors => RawPose::Anchors(transform_to_anchors(delta, self.plane_size as f64)?.to_flat()),
        };
        Ok(PredictorOutput { pose, p: None, q: None })
    }
}

impl Predictor for ExactOracle {
    fn predict(&self, input: &PredictionInput<'_>) -> Result<PredictorOutput, PredictError> {
        self.output_for(&self.step(input.pose))
    }
}

/// Exact oracle with Gaussian translation noise, a random-axis rotation of
/// Gaussian magnitude, and softened class probabilities.
///
/// The noise stream is a pure function of `(seed, queried pose)`, so the
/// oracle is shareable across threads and reproducible in any call order.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    exact: ExactOracle,
    sigma_translation: f64,
    sigma_rotation_deg: f64,
    epsilon: f64,
    seed: u64,
}

impl NoisyOracle {
    pub fn new(
        exact: ExactOracle,
        sigma_translation: f64,
        sigma_rotation_deg: f64,
        epsilon: f64,
        seed: u64,
    ) -> Self {
        assert!(sigma_translation >= 0.0 && sigma_rotation_deg >= 0.0, "noise sigmas must be nonnegative");
        assert!((0.0..=1.0).contains(&epsilon), "epsilon must lie in [0, 1]");
        Self { exact, sigma_translation, sigma_rotation_deg, epsilon, seed }
    }

    fn pose_key(pose: &RigidTransform) -> u64 {
        let t = pose.translation.to_array();
        let q = pose.rotation.to_array();
        t.iter().chain(q.iter()).fold(0u64, |acc, v| mix64(acc ^ v.to_bits()))
    }

    fn soften(&self, index: usize) -> Probabilities {
        let mut p = [self.epsilon / 5.0; 6];
        p[index] = 1.0 - self.epsilon;
        p
    }
}

impl Predictor for NoisyOracle {
    fn predict(&self, input: &PredictionInput<'_>) -> Result<PredictorOutput, PredictError> {
        let delta = self.exact.step(input.pose);
        let labels = compute_class_labels(&delta);
        let mut rng = stream_rng(self.seed, Self::pose_key(input.pose));

        let mut t = delta.translation;
        if self.sigma_translation > 0.0 {
            let n = Normal::new(0.0, self.sigma_translation).expect("finite sigma");
            t += Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
        }
        let mut q = delta.rotation;
        if self.sigma_rotation_deg > 0.0 {
            let axis = loop {
                let a: Vec3 = Vec3::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                if a.norm() > 1e-12 {
                    break a;
                }
            };
            let angle: f64 = rng.sample::<f64, _>(StandardNormal) * self.sigma_rotation_deg.to_radians();
            q = q * UnitQuaternion::from_axis_angle(axis, angle);
        }
        Ok(PredictorOutput {
            pose: RawPose::Quaternion { t, q: q.to_array() },
            p: Some(self.soften(labels.translation.index())),
            q: Some(self.soften(labels.rotation.index())),
        })
    }
}
