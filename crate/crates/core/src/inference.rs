//! Iterative plane search.
//!
//! Starting from an initial pose, each iteration samples the image on the
//! current plane, asks a predictor for a relative transform in the plane's
//! own frame and composes it onto the pose. Several random starts can be run
//! and their end poses averaged.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phantom::sample_random_transform;
use crate::predictor::{ClassHeads, PredictError, PredictionInput, Predictor, PredictorOutput, Probabilities, RawPose};
use crate::rng::stream_rng;
use crate::transform::{
    anchors_to_transform, compose, euler_to_quat, geodesic_angle, matrix_to_quat, normalize_quat, orthogonalize_matrix,
    quat_to_euler, AnchorPoints, Axis, EulerAngles, EulerConvention, RigidTransform, TransformError, UnitQuaternion,
    Vec3,
};
use crate::volume::{extract_input, PlaneImage, Volume, VolumeError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Iterations per run.
    pub iterations: usize,
    pub plane_size: usize,
    /// Random initializations averaged by [`multi_init_infer`].
    pub init_count: usize,
    pub seed: u64,
    /// Keep every intermediate pose; otherwise only the first and last.
    pub record_trajectory: bool,
    /// Which class-probability outputs, when a predictor supplies them, weight
    /// the update. Disabled heads fall back to the plain normalized prediction.
    pub confidence: ClassHeads,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { iterations: 10, plane_size: 32, init_count: 5, seed: 0, record_trajectory: true, confidence: ClassHeads::BOTH }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.iterations == 0 || self.init_count == 0 {
            return Err(InferenceError::Config("iterations and init_count must be at least 1".into()));
        }
        if self.plane_size < 2 {
            return Err(InferenceError::Config(format!("plane size {} is below 2", self.plane_size)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid inference config: {0}")]
    Config(String),
    #[error("iteration {iteration}: {source}")]
    Step {
        iteration: usize,
        #[source]
        source: StepError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub pose: RigidTransform,
    /// Distance / angle (degrees) to a known target, once annotated.
    pub dx: Option<f64>,
    pub dtheta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    fn push(&mut self, iteration: usize, pose: RigidTransform) {
        self.points.push(TrajectoryPoint { iteration, pose, dx: None, dtheta: None });
    }

    /// Fills in the errors against `gt`. Inference itself never sees `gt`.
    pub fn annotate(&mut self, gt: &RigidTransform) {
        for p in &mut self.points {
            p.dx = Some((p.pose.translation - gt.translation).norm());
            p.dtheta = Some(geodesic_angle(&p.pose.rotation, &gt.rotation));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub pose: RigidTransform,
    pub trajectory: Trajectory,
    /// The relative transform applied in the last iteration.
    pub last_step: RigidTransform,
}

impl InferenceResult {
    /// Size of the last step: translation norm (voxels) plus rotation angle
    /// (degrees), i.e. one degree is weighed like one voxel.
    pub fn last_step_norm(&self) -> f64 {
        self.last_step.translation.norm() + self.last_step.rotation.angle().to_degrees()
    }
}

/// Confidence-weighted relative transform.
///
/// Each translation component is scaled by the larger of its two signed-axis
/// probabilities. The rotation is replaced by a single rotation about the most
/// probable rotation axis (ties go to the earlier axis), whose angle is that
/// axis's leading Euler angle of `q` scaled by the winning probability.
pub fn confidence_update(t: Vec3, q: &UnitQuaternion, p: &Probabilities, q_probs: &Probabilities) -> RigidTransform {
    RigidTransform::new(weighted_translation(t, p), weighted_rotation(q, q_probs))
}

fn weighted_translation(t: Vec3, p: &Probabilities) -> Vec3 {
    Vec3::new(t.x * p[0].max(p[1]), t.y * p[2].max(p[3]), t.z * p[4].max(p[5]))
}

fn weighted_rotation(q: &UnitQuaternion, probs: &Probabilities) -> UnitQuaternion {
    let mut best = 0;
    for i in 1..probs.len() {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    let axis = Axis::from_index(best / 2);
    let convention = EulerConvention::leading(axis);
    let theta = quat_to_euler(q, convention).angles.about(axis);
    let mut degrees = [0.0; 3];
    degrees[axis.index()] = probs[best] * theta;
    euler_to_quat(&EulerAngles::new(degrees, convention))
}

/// Turns a raw prediction into a valid relative transform: the
/// confidence-weighted update where class probabilities are available and
/// enabled in `confidence`, otherwise the projection matching the regression mode.
pub fn output_to_delta(
    out: &PredictorOutput,
    plane_size: usize,
    confidence: ClassHeads,
) -> Result<RigidTransform, TransformError> {
    let delta = match out.pose {
        RawPose::Quaternion { t, q } => {
            let q = normalize_quat(q)?;
            let p = out.p.as_ref().filter(|_| confidence.translation);
            let q_probs = out.q.as_ref().filter(|_| confidence.rotation);
            let t = p.map_or(t, |p| weighted_translation(t, p));
            let r = q_probs.map_or(q, |probs| weighted_rotation(&q, probs));
            RigidTransform::new(t, r)
        }
        RawPose::Euler { t, radians } => {
            RigidTransform::new(t, euler_to_quat(&EulerAngles::new(radians.map(f64::to_degrees), EulerConvention::Xyz)))
        }
        RawPose::Matrix { t, r } => {
            let rows = [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]];
            RigidTransform::new(t, matrix_to_quat(&orthogonalize_matrix(rows)?)?)
        }
        RawPose::Anchors(a) => anchors_to_transform(&AnchorPoints::from_flat(a), plane_size as f64)?,
    };
    if !delta.is_finite() {
        return Err(TransformError::DegenerateRotation);
    }
    Ok(delta)
}

/// Runs `cfg.iterations` sample/predict/compose steps from `init`.
pub fn infer_plane<P: Predictor + ?Sized>(
    volume: &Volume,
    predictor: &P,
    cfg: &InferenceConfig,
    init: &RigidTransform,
) -> Result<InferenceResult, InferenceError> {
    infer_plane_observed(volume, predictor, cfg, init, |_, _, _| {})
}

/// [`infer_plane`] with a callback seeing each iteration's pose and images.
pub fn infer_plane_observed<P: Predictor + ?Sized>(
    volume: &Volume,
    predictor: &P,
    cfg: &InferenceConfig,
    init: &RigidTransform,
    mut observe: impl FnMut(usize, &RigidTransform, &[PlaneImage]),
) -> Result<InferenceResult, InferenceError> {
    cfg.validate()?;
    let mut pose = *init;
    let mut trajectory = Trajectory::default();
    trajectory.push(0, pose);
    let mut last_step = RigidTransform::IDENTITY;
    for iteration in 0..cfg.iterations {
        let fail = |source: StepError| InferenceError::Step { iteration, source };
        let images = extract_input(volume, &pose, cfg.plane_size, predictor.input_mode())
            .map_err(|e| fail(e.into()))?;
        observe(iteration, &pose, &images);
        let out = predictor
            .predict(&PredictionInput { volume, pose: &pose, images: &images })
            .map_err(|e| fail(e.into()))?;
        last_step = output_to_delta(&out, cfg.plane_size, cfg.confidence).map_err(|e| fail(e.into()))?;
        pose = compose(&pose, &last_step);
        if cfg.record_trajectory || iteration + 1 == cfg.iterations {
            trajectory.push(iteration + 1, pose);
        }
    }
    Ok(InferenceResult { pose, trajectory, last_step })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiInitResult {
    pub pose: RigidTransform,
    pub runs: Vec<InferenceResult>,
    /// Which runs entered the average.
    pub included: Vec<bool>,
    /// Every run ended outside the volume; `pose` is the run with the smallest last step.
    pub low_confidence: bool,
}

/// Initial poses used by [`multi_init_infer`]; a pure function of `cfg.seed`.
pub fn initial_poses(volume: &Volume, cfg: &InferenceConfig) -> Vec<RigidTransform> {
    (0..cfg.init_count as u64).map(|k| sample_random_transform(volume, &mut stream_rng(cfg.seed, k))).collect()
}

/// Mean translation and sign-aligned normalized quaternion mean.
pub fn average_poses(poses: &[RigidTransform]) -> Result<RigidTransform, TransformError> {
    match poses {
        [] => Err(TransformError::DegenerateRotation),
        [only] => Ok(*only),
        _ => {
            let n = poses.len() as f64;
            let mut t = Vec3::ZERO;
            let mut acc = [0.0; 4];
            let reference = poses[0].rotation;
            for p in poses {
                t += p.translation;
                let sign = if p.rotation.dot(&reference) < 0.0 { -1.0 } else { 1.0 };
                for (a, c) in acc.iter_mut().zip(p.rotation.to_array()) {
                    *a += sign * c;
                }
            }
            Ok(RigidTransform::new(t / n, normalize_quat(acc)?))
        }
    }
}

/// Runs inference from `cfg.init_count` random starts and averages the end
/// poses of the runs that stay inside the volume.
pub fn multi_init_infer<P: Predictor + ?Sized>(
    volume: &Volume,
    predictor: &P,
    cfg: &InferenceConfig,
) -> Result<MultiInitResult, InferenceError> {
    cfg.validate()?;
    let runs = initial_poses(volume, cfg)
        .par_iter()
        .map(|init| infer_plane(volume, predictor, cfg, init))
        .collect::<Result<Vec<_>, _>>()?;
    let included: Vec<bool> = runs.iter().map(|r| volume.contains_world(r.pose.translation)).collect();
    let kept: Vec<RigidTransform> = runs.iter().zip(&included).filter(|(_, &k)| k).map(|(r, _)| r.pose).collect();
    if kept.is_empty() {
        let best = runs
            .iter()
            .min_by(|a, b| a.last_step_norm().total_cmp(&b.last_step_norm()))
            .expect("at least one run");
        return Ok(MultiInitResult { pose: best.pose, runs: runs.clone(), included, low_confidence: true });
    }
    let pose = average_poses(&kept).map_err(|e| InferenceError::Step {
        iteration: cfg.iterations,
        source: e.into(),
    })?;
    Ok(MultiInitResult { pose, runs, included, low_confidence: false })
}

/// Writes `(run_id, iter, tx, ty, tz, qw, qx, qy, qz, dx, dtheta)` rows;
/// error columns are empty when a trajectory is not annotated.
pub fn write_trajectory_csv<'a, W: Write>(
    w: W,
    runs: impl IntoIterator<Item = (usize, &'a Trajectory)>,
) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["run_id", "iter", "tx", "ty", "tz", "qw", "qx", "qy", "qz", "dx", "dtheta"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for (run, traj) in runs {
        for p in &traj.points {
            let t = p.pose.translation.to_array();
            let q = p.pose.rotation.to_array();
            let mut row = vec![run.to_string(), p.iteration.to_string()];
            row.extend(t.iter().chain(q.iter()).map(|v| v.to_string()));
            row.push(opt(p.dx));
            row.push(opt(p.dtheta));
            wr.write_record(&row)?;
        }
    }
    wr.flush()
}
