//! Mini-batch Adam training of a [`RegressorModel`].
//!
//! Every sample is a pure function of `(seed, sample index)`, and per-sample
//! gradients are summed in index order, so results do not depend on the
//! number of worker threads.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::{LossBreakdown, LossTarget, LossWeights};
use super::network::ModelError;
use super::{Architecture, ClassHeads, PredictError, RegressionMode, RegressorModel};
use crate::phantom::{make_training_sample, TrainingSample};
use crate::rng::stream_rng;
use crate::transform::{RigidTransform, TransformError};
use crate::volume::{InputMode, Volume, VolumeError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            steps: 2000,
            seed: 0,
            init_std: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights { alpha: self.alpha, beta: self.beta, gamma: self.gamma, delta: self.delta }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        let w = [self.alpha, self.beta, self.gamma, self.delta];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("loss weights must be finite and nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and nonnegative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0 && self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad("epsilon and init_std must be positive");
        }
        Ok(())
    }
}

/// What kind of model to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelSpec {
    pub mode: RegressionMode,
    pub heads: ClassHeads,
    pub input_mode: InputMode,
    pub architecture: Architecture,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at step {step}: non-finite loss")]
    Diverged { step: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("sample generation: {0}")]
    Sample(#[from] VolumeError),
}

/// Deterministic, index-addressed stream of training samples.
pub trait SampleSource: Sync {
    fn sample(&self, index: u64) -> Result<TrainingSample, VolumeError>;
}

/// Draws a random volume and a random pose per sample.
#[derive(Debug, Clone)]
pub struct PhantomSampler<'a> {
    volumes: &'a [(Volume, RigidTransform)],
    plane_size: usize,
    input_mode: InputMode,
    seed: u64,
}

impl<'a> PhantomSampler<'a> {
    pub fn new(
        volumes: &'a [(Volume, RigidTransform)],
        plane_size: usize,
        input_mode: InputMode,
        seed: u64,
    ) -> Result<Self, TrainError> {
        if volumes.is_empty() {
            return Err(TrainError::Config("no training volumes".into()));
        }
        Ok(Self { volumes, plane_size, input_mode, seed })
    }
}

impl SampleSource for PhantomSampler<'_> {
    fn sample(&self, index: u64) -> Result<TrainingSample, VolumeError> {
        let mut rng = stream_rng(self.seed, index);
        let (v, gt) = &self.volumes[rng.random_range(0..self.volumes.len())];
        make_training_sample(v, gt, self.plane_size, self.input_mode, &mut rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RegressorModel,
    /// Batch-mean loss before each update.
    pub curve: Vec<LossRecord>,
}

/// The model training starts from for a given spec and config.
pub fn initial_model(spec: &ModelSpec, cfg: &TrainConfig) -> Result<RegressorModel, TrainError> {
    Ok(RegressorModel::random(
        spec.architecture.clone(),
        spec.mode,
        spec.heads,
        spec.input_mode,
        cfg.init_std,
        &mut stream_rng(cfg.seed, u64::MAX),
    )?)
}

pub fn train(source: &dyn SampleSource, spec: &ModelSpec, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with_progress(source, spec, cfg, |_| {})
}

/// Like [`train`], calling `progress` after every step.
pub fn train_with_progress(
    source: &dyn SampleSource,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&LossRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mut model = initial_model(spec, cfg)?;
    let n = model.params().len();
    let weights = cfg.weights();
    let s = spec.architecture.input_size;
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut curve = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let base = step as u64 * cfg.batch_size as u64;
        let per_sample: Vec<Result<(LossBreakdown, Vec<f64>), TrainError>> = (0..cfg.batch_size as u64)
            .into_par_iter()
            .map(|i| {
                let sample = source.sample(base + i)?;
                let target = LossTarget::from_sample(&sample, spec.mode, s)?;
                let mut g = vec![0.0; n];
                let l = model.accumulate_gradient(&sample.images, &target, &weights, &mut g)?;
                Ok((l, g))
            })
            .collect();

        let mut loss = LossBreakdown::default();
        let mut grad = vec![0.0; n];
        for r in per_sample {
            let (l, g) = r?;
            loss.add(&l);
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let inv = 1.0 / cfg.batch_size as f64;
        loss.scale(inv);
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::Diverged { step });
        }

        let t = (step + 1) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in model.params_mut().iter_mut().zip(&grad).zip(&mut m).zip(&mut v) {
            let g = g * inv;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
        let rec = LossRecord { step, loss };
        progress(&rec);
        curve.push(rec);
    }

    // Checkpoints store f32; round once so a saved model equals the returned one.
    for p in model.params_mut() {
        *p = *p as f32 as f64;
    }
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(TrainError::Diverged { step: cfg.steps.saturating_sub(1) });
    }
    Ok(TrainOutcome { model, curve })
}

pub fn write_loss_csv<W: Write>(curve: &[LossRecord], w: W) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["step", "total", "translation", "rotation", "anchors", "translation_class", "rotation_class"])?;
    for r in curve {
        let l = &r.loss;
        let row = [l.total, l.translation, l.rotation, l.anchors, l.translation_class, l.rotation_class];
        wr.write_record(std::iter::once(r.step.to_string()).chain(row.iter().map(|v| v.to_string())))?;
    }
    wr.flush()
}
