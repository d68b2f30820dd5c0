//! Pose predictors.
//!
//! A [`Predictor`] maps the current plane (its image, and for oracles its
//! pose) to a relative transform in the plane's local frame, optionally with
//! 6-way confidence vectors over signed translation axes (`P`) and signed
//! rotation axes (`Q`).

mod checkpoint;
pub mod loss;
mod network;
mod oracle;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::{RigidTransform, TransformError, Vec3};
use crate::volume::{InputMode, PlaneImage, Volume};

pub use checkpoint::{load_model, read_model, save_model, write_model, CheckpointError, CHECKPOINT_MAGIC};
pub use network::{Architecture, ModelError, RegressorModel};
pub use oracle::{ExactOracle, NoisyOracle, OracleCap};

pub type Probabilities = [f64; 6];

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("input shape error: expected {expected_channels} image(s) of size {expected_size}, got {channels} of size {size}")]
    InputShape { expected_channels: usize, expected_size: usize, channels: usize, size: usize },
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Rotation/translation parameterization regressed by a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RegressionMode {
    /// Translation + quaternion.
    #[default]
    Quat,
    /// Translation + intrinsic xyz Euler angles (radians).
    Euler,
    /// Translation + row-major rotation matrix.
    Matrix,
    /// Centre, bottom-left and bottom-right anchor points.
    Anchors,
}

impl RegressionMode {
    pub const ALL: [RegressionMode; 4] =
        [RegressionMode::Quat, RegressionMode::Euler, RegressionMode::Matrix, RegressionMode::Anchors];

    /// Width of the rotation (or anchor) head.
    pub fn regression_len(self) -> usize {
        match self {
            RegressionMode::Quat => 4,
            RegressionMode::Euler => 3,
            RegressionMode::Matrix | RegressionMode::Anchors => 9,
        }
    }

    pub fn has_translation_head(self) -> bool {
        self != RegressionMode::Anchors
    }

    pub fn code(self) -> u8 {
        match self {
            RegressionMode::Quat => 0,
            RegressionMode::Euler => 1,
            RegressionMode::Matrix => 2,
            RegressionMode::Anchors => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == c)
    }
}

impl fmt::Display for RegressionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegressionMode::Quat => "quat",
            RegressionMode::Euler => "euler",
            RegressionMode::Matrix => "matrix",
            RegressionMode::Anchors => "anchors",
        })
    }
}

impl FromStr for RegressionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown regression mode '{s}' (expected quat, euler, matrix or anchors)"))
    }
}

/// Which classification heads a model carries in addition to regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct ClassHeads {
    pub translation: bool,
    pub rotation: bool,
}

impl ClassHeads {
    pub const NONE: ClassHeads = ClassHeads { translation: false, rotation: false };
    pub const BOTH: ClassHeads = ClassHeads { translation: true, rotation: true };
}

/// Raw regression output, before projection to a valid rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawPose {
    Quaternion { t: Vec3, q: [f64; 4] },
    Euler { t: Vec3, radians: [f64; 3] },
    Matrix { t: Vec3, r: [f64; 9] },
    Anchors([f64; 9]),
}

impl RawPose {
    pub fn mode(&self) -> RegressionMode {
        match self {
            RawPose::Quaternion { .. } => RegressionMode::Quat,
            RawPose::Euler { .. } => RegressionMode::Euler,
            RawPose::Matrix { .. } => RegressionMode::Matrix,
            RawPose::Anchors(_) => RegressionMode::Anchors,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorOutput {
    pub pose: RawPose,
    /// Translation-class probabilities, order `(x+, x-, y+, y-, z+, z-)`.
    pub p: Option<Probabilities>,
    /// Rotation-class probabilities, same order.
    pub q: Option<Probabilities>,
}

/// What a predictor gets to see at each iteration.
#[derive(Debug, Clone, Copy)]
pub struct PredictionInput<'a> {
    pub volume: &'a Volume,
    pub pose: &'a RigidTransform,
    pub images: &'a [PlaneImage],
}

pub trait Predictor: Send + Sync {
    fn input_mode(&self) -> InputMode {
        InputMode::Single
    }

    fn predict(&self, input: &PredictionInput<'_>) -> Result<PredictorOutput, PredictError>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn input_mode(&self) -> InputMode {
        (**self).input_mode()
    }

    fn predict(&self, input: &PredictionInput<'_>) -> Result<PredictorOutput, PredictError> {
        (**self).predict(input)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn input_mode(&self) -> InputMode {
        (**self).input_mode()
    }

    fn predict(&self, input: &PredictionInput<'_>) -> Result<PredictorOutput, PredictError> {
        (**self).predict(input)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64; 6]) -> Probabilities {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|z| (z - m).exp());
    let sum: f64 = e.iter().sum();
    e.map(|v| v / sum)
}

pub fn one_hot(index: usize) -> Probabilities {
    let mut p = [0.0; 6];
    p[index] = 1.0;
    p
}
