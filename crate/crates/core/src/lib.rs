//! Plane detection in 3D volumes by iterative regression of rigid transforms.
//!
//! A predictor looks at the 2D image sampled on the current plane and returns
//! the relative transform that should bring that plane onto a target plane.
//! Repeating the sample/predict/compose loop walks the plane towards the
//! target. The crate provides:
//!
//! - [`transform`]: rigid-transform algebra and conversions between
//!   quaternions, rotation matrices, intrinsic Euler angles and anchor points.
//! - [`volume`]: volumes, trilinear plane extraction and the on-disk formats.
//! - [`phantom`]: synthetic volumes with a known target plane, pose sampling
//!   and labelled training samples.
//! - [`predictor`]: oracle predictors and a small trainable convolutional
//!   regressor with regression and classification heads.
//! - [`inference`]: the iterative loop, the confidence-weighted update and
//!   multi-initialization averaging.
//! - [`metrics`]: plane distance/angle, PSNR, SSIM and report aggregation.
//! - [`experiment`]: configuration and the end-to-end commands used by the CLI.

pub mod rng;
pub mod transform;
pub mod phantom;
pub mod volume;
pub mod predictor;
pub mod inference;
pub mod metrics;
pub mod experiment;

pub use transform::{compose, inverse_compose, RigidTransform, UnitQuaternion, Vec3};
