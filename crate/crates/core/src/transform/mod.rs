//! Rigid-transformation algebra.
//!
//! Poses are stored canonically as a translation plus a unit quaternion. All
//! other representations (rotation matrices, intrinsic Euler angles, anchor
//! points) convert at the boundary.
//!
//! The world frame has its origin at the volume centre. A transform `T` moves
//! the identity plane (spanning world x/y, normal along world z) to an
//! arbitrary plane. A relative transform `delta` is always expressed in the
//! local frame of the plane it is applied to:
//!
//! ```text
//! compose(T, delta).rotation    = T.rotation * delta.rotation
//! compose(T, delta).translation = T.translation + T.rotation * delta.translation
//! ```

mod anchors;
mod euler;
mod record;
mod rotation;

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anchors::{anchors_to_transform, transform_to_anchors, AnchorPoints};
pub use euler::{euler_to_quat, quat_to_euler, EulerAngles, EulerConvention, EulerDecomposition};
pub use record::{parse_record, parse_records, write_record, RecordError};
pub use rotation::{
    geodesic_angle, matrix_to_quat, normalize_quat, orthogonalize_matrix, quat_to_matrix,
    RotationMatrix, UnitQuaternion,
};

/// Tolerance used when deciding whether a matrix is a proper rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("degenerate quaternion prediction (norm {0:e})")]
    DegenerateQuaternion(f64),
    #[error("degenerate rotation prediction: rows are not linearly independent")]
    DegenerateRotation,
    #[error("not a rotation: orthogonality error {orthogonality:e}, determinant {determinant}")]
    NotARotation { orthogonality: f64, determinant: f64 },
    #[error("degenerate anchor prediction: anchor points are collinear")]
    DegenerateAnchors,
    #[error("plane size must be greater than 1, got {0}")]
    InvalidPlaneSize(f64),
}

/// Coordinate axis of the current plane's frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        match i {
            0 => Axis::X,
            1 => Axis::Y,
            2 => Axis::Z,
            _ => panic!("axis index out of range: {i}"),
        }
    }

    pub fn unit(self) -> Vec3 {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        Vec3::from(v)
    }
}

/// A 3-vector in voxel units (1 voxel is treated as 1 mm).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range: {i}"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, k: f64) -> Vec3 {
        Vec3::new(self.x / k, self.y / k, self.z / k)
    }
}

/// Rigid transform: rotation followed by translation, `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub translation: Vec3,
    pub rotation: UnitQuaternion,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        translation: Vec3::ZERO,
        rotation: UnitQuaternion::IDENTITY,
    };

    pub fn new(translation: Vec3, rotation: UnitQuaternion) -> Self {
        Self { translation, rotation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(translation, UnitQuaternion::IDENTITY)
    }

    pub fn from_rotation(rotation: UnitQuaternion) -> Self {
        Self::new(Vec3::ZERO, rotation)
    }

    /// Maps a point from this transform's local frame into the parent frame.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.conjugate();
        RigidTransform::new(-inv.rotate(self.translation), inv)
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite() && self.rotation.is_finite()
    }
}

/// `base ⊕ delta`: applies `delta`, expressed in `base`'s local frame.
pub fn compose(base: &RigidTransform, delta: &RigidTransform) -> RigidTransform {
    RigidTransform {
        translation: base.translation + base.rotation.rotate(delta.translation),
        rotation: base.rotation * delta.rotation,
    }
}

/// `target ⊖ base`: the relative transform that moves `base` onto `target`,
/// expressed in `base`'s local frame.
pub fn inverse_compose(target: &RigidTransform, base: &RigidTransform) -> RigidTransform {
    let inv = base.rotation.conjugate();
    RigidTransform {
        translation: inv.rotate(target.translation - base.translation),
        rotation: inv * target.rotation,
    }
}
