use std::fmt;
use std::ops::Mul;

use super::{TransformError, Vec3, ROTATION_TOLERANCE};

/// Unit quaternion `(w, x, y, z)` kept in the canonical hemisphere `w >= 0`.
///
/// When `w == 0` exactly, the first nonzero vector component is made positive
/// so that every rotation has a single stored representative.
#[derive(Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl fmt::Debug for UnitQuaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UnitQuaternion({}, {}, {}, {})", self.w, self.x, self.y, self.z)
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

fn canonical_sign(q: [f64; 4]) -> f64 {
    for c in q {
        if c > 0.0 {
            return 1.0;
        }
        if c < 0.0 {
            return -1.0;
        }
    }
    1.0
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes and canonicalizes an arbitrary 4-vector.
    pub fn from_raw(raw: [f64; 4]) -> Result<Self, TransformError> {
        normalize_quat(raw)
    }

    /// Builds a rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::canonicalized([c, a.x * s, a.y * s, a.z * s])
    }

    /// Rotation vector (axis times angle in radians) to quaternion.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    /// Accepts an already-unit 4-vector verbatim (sign-canonicalized only);
    /// anything off the unit sphere by more than 1e-12 is renormalized.
    pub fn from_unit_components(q: [f64; 4]) -> Result<Self, TransformError> {
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() <= 1e-12 {
            Ok(Self::canonicalized(q))
        } else {
            normalize_quat(q)
        }
    }

    fn canonicalized(q: [f64; 4]) -> Self {
        let s = canonical_sign(q);
        Self { w: s * q[0], x: s * q[1], y: s * q[2], z: s * q[3] }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn conjugate(&self) -> Self {
        Self::canonicalized([self.w, -self.x, -self.y, -self.z])
    }

    pub fn dot(&self, o: &UnitQuaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Euclidean distance between the two 4-vectors, minimized over sign.
    pub fn distance_up_to_sign(&self, o: &UnitQuaternion) -> f64 {
        let a = self.to_array();
        let b = o.to_array();
        let plus: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum();
        let minus: f64 = a.iter().zip(&b).map(|(p, q)| (p + q).powi(2)).sum();
        plus.min(minus).sqrt()
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }

    /// Unit rotation axis and angle in radians. The axis of the identity is +x.
    pub fn axis_angle(&self) -> (Vec3, f64) {
        let v = self.vector();
        let n = v.norm();
        if n == 0.0 {
            return (Vec3::new(1.0, 0.0, 0.0), 0.0);
        }
        (v / n, 2.0 * n.atan2(self.w))
    }

    /// Rotation vector (axis times angle in radians).
    pub fn rotation_vector(&self) -> Vec3 {
        let (axis, angle) = self.axis_angle();
        axis * angle
    }

    /// Same axis, angle clamped to at most `max_angle` radians.
    pub fn clamp_angle(&self, max_angle: f64) -> Self {
        let (axis, angle) = self.axis_angle();
        if angle <= max_angle {
            *self
        } else {
            Self::from_axis_angle(axis, max_angle)
        }
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    fn mul(self, o: UnitQuaternion) -> UnitQuaternion {
        let w = self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z;
        let x = self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y;
        let y = self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x;
        let z = self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w;
        // Renormalize only when drift is visible, so multiplying by the
        // identity stays bit-exact.
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if (n - 1.0).abs() > 1e-12 {
            UnitQuaternion::canonicalized([w / n, x / n, y / n, z / n])
        } else {
            UnitQuaternion::canonicalized([w, x, y, z])
        }
    }
}

/// Normalizes a raw 4-vector `(w, x, y, z)` and flips it into `w >= 0`.
pub fn normalize_quat(raw: [f64; 4]) -> Result<UnitQuaternion, TransformError> {
    let n = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(TransformError::DegenerateQuaternion(n));
    }
    Ok(UnitQuaternion::canonicalized(raw.map(|c| c / n)))
}

/// Proper rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    rows: [[f64; 3]; 3],
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Validates `RᵀR = I` and `det R = +1` within [`ROTATION_TOLERANCE`].
    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self, TransformError> {
        let orthogonality = orthogonality_error(&rows);
        let determinant = det3(&rows);
        if !(orthogonality <= ROTATION_TOLERANCE) || !((determinant - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(TransformError::NotARotation { orthogonality, determinant });
        }
        Ok(Self { rows })
    }

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Result<Self, TransformError> {
        Self::new([[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]])
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.rows
    }

    pub fn to_flat(&self) -> [f64; 9] {
        let r = &self.rows;
        [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    pub fn column(&self, c: usize) -> Vec3 {
        Vec3::new(self.rows[0][c], self.rows[1][c], self.rows[2][c])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.rows)
    }

    pub fn frobenius_distance(&self, o: &RotationMatrix) -> f64 {
        self.to_flat()
            .iter()
            .zip(o.to_flat().iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn orthogonality_error(m: &[[f64; 3]; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            let e = (dot - expected).abs();
            if e.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(e);
        }
    }
    worst
}

pub fn quat_to_matrix(q: &UnitQuaternion) -> RotationMatrix {
    let [w, x, y, z] = q.to_array();
    RotationMatrix {
        rows: [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ],
    }
}

/// Shepperd's method: picks the numerically largest of `w, x, y, z` to divide by.
pub fn matrix_to_quat(r: &RotationMatrix) -> Result<UnitQuaternion, TransformError> {
    // Re-validate: a RotationMatrix may have been built from an unchecked source.
    let m = RotationMatrix::new(r.rows)?.rows;
    let trace = m[0][0] + m[1][1] + m[2][2];
    let q = if trace > m[0][0].max(m[1][1]).max(m[2][2]) {
        let s = (trace + 1.0).sqrt() * 2.0;
        [0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    } else if m[0][0] >= m[1][1] && m[0][0] >= m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    } else if m[1][1] >= m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s]
    };
    normalize_quat(q)
}

/// Projects a raw 3×3 prediction onto a proper rotation by ordered
/// Gram–Schmidt on rows 1 and 2; the third row is rebuilt as their cross
/// product, so reflections come out with determinant +1. Not the
/// Frobenius-nearest rotation, but close at small perturbations.
pub fn orthogonalize_matrix(raw: [[f64; 3]; 3]) -> Result<RotationMatrix, TransformError> {
    let rows: Vec<Vec3> = raw.iter().map(|r| Vec3::from(*r)).collect();
    let scale: f64 = rows.iter().map(|r| r.norm()).product();
    if !scale.is_finite() || !(det3(&raw).abs() > 1e-9 * scale) {
        return Err(TransformError::DegenerateRotation);
    }
    let e1 = rows[0] / rows[0].norm();
    let r2 = rows[1] - e1 * rows[1].dot(e1);
    let n2 = r2.norm();
    if !(n2 > 1e-9 * rows[1].norm()) {
        return Err(TransformError::DegenerateRotation);
    }
    let e2 = r2 / n2;
    let e3 = e1.cross(e2);
    Ok(RotationMatrix { rows: [e1.to_array(), e2.to_array(), e3.to_array()] })
}

/// Angle of the relative rotation `q1⁻¹ q2`, in degrees, range `[0, 180]`.
///
/// Equal to `2·acos(|⟨q1,q2⟩|)`; evaluated through `atan2` for accuracy near 0.
pub fn geodesic_angle(q1: &UnitQuaternion, q2: &UnitQuaternion) -> f64 {
    (q1.conjugate() * *q2).angle().to_degrees()
}
