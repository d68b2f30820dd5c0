//! Intrinsic Tait–Bryan Euler angles in the three axis orders used by the
//! confidence-weighted update: `xyz`, `yxz` and `zxy`.
//!
//! Convention `abc` means `R = R_a(θ_a) · R_b(θ_b) · R_c(θ_c)`: rotate about
//! the plane's own `a` axis first, then about the rotated `b`, then `c`.
//! Angles are stored per axis (`[θx, θy, θz]`) in degrees regardless of the
//! order in which they are applied.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::rotation::{quat_to_matrix, UnitQuaternion};
use super::Axis;

/// `cos(middle angle)` below this is treated as gimbal lock.
const GIMBAL_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EulerConvention {
    Xyz,
    Yxz,
    Zxy,
}

impl EulerConvention {
    pub const ALL: [EulerConvention; 3] = [EulerConvention::Xyz, EulerConvention::Yxz, EulerConvention::Zxy];

    /// Axis application order.
    pub fn order(self) -> [Axis; 3] {
        match self {
            EulerConvention::Xyz => [Axis::X, Axis::Y, Axis::Z],
            EulerConvention::Yxz => [Axis::Y, Axis::X, Axis::Z],
            EulerConvention::Zxy => [Axis::Z, Axis::X, Axis::Y],
        }
    }

    /// The convention whose first rotation is about `axis`.
    pub fn leading(axis: Axis) -> EulerConvention {
        match axis {
            Axis::X => EulerConvention::Xyz,
            Axis::Y => EulerConvention::Yxz,
            Axis::Z => EulerConvention::Zxy,
        }
    }

    /// +1 for cyclic orders of (x, y, z), -1 otherwise.
    fn parity(self) -> f64 {
        match self {
            EulerConvention::Xyz | EulerConvention::Zxy => 1.0,
            EulerConvention::Yxz => -1.0,
        }
    }
}

impl fmt::Display for EulerConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EulerConvention::Xyz => "xyz",
            EulerConvention::Yxz => "yxz",
            EulerConvention::Zxy => "zxy",
        })
    }
}

impl FromStr for EulerConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xyz" => Ok(EulerConvention::Xyz),
            "yxz" => Ok(EulerConvention::Yxz),
            "zxy" => Ok(EulerConvention::Zxy),
            other => Err(format!("unknown Euler convention '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    /// `[θx, θy, θz]` in degrees.
    pub degrees: [f64; 3],
    pub convention: EulerConvention,
}

impl EulerAngles {
    pub fn new(degrees: [f64; 3], convention: EulerConvention) -> Self {
        Self { degrees, convention }
    }

    pub fn about(&self, axis: Axis) -> f64 {
        self.degrees[axis.index()]
    }

    /// Angle of the first rotation in the convention's order.
    pub fn leading_angle(&self) -> f64 {
        self.about(self.convention.order()[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    /// Set within 1e-6 rad of gimbal lock; the third angle was then fixed to 0.
    pub degenerate: bool,
}

fn wrap_degrees(d: f64) -> f64 {
    if d <= -180.0 {
        d + 360.0
    } else {
        d
    }
}

pub fn euler_to_quat(e: &EulerAngles) -> UnitQuaternion {
    e.convention
        .order()
        .iter()
        .map(|&axis| UnitQuaternion::from_axis_angle(axis.unit(), e.about(axis).to_radians()))
        .fold(UnitQuaternion::IDENTITY, |acc, q| acc * q)
}

/// Decomposes `q` as `R_i(a) R_j(b) R_k(c)` for the order `(i, j, k)` of
/// `convention`, with `b ∈ [-90°, 90°]` and `a, c ∈ (-180°, 180°]`.
pub fn quat_to_euler(q: &UnitQuaternion, convention: EulerConvention) -> EulerDecomposition {
    let m = quat_to_matrix(q);
    let r = |row: Axis, col: Axis| m.get(row.index(), col.index());
    let [i, j, k] = convention.order();
    let eps = convention.parity();

    let cos_b = r(i, i).hypot(r(i, j));
    let b = (eps * r(i, k)).atan2(cos_b);
    let (a, c, degenerate) = if cos_b < GIMBAL_EPS {
        // Only a ± c is observable; put it all in the first angle.
        ((eps * r(k, j)).atan2(r(j, j)), 0.0, true)
    } else {
        ((-eps * r(j, k)).atan2(r(k, k)), (-eps * r(i, j)).atan2(r(i, i)), false)
    };

    let mut degrees = [0.0; 3];
    degrees[i.index()] = wrap_degrees(a.to_degrees());
    degrees[j.index()] = b.to_degrees();
    degrees[k.index()] = wrap_degrees(c.to_degrees());
    EulerDecomposition { angles: EulerAngles::new(degrees, convention), degenerate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::Vec3;

    #[test]
    fn identity_decomposes_to_zero() {
        for conv in EulerConvention::ALL {
            let d = quat_to_euler(&UnitQuaternion::IDENTITY, conv);
            assert_eq!(d.angles.degrees, [0.0, 0.0, 0.0]);
            assert!(!d.degenerate);
        }
    }

    #[test]
    fn pure_y_rotation_yxz() {
        let q = UnitQuaternion::from_axis_angle(Axis::Y.unit(), 30f64.to_radians());
        let d = quat_to_euler(&q, EulerConvention::Yxz);
        let [x, y, z] = d.angles.degrees;
        assert!(x.abs() < 1e-12 && (y - 30.0).abs() < 1e-12 && z.abs() < 1e-12);
    }

    #[test]
    fn applies_first_named_axis_first() {
        // Rx(a)·Ry(b) differs from Ry(b)·Rx(a); check the xyz product order explicitly.
        let e = EulerAngles::new([20.0, 35.0, 0.0], EulerConvention::Xyz);
        let rx = UnitQuaternion::from_axis_angle(Axis::X.unit(), 20f64.to_radians());
        let ry = UnitQuaternion::from_axis_angle(Axis::Y.unit(), 35f64.to_radians());
        assert!(euler_to_quat(&e).distance_up_to_sign(&(rx * ry)) < 1e-15);
        let e = EulerAngles::new([20.0, 35.0, 0.0], EulerConvention::Yxz);
        assert!(euler_to_quat(&e).distance_up_to_sign(&(ry * rx)) < 1e-15);
    }

    #[test]
    fn gimbal_lock_is_flagged_and_resolved() {
        for conv in EulerConvention::ALL {
            let [a, b, c] = conv.order();
            let mut deg = [0.0; 3];
            deg[a.index()] = 25.0;
            deg[b.index()] = 90.0;
            deg[c.index()] = 15.0;
            let q = euler_to_quat(&EulerAngles::new(deg, conv));
            let d = quat_to_euler(&q, conv);
            assert!(d.degenerate, "{conv}");
            assert_eq!(d.angles.about(c), 0.0);
            // The resolved angles still describe the same rotation.
            let back = euler_to_quat(&d.angles);
            assert!(back.distance_up_to_sign(&q) < 1e-6, "{conv}");
        }
    }

    #[test]
    fn half_turn_maps_to_positive_180() {
        let q = UnitQuaternion::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), std::f64::consts::PI);
        let d = quat_to_euler(&q, EulerConvention::Xyz);
        assert!((d.angles.about(Axis::X) - 180.0).abs() < 1e-9 || d.angles.about(Axis::X).abs() < 1e-9);
        for angle in d.angles.degrees {
            assert!(angle > -180.0 && angle <= 180.0);
        }
    }

    #[test]
    fn convention_parses() {
        for conv in EulerConvention::ALL {
            assert_eq!(conv.to_string().parse::<EulerConvention>().unwrap(), conv);
        }
        assert!("xzy".parse::<EulerConvention>().is_err());
    }
}
