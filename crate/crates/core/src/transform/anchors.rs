use super::rotation::{matrix_to_quat, orthogonalize_matrix};
use super::{RigidTransform, TransformError, Vec3};

/// World positions of three fixed plane points: centre, bottom-left corner
/// and bottom-right corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorPoints {
    pub centre: Vec3,
    pub bottom_left: Vec3,
    pub bottom_right: Vec3,
}

impl AnchorPoints {
    pub fn to_flat(&self) -> [f64; 9] {
        let [a, b, c] = [self.centre, self.bottom_left, self.bottom_right];
        [a.x, a.y, a.z, b.x, b.y, b.z, c.x, c.y, c.z]
    }

    pub fn from_flat(v: [f64; 9]) -> Self {
        Self {
            centre: Vec3::new(v[0], v[1], v[2]),
            bottom_left: Vec3::new(v[3], v[4], v[5]),
            bottom_right: Vec3::new(v[6], v[7], v[8]),
        }
    }

    pub fn points(&self) -> [Vec3; 3] {
        [self.centre, self.bottom_left, self.bottom_right]
    }
}

/// Plane-local coordinates of the anchors for a plane of side `s` pixels.
pub fn local_anchors(s: f64) -> [Vec3; 3] {
    let h = (s - 1.0) / 2.0;
    [Vec3::ZERO, Vec3::new(-h, -h, 0.0), Vec3::new(h, -h, 0.0)]
}

fn check_size(s: f64) -> Result<(), TransformError> {
    if s > 1.0 && s.is_finite() {
        Ok(())
    } else {
        Err(TransformError::InvalidPlaneSize(s))
    }
}

pub fn transform_to_anchors(t: &RigidTransform, s: f64) -> Result<AnchorPoints, TransformError> {
    check_size(s)?;
    let [a, b, c] = local_anchors(s).map(|p| t.apply(p));
    Ok(AnchorPoints { centre: a, bottom_left: b, bottom_right: c })
}

/// Recovers a rigid transform from (possibly noisy) anchors.
///
/// Local +u is `A3 - A2`; local +v is the component of `A1 - mid(A2, A3)`
/// orthogonal to it; the normal is their cross product. The translation is
/// the least-squares fit of the three points given that rotation.
pub fn anchors_to_transform(a: &AnchorPoints, s: f64) -> Result<RigidTransform, TransformError> {
    check_size(s)?;
    let span = a.bottom_right - a.bottom_left;
    let up = a.centre - (a.bottom_left + a.bottom_right) * 0.5;
    let span_n = span.norm();
    if !(span_n > 1e-9) {
        return Err(TransformError::DegenerateAnchors);
    }
    let u = span / span_n;
    let v_raw = up - u * up.dot(u);
    let v_n = v_raw.norm();
    if !(v_n > 1e-9 * up.norm().max(span_n)) {
        return Err(TransformError::DegenerateAnchors);
    }
    let v = v_raw / v_n;
    let w = u.cross(v);
    // Rows of Rᵀ are the frame axes; orthogonalize and transpose back.
    let rt = orthogonalize_matrix([u.to_array(), v.to_array(), w.to_array()])
        .map_err(|_| TransformError::DegenerateAnchors)?;
    let r = rt.rows();
    let cols = [
        [r[0][0], r[1][0], r[2][0]],
        [r[0][1], r[1][1], r[2][1]],
        [r[0][2], r[1][2], r[2][2]],
    ];
    let rotation = matrix_to_quat(&super::RotationMatrix::new(cols)?)?;

    let locals = local_anchors(s);
    let world_mean = a.points().iter().fold(Vec3::ZERO, |acc, &p| acc + p) / 3.0;
    let local_mean = locals.iter().fold(Vec3::ZERO, |acc, &p| acc + p) / 3.0;
    let translation = world_mean - rotation.rotate(local_mean);
    Ok(RigidTransform::new(translation, rotation))
}
