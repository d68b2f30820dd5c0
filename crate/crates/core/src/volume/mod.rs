//! Isotropic scalar volumes and the plane-extraction function.
//!
//! Index space has voxel `(0, 0, 0)` at the origin. The world frame used by
//! every [`RigidTransform`] is index space shifted so that the volume centre
//! `((nx-1)/2, (ny-1)/2, (nz-1)/2)` is the origin. Plane pixel `(i, j)` of an
//! `s × s` image sits at plane-local `(j - (s-1)/2, (s-1)/2 - i, 0)`, so row
//! `s-1` is the bottom edge and the pixel pitch is one voxel.

mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::{compose, Axis, RigidTransform, UnitQuaternion, Vec3};

pub use io::{read_raw_f32_image, read_volume, write_pgm16, write_raw_f32_image, write_volume, VolumeHeader};

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("volume dimensions must be positive, got {0:?}")]
    EmptyDims([usize; 3]),
    #[error("data length {len} does not match dimensions {dims:?}")]
    Shape { dims: [usize; 3], len: usize },
    #[error("volume contains a non-finite value at linear index {0}")]
    NonFinite(usize),
    #[error("plane size must be at least 2, got {0}")]
    PlaneSize(usize),
    #[error("unsupported volume header: {0}")]
    Header(String),
    #[error("malformed volume sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Volume {
    /// Voxel spacing; volumes are isotropic at one voxel per millimetre.
    pub const SPACING: f64 = 1.0;

    /// `data` is x-fastest: index `x + nx * (y + ny * z)`.
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::EmptyDims(dims));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(VolumeError::Shape { dims, len: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> f64) -> Result<Self, VolumeError> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    /// Index-space position of the world origin.
    pub fn centre(&self) -> Vec3 {
        Vec3::from(self.dims.map(|n| (n as f64 - 1.0) / 2.0))
    }

    pub fn world_to_index(&self, p: Vec3) -> Vec3 {
        p + self.centre()
    }

    /// Half-extent of the volume's bounding box in world coordinates.
    pub fn half_extent(&self) -> Vec3 {
        self.centre()
    }

    pub fn contains_world(&self, p: Vec3) -> bool {
        let h = self.half_extent();
        (0..3).all(|a| p[a].abs() <= h[a])
    }

    /// Trilinear interpolation at an index-space position; 0.0 outside `[0, n-1]`.
    pub fn sample_index(&self, p: Vec3) -> f64 {
        let [nx, ny, _] = self.dims;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let c = p[a];
            if !(c >= 0.0 && c <= (n - 1) as f64) {
                return 0.0;
            }
            if n == 1 {
                continue;
            }
            let i0 = (c.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = c - i0 as f64;
        }
        let [x0, y0, z0] = base;
        let [fx, fy, fz] = frac;
        let sx = usize::from(nx > 1);
        let sy = if ny > 1 { nx } else { 0 };
        let sz = if self.dims[2] > 1 { nx * ny } else { 0 };
        let i = x0 + nx * (y0 + ny * z0);
        let d = &self.data;
        let c00 = d[i] * (1.0 - fx) + d[i + sx] * fx;
        let c10 = d[i + sy] * (1.0 - fx) + d[i + sy + sx] * fx;
        let c01 = d[i + sz] * (1.0 - fx) + d[i + sz + sx] * fx;
        let c11 = d[i + sz + sy] * (1.0 - fx) + d[i + sz + sy + sx] * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    pub fn sample_world(&self, p: Vec3) -> f64 {
        self.sample_index(self.world_to_index(p))
    }
}

/// `s × s` image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneImage {
    size: usize,
    pixels: Vec<f64>,
}

impl PlaneImage {
    pub fn new(size: usize, pixels: Vec<f64>) -> Result<Self, VolumeError> {
        if pixels.len() != size * size {
            return Err(VolumeError::Shape { dims: [size, size, 1], len: pixels.len() });
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i));
        }
        Ok(Self { size, pixels })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    /// Rotates the image by 90° counter-clockwise (as displayed).
    pub fn rotated_90(&self) -> PlaneImage {
        let s = self.size;
        let mut out = vec![0.0; s * s];
        for i in 0..s {
            for j in 0..s {
                out[(s - 1 - j) * s + i] = self.pixels[i * s + j];
            }
        }
        PlaneImage { size: s, pixels: out }
    }
}

/// Whether a predictor looks at one plane or three mutually orthogonal ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    #[default]
    Single,
    Triplet,
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            InputMode::Single => 1,
            InputMode::Triplet => 3,
        }
    }
}

/// The plane through the volume centre spanning world x/y.
pub fn identity_plane(_volume: &Volume) -> RigidTransform {
    RigidTransform::IDENTITY
}

pub fn plane_pixel_to_world(t: &RigidTransform, s: usize, i: usize, j: usize) -> Vec3 {
    let h = (s as f64 - 1.0) / 2.0;
    t.apply(Vec3::new(j as f64 - h, h - i as f64, 0.0))
}

/// Samples the `s × s` plane placed by `t`.
pub fn extract_plane(volume: &Volume, t: &RigidTransform, s: usize) -> Result<PlaneImage, VolumeError> {
    if s < 2 {
        return Err(VolumeError::PlaneSize(s));
    }
    let h = (s as f64 - 1.0) / 2.0;
    let du = t.rotation.rotate(Vec3::new(1.0, 0.0, 0.0));
    let dv = t.rotation.rotate(Vec3::new(0.0, 1.0, 0.0));
    let origin = volume.world_to_index(t.translation);
    let mut pixels = Vec::with_capacity(s * s);
    for i in 0..s {
        let v = h - i as f64;
        for j in 0..s {
            let u = j as f64 - h;
            pixels.push(volume.sample_index(origin + du * u + dv * v));
        }
    }
    Ok(PlaneImage { size: s, pixels })
}

/// The plane at `t` followed by the planes rotated 90° about its local u and v axes.
pub fn extract_orthogonal_triplet(
    volume: &Volume,
    t: &RigidTransform,
    s: usize,
) -> Result<[PlaneImage; 3], VolumeError> {
    let quarter = std::f64::consts::FRAC_PI_2;
    let about_u = compose(t, &RigidTransform::from_rotation(UnitQuaternion::from_axis_angle(Axis::X.unit(), quarter)));
    let about_v = compose(t, &RigidTransform::from_rotation(UnitQuaternion::from_axis_angle(Axis::Y.unit(), quarter)));
    Ok([extract_plane(volume, t, s)?, extract_plane(volume, &about_u, s)?, extract_plane(volume, &about_v, s)?])
}

/// Extracts the image channels a predictor with `mode` expects.
pub fn extract_input(
    volume: &Volume,
    t: &RigidTransform,
    s: usize,
    mode: InputMode,
) -> Result<Vec<PlaneImage>, VolumeError> {
    match mode {
        InputMode::Single => Ok(vec![extract_plane(volume, t, s)?]),
        InputMode::Triplet => Ok(extract_orthogonal_triplet(volume, t, s)?.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Volume {
        Volume::from_fn([n, n, n], |x, _, _| x as f64).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(Volume::new([2, 2, 2], vec![0.0; 7]), Err(VolumeError::Shape { .. })));
        assert!(matches!(Volume::new([0, 2, 2], vec![]), Err(VolumeError::EmptyDims(_))));
        let mut d = vec![0.0; 8];
        d[3] = f64::NAN;
        assert!(matches!(Volume::new([2, 2, 2], d), Err(VolumeError::NonFinite(3))));
    }

    #[test]
    fn identity_plane_origin_and_offsets() {
        let v = Volume::new([64, 64, 64], vec![0.0; 64 * 64 * 64]).unwrap();
        assert_eq!(identity_plane(&v), RigidTransform::IDENTITY);
        assert_eq!(v.world_to_index(Vec3::ZERO), Vec3::new(31.5, 31.5, 31.5));
        assert_eq!(v.world_to_index(Vec3::new(1.0, 0.0, 0.0)), Vec3::new(32.5, 31.5, 31.5));
    }

    #[test]
    fn pixel_to_world_conventions() {
        let id = RigidTransform::IDENTITY;
        assert_eq!(plane_pixel_to_world(&id, 3, 1, 1), Vec3::ZERO);
        assert_eq!(plane_pixel_to_world(&id, 3, 2, 0), Vec3::new(-1.0, -1.0, 0.0));
        let rz = RigidTransform::from_rotation(UnitQuaternion::from_axis_angle(Axis::Z.unit(), std::f64::consts::FRAC_PI_2));
        let p = plane_pixel_to_world(&rz, 3, 1, 2);
        assert!((p - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn constant_volume_gives_constant_plane() {
        let v = Volume::new([20, 20, 20], vec![5.0; 8000]).unwrap();
        let t = RigidTransform::new(
            Vec3::new(1.0, -2.0, 0.5),
            UnitQuaternion::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.4),
        );
        let img = extract_plane(&v, &t, 7).unwrap();
        assert!(img.pixels().iter().all(|&p| (p - 5.0).abs() < 1e-12));
    }

    #[test]
    fn ramp_volume_identity_plane() {
        let v = ramp(64);
        let img = extract_plane(&v, &RigidTransform::IDENTITY, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((img.get(i, j) - (31.5 + j as f64 - 2.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outside_volume_is_zero() {
        let v = Volume::new([16, 16, 16], vec![3.0; 16 * 16 * 16]).unwrap();
        let t = RigidTransform::from_translation(Vec3::new(100.0, 0.0, 0.0));
        let img = extract_plane(&v, &t, 8).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0.0));
        assert_eq!(v.sample_index(Vec3::new(-1e-9, 0.0, 0.0)), 0.0);
        assert_eq!(v.sample_index(Vec3::new(15.0, 15.0, 15.0)), 3.0);
    }

    #[test]
    fn plane_size_below_two_rejected() {
        let v = ramp(4);
        assert!(matches!(extract_plane(&v, &RigidTransform::IDENTITY, 1), Err(VolumeError::PlaneSize(1))));
    }

    #[test]
    fn triplet_first_image_matches_single() {
        let v = Volume::from_fn([24, 24, 24], |x, y, z| (x * 3 + y * 7 + z * 11) as f64 % 13.0).unwrap();
        let t = RigidTransform::new(Vec3::new(0.3, 1.2, -0.7), UnitQuaternion::from_axis_angle(Vec3::new(0.2, 1.0, 0.1), 0.3));
        let [a, b, c] = extract_orthogonal_triplet(&v, &t, 9).unwrap();
        assert_eq!(a, extract_plane(&v, &t, 9).unwrap());
        assert_ne!(a, b);
        assert_ne!(b, c);
        let konst = Volume::new([24, 24, 24], vec![2.0; 24 * 24 * 24]).unwrap();
        for img in extract_orthogonal_triplet(&konst, &t, 9).unwrap() {
            assert!(img.pixels().iter().all(|&p| (p - 2.0).abs() < 1e-12));
        }
    }

    #[test]
    fn triplet_of_centred_sphere_is_rotation_symmetric() {
        let n = 33;
        let c = 16.0;
        let v = Volume::from_fn([n, n, n], |x, y, z| {
            let r2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
            (-r2 / 40.0).exp()
        })
        .unwrap();
        let [_, b, c3] = extract_orthogonal_triplet(&v, &RigidTransform::IDENTITY, 15).unwrap();
        let rotated = c3.rotated_90();
        for (p, q) in b.pixels().iter().zip(rotated.pixels()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_90_four_times_is_identity() {
        let img = PlaneImage::new(3, (0..9).map(f64::from).collect()).unwrap();
        let r = img.rotated_90();
        assert_eq!(r.get(2, 0), img.get(0, 0));
        assert_eq!(r.rotated_90().rotated_90().rotated_90(), img);
    }
}
