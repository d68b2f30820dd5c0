//! Synthetic volumes with a known target plane, pose sampling and labelled
//! training samples.
//!
//! A phantom is a constellation of Gaussian blobs whose centres are fixed in
//! the target plane's own frame. The target pose is drawn at random inside
//! the volume, so the only information about it is the blob pattern.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;
use crate::transform::{
    euler_to_quat, inverse_compose, quat_to_euler, Axis, EulerAngles, EulerConvention, RigidTransform, Vec3,
};
use crate::volume::{extract_input, InputMode, PlaneImage, Volume, VolumeError};

/// Fraction of each volume dimension inside which plane centres are drawn.
pub const CENTRE_FRACTION: f64 = 0.6;
/// Maximum rotation about each axis when sampling poses, in degrees.
pub const MAX_SAMPLE_ANGLE_DEG: f64 = 45.0;
pub const MIN_PHANTOM_DIM: usize = 32;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Centre in the target plane's frame, voxels.
    pub offset: Vec3,
    pub amplitude: f64,
    /// Gaussian standard deviation, voxels.
    pub width: f64,
}

impl Blob {
    const fn new(offset: [f64; 3], amplitude: f64, width: f64) -> Self {
        Blob { offset: Vec3::new(offset[0], offset[1], offset[2]), amplitude, width }
    }
}

/// Named blob constellations. Two independent layouts stand in for two
/// different target-plane classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Default,
    Alternate,
    /// Use `PhantomSpec::blobs` as given.
    Custom,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Default => "default",
            Layout::Alternate => "alternate",
            Layout::Custom => "custom",
        })
    }
}

// Amplitudes are pairwise distinct, so no nontrivial rigid motion maps a
// constellation onto itself.
const DEFAULT_BLOBS: [Blob; 9] = [
    Blob::new([-12.0, 8.0, 0.0], 1.0, 3.0),
    Blob::new([10.0, 11.0, 0.0], 0.8, 2.5),
    Blob::new([6.0, -9.0, 0.0], 0.6, 4.0),
    Blob::new([-5.0, -14.0, 0.0], 0.9, 2.0),
    Blob::new([15.0, -3.0, 0.0], 0.5, 3.5),
    Blob::new([0.0, 4.0, 9.0], 0.7, 3.0),
    Blob::new([-9.0, -4.0, -7.0], 0.4, 5.0),
    Blob::new([13.0, 5.0, -11.0], 0.3, 4.0),
    Blob::new([-3.0, 16.0, 6.0], 0.55, 2.5),
];

const ALTERNATE_BLOBS: [Blob; 9] = [
    Blob::new([8.0, 12.0, 0.0], 1.0, 2.5),
    Blob::new([-14.0, 2.0, 0.0], 0.75, 3.5),
    Blob::new([-2.0, -11.0, 0.0], 0.9, 3.0),
    Blob::new([12.0, -12.0, 0.0], 0.45, 4.5),
    Blob::new([1.0, 1.0, 0.0], 0.35, 2.0),
    Blob::new([-8.0, 10.0, 8.0], 0.65, 4.0),
    Blob::new([9.0, -2.0, -10.0], 0.5, 3.0),
    Blob::new([-12.0, -9.0, 12.0], 0.3, 5.0),
    Blob::new([4.0, 18.0, -5.0], 0.8, 2.0),
];

impl Layout {
    pub fn blobs(self) -> &'static [Blob] {
        match self {
            Layout::Default => &DEFAULT_BLOBS,
            Layout::Alternate => &ALTERNATE_BLOBS,
            Layout::Custom => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub seed: u64,
    pub layout: Layout,
    pub noise_sigma: f64,
    /// Only read when `layout` is `custom`.
    pub blobs: Vec<Blob>,
    /// Semi-axes of the head mask as a fraction of the half-dimensions.
    pub mask_fraction: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [64, 64, 64],
            seed: 0,
            layout: Layout::Default,
            noise_sigma: 0.01,
            blobs: Vec::new(),
            mask_fraction: 0.95,
        }
    }
}

impl PhantomSpec {
    pub fn effective_blobs(&self) -> &[Blob] {
        match self.layout {
            Layout::Custom => &self.blobs,
            other => other.blobs(),
        }
    }

    fn validate(&self) -> Result<(), PhantomError> {
        if self.dims.iter().any(|&n| n < MIN_PHANTOM_DIM) {
            return Err(PhantomError::InvalidSpec(format!(
                "dimensions {:?} below minimum {MIN_PHANTOM_DIM}",
                self.dims
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(PhantomError::InvalidSpec(format!("noise_sigma {}", self.noise_sigma)));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction <= 1.0) {
            return Err(PhantomError::InvalidSpec(format!("mask_fraction {}", self.mask_fraction)));
        }
        let blobs = self.effective_blobs();
        if blobs.is_empty() {
            return Err(PhantomError::InvalidSpec("no blobs".into()));
        }
        for b in blobs {
            if !(b.width > 0.0 && b.width.is_finite() && b.amplitude.is_finite() && b.offset.is_finite()) {
                return Err(PhantomError::InvalidSpec(format!("bad blob {b:?}")));
            }
        }
        Ok(())
    }

    fn mask_semi_axes(&self) -> Vec3 {
        Vec3::from(self.dims.map(|n| self.mask_fraction * n as f64 / 2.0))
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume,
    pub ground_truth: RigidTransform,
}

/// Draws the target pose from the spec's seed and renders the volume.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    spec.validate()?;
    let probe = Volume::new(spec.dims, vec![0.0; spec.dims.iter().product()])?;
    let gt = sample_random_transform(&probe, &mut stream_rng(spec.seed, 0));
    generate_phantom_with_gt(spec, &gt)
}

/// Renders the phantom for a given target pose.
pub fn generate_phantom_with_gt(spec: &PhantomSpec, gt: &RigidTransform) -> Result<Phantom, PhantomError> {
    spec.validate()?;
    let semi = spec.mask_semi_axes();
    let inside = |p: Vec3| (p.x / semi.x).powi(2) + (p.y / semi.y).powi(2) + (p.z / semi.z).powi(2) <= 1.0;

    let blobs: Vec<(Vec3, f64, f64)> = spec
        .effective_blobs()
        .iter()
        .map(|b| (gt.apply(b.offset), b.amplitude, -0.5 / (b.width * b.width)))
        .collect();
    if !blobs.iter().any(|(c, _, _)| inside(*c)) {
        return Err(PhantomError::InvalidSpec("blob constellation lies entirely outside the head mask".into()));
    }

    let [nx, ny, nz] = spec.dims;
    let centre = Vec3::from(spec.dims.map(|n| (n as f64 - 1.0) / 2.0));
    let mut noise_rng = stream_rng(spec.seed, 1);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| PhantomError::InvalidSpec(e.to_string()))?;
    let mut data = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = Vec3::new(x as f64, y as f64, z as f64) - centre;
                let mut v: f64 = blobs.iter().map(|&(c, a, k)| a * ((p - c).norm_squared() * k).exp()).sum();
                if spec.noise_sigma > 0.0 {
                    v += noise.sample(&mut noise_rng);
                }
                data.push(if inside(p) { v } else { 0.0 });
            }
        }
    }
    Ok(Phantom { volume: Volume::new(spec.dims, data)?, ground_truth: *gt })
}

/// Random plane pose: centre uniform in the middle 60% box of the volume,
/// intrinsic xyz Euler angles each uniform in ±45°.
pub fn sample_random_transform<R: Rng + ?Sized>(volume: &Volume, rng: &mut R) -> RigidTransform {
    let dims = volume.dims();
    let mut t = [0.0; 3];
    for (slot, n) in t.iter_mut().zip(dims) {
        let half = 0.5 * CENTRE_FRACTION * n as f64;
        *slot = rng.random_range(-half..=half);
    }
    let mut angles = [0.0; 3];
    for a in angles.iter_mut() {
        *a = rng.random_range(-MAX_SAMPLE_ANGLE_DEG..=MAX_SAMPLE_ANGLE_DEG);
    }
    let rotation = euler_to_quat(&EulerAngles::new(angles, EulerConvention::Xyz));
    RigidTransform::new(Vec3::from(t), rotation)
}

/// A signed coordinate axis: a translation class `c` or a rotation class `k`.
///
/// Class indices follow `(x+, x-, y+, y-, z+, z-)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedAxis {
    pub axis: Axis,
    pub positive: bool,
}

impl SignedAxis {
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        2 * self.axis.index() + usize::from(!self.positive)
    }

    pub fn from_index(i: usize) -> SignedAxis {
        SignedAxis { axis: Axis::from_index(i / 2), positive: i.is_multiple_of(2) }
    }

    pub fn sign(self) -> f64 {
        if self.positive {
            1.0
        } else {
            -1.0
        }
    }

    /// Picks the component with the largest magnitude; ties go to the earlier
    /// axis, and zero counts as positive.
    fn dominant(v: [f64; 3]) -> SignedAxis {
        let mut best = 0;
        for a in 1..3 {
            if v[a].abs() > v[best].abs() {
                best = a;
            }
        }
        SignedAxis { axis: Axis::from_index(best), positive: v[best] >= 0.0 }
    }
}

impl fmt::Display for SignedAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.axis.index() + 1, if self.positive { '+' } else { '-' })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassLabels {
    pub translation: SignedAxis,
    pub rotation: SignedAxis,
    /// Zero translation or identity rotation; the affected label is the default `1+`.
    pub degenerate: bool,
}

const DEGENERATE_EPS: f64 = 1e-12;

/// Leading-axis angle (degrees) of `q` under the convention that starts with each axis.
pub fn leading_angles(q: &crate::transform::UnitQuaternion) -> [f64; 3] {
    Axis::ALL.map(|axis| quat_to_euler(q, EulerConvention::leading(axis)).angles.about(axis))
}

/// Translation class: axis of largest |Δt| component. Rotation class: axis
/// with the largest leading Euler angle among the xyz / yxz / zxy
/// decompositions of Δq, the same decompositions the confidence-weighted
/// update reads at inference.
pub fn compute_class_labels(delta: &RigidTransform) -> ClassLabels {
    let t = delta.translation.to_array();
    let angles = leading_angles(&delta.rotation);
    let t_degenerate = t.iter().all(|c| c.abs() <= DEGENERATE_EPS);
    let r_degenerate = angles.iter().all(|a| a.abs() <= DEGENERATE_EPS);
    ClassLabels {
        translation: SignedAxis::dominant(t),
        rotation: SignedAxis::dominant(angles),
        degenerate: t_degenerate || r_degenerate,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// One image, or three for orthogonal-triplet input.
    pub images: Vec<PlaneImage>,
    /// Pose the images were sampled at.
    pub pose: RigidTransform,
    pub delta_gt: RigidTransform,
    pub labels: ClassLabels,
}

/// Builds the sample seen from a given current pose.
pub fn training_sample_at(
    volume: &Volume,
    gt: &RigidTransform,
    pose: &RigidTransform,
    s: usize,
    mode: InputMode,
) -> Result<TrainingSample, VolumeError> {
    let images = extract_input(volume, pose, s, mode)?;
    let delta_gt = inverse_compose(gt, pose);
    Ok(TrainingSample { images, pose: *pose, delta_gt, labels: compute_class_labels(&delta_gt) })
}

/// Samples a random pose and returns the labelled sample seen from it.
pub fn make_training_sample<R: Rng + ?Sized>(
    volume: &Volume,
    gt: &RigidTransform,
    s: usize,
    mode: InputMode,
    rng: &mut R,
) -> Result<TrainingSample, VolumeError> {
    let pose = sample_random_transform(volume, rng);
    training_sample_at(volume, gt, &pose, s, mode)
}
