//! Shared fixtures for the criterion benches.

use itn_core::phantom::{generate_phantom_with_gt, PhantomSpec};
use itn_core::transform::{RigidTransform, UnitQuaternion, Vec3};
use itn_core::volume::Volume;

/// A phantom of side `n` with its target plane at the identity.
pub fn phantom_volume(n: usize) -> Volume {
    let spec = PhantomSpec { dims: [n; 3], noise_sigma: 0.0, ..Default::default() };
    generate_phantom_with_gt(&spec, &RigidTransform::IDENTITY).expect("valid spec").volume
}

/// An off-centre plane tilted about all three axes.
pub fn oblique_pose() -> RigidTransform {
    RigidTransform::new(Vec3::new(3.5, -2.25, 1.75), UnitQuaternion::from_axis_angle(Vec3::new(0.3, -0.5, 0.8), 0.6))
}
