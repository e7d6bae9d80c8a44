//! Random joint states and rigid transforms for the property suites.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use twin_core::geometry::{JointState, DOF};
use twin_core::kinematics::RobotModel;
use twin_core::Pose6D;

/// Uniform within the joint limits.
pub fn random_state(model: &RobotModel, rng: &mut impl Rng) -> JointState {
    let lim = model.limits();
    let mut v = [0.0; DOF];
    for i in 0..DOF {
        v[i] = rng.random_range(lim[i][0]..=lim[i][1]);
    }
    JointState::from_array(v)
}

/// Uniform axis and angle, translation within +-max_t per axis.
pub fn random_pose(rng: &mut impl Rng, max_t: f64) -> Pose6D {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let t = Vector3::new(
        rng.random_range(-max_t..max_t),
        rng.random_range(-max_t..max_t),
        rng.random_range(-max_t..max_t),
    );
    Pose6D::new(t, UnitQuaternion::from_scaled_axis(axis.normalize() * angle))
}

pub fn percentile_95(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() as f64 * 0.95).ceil() as usize - 1]
}
