//! Rigid poses and the robot configuration vector.

use nalgebra::{Isometry3, Matrix3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Position (meters) plus unit quaternion orientation.
///
/// The quaternion is kept in canonical sign (`w >= 0`) so that two poses
/// describing the same rigid transform compare equal component-wise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6D {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl Pose6D {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical(orientation),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// Rotation about `axis` (need not be normalized) by `angle` radians, no translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let rot = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
        Self::new(Vector3::zeros(), rot)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Builds a pose from a rotation matrix; the matrix is re-orthonormalized.
    pub fn from_rotation_matrix(position: Vector3<f64>, rot: &Matrix3<f64>) -> Self {
        let r = nalgebra::Rotation3::from_matrix(rot);
        Self::new(position, UnitQuaternion::from_rotation_matrix(&r))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// `self ∘ other`: express `other` (given in this pose's frame) in the parent frame.
    pub fn compose(&self, other: &Pose6D) -> Pose6D {
        Pose6D::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose6D {
        let inv = self.orientation.inverse();
        Pose6D::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    /// Local z axis expressed in the parent frame.
    pub fn z_axis(&self) -> Vector3<f64> {
        self.orientation * Vector3::z()
    }

    pub fn translated(&self, d: &Vector3<f64>) -> Pose6D {
        Pose6D::new(self.position + d, self.orientation)
    }

    /// Position error norm and rotation angle between two poses.
    pub fn distance(&self, other: &Pose6D) -> (f64, f64) {
        let dp = (self.position - other.position).norm();
        let dr = self.orientation.angle_to(&other.orientation);
        (dp, dr)
    }

    /// Rotation-vector error `log(other · self^-1)` in the parent frame.
    pub fn rotation_error_to(&self, target: &Pose6D) -> Vector3<f64> {
        (target.orientation * self.orientation.inverse()).scaled_axis()
    }

    /// Interpolate position linearly and orientation by slerp.
    pub fn interpolate(&self, other: &Pose6D, t: f64) -> Pose6D {
        let position = self.position + (other.position - self.position) * t;
        let orientation = self
            .orientation
            .try_slerp(&other.orientation, t, 1e-12)
            .unwrap_or(self.orientation);
        Pose6D::new(position, orientation)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

impl Default for Pose6D {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rotation whose z axis is `z` and whose x axis is the projection of
/// `x_ref` onto the plane orthogonal to `z`. Falls back to a secondary
/// reference when `x_ref` is parallel to `z`.
pub fn frame_from_z_and_x(z: &Vector3<f64>, x_ref: &Vector3<f64>) -> UnitQuaternion<f64> {
    let z = z.normalize();
    let mut x = x_ref - z * z.dot(x_ref);
    if x.norm() < 1e-9 {
        let alt = if z.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        x = alt - z * z.dot(&alt);
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_columns(&[x, y, z]);
    canonical(UnitQuaternion::from_rotation_matrix(
        &nalgebra::Rotation3::from_matrix_unchecked(m),
    ))
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl Serialize for Pose6D {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let q = self.orientation;
        PoseRepr {
            position: [self.position.x, self.position.y, self.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose6D {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PoseRepr::deserialize(d)?;
        let [w, x, y, z] = r.orientation;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(serde::de::Error::custom(format!(
                "orientation quaternion must be unit norm, got |q| = {n}"
            )));
        }
        // Already-unit input is kept bit for bit so documents round-trip.
        let unit = if (n - 1.0).abs() < 1e-15 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Pose6D::new(Vector3::from(r.position), unit))
    }
}

/// Robot configuration: prismatic track coordinate (meters) followed by six
/// revolute joint angles (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub track: f64,
    pub q: [f64; 6],
}

pub const DOF: usize = 7;

impl JointState {
    pub fn new(track: f64, q: [f64; 6]) -> Self {
        Self { track, q }
    }

    pub fn zero() -> Self {
        Self::new(0.0, [0.0; 6])
    }

    pub fn from_array(v: [f64; DOF]) -> Self {
        Self::new(v[0], [v[1], v[2], v[3], v[4], v[5], v[6]])
    }

    pub fn to_array(&self) -> [f64; DOF] {
        let q = self.q;
        [self.track, q[0], q[1], q[2], q[3], q[4], q[5]]
    }

    pub fn get(&self, i: usize) -> f64 {
        if i == 0 {
            self.track
        } else {
            self.q[i - 1]
        }
    }

    pub fn set(&mut self, i: usize, v: f64) {
        if i == 0 {
            self.track = v
        } else {
            self.q[i - 1] = v
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Linear interpolation; exact at both ends.
    pub fn lerp(&self, other: &JointState, t: f64) -> JointState {
        if t <= 0.0 {
            return *self;
        }
        if t >= 1.0 {
            return *other;
        }
        let a = self.to_array();
        let b = other.to_array();
        let mut out = [0.0; DOF];
        for i in 0..DOF {
            out[i] = a[i] + (b[i] - a[i]) * t;
        }
        JointState::from_array(out)
    }

    /// Largest per-coordinate absolute difference.
    pub fn max_abs_diff(&self, other: &JointState) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
