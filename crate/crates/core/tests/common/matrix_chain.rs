//! Homogeneous-matrix forward kinematics built from raw arrays.

use twin_core::geometry::JointState;
use twin_core::kinematics::RobotModel;
use twin_core::Pose6D;

pub type M4 = [[f64; 4]; 4];

pub fn identity() -> M4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Rodrigues rotation about a unit axis.
pub fn rot_axis(axis: [f64; 3], angle: f64) -> M4 {
    let [x, y, z] = axis;
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let mut m = identity();
    m[0][0] = t * x * x + c;
    m[0][1] = t * x * y - s * z;
    m[0][2] = t * x * z + s * y;
    m[1][0] = t * x * y + s * z;
    m[1][1] = t * y * y + c;
    m[1][2] = t * y * z - s * x;
    m[2][0] = t * x * z - s * y;
    m[2][1] = t * y * z + s * x;
    m[2][2] = t * z * z + c;
    m
}

pub fn from_pose(p: &Pose6D) -> M4 {
    let q = p.orientation;
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let mut m = identity();
    m[0][0] = 1.0 - 2.0 * (y * y + z * z);
    m[0][1] = 2.0 * (x * y - w * z);
    m[0][2] = 2.0 * (x * z + w * y);
    m[1][0] = 2.0 * (x * y + w * z);
    m[1][1] = 1.0 - 2.0 * (x * x + z * z);
    m[1][2] = 2.0 * (y * z - w * x);
    m[2][0] = 2.0 * (x * z - w * y);
    m[2][1] = 2.0 * (y * z + w * x);
    m[2][2] = 1.0 - 2.0 * (x * x + y * y);
    m[0][3] = p.position.x;
    m[1][3] = p.position.y;
    m[2][3] = p.position.z;
    m
}

pub fn translation(v: [f64; 3]) -> M4 {
    let mut m = identity();
    m[0][3] = v[0];
    m[1][3] = v[1];
    m[2][3] = v[2];
    m
}

pub fn flange(model: &RobotModel, q: &JointState) -> M4 {
    let a = model.track_axis;
    let mut m = translation([a.x * q.track, a.y * q.track, a.z * q.track]);
    m = mul(&m, &from_pose(&model.mount));
    for (k, link) in model.links.iter().enumerate() {
        m = mul(&m, &from_pose(&link.origin));
        m = mul(&m, &rot_axis([link.axis.x, link.axis.y, link.axis.z], q.q[k]));
    }
    mul(&m, &from_pose(&model.flange_offset))
}

/// Position difference and rotation angle between a pose and a matrix.
pub fn pose_vs_matrix(p: &Pose6D, m: &M4) -> (f64, f64) {
    let r = from_pose(p);
    let dp = ((r[0][3] - m[0][3]).powi(2) + (r[1][3] - m[1][3]).powi(2) + (r[2][3] - m[2][3]).powi(2)).sqrt();
    // trace(R_a^T R_b) = 1 + 2 cos(theta)
    let mut tr = 0.0;
    for i in 0..3 {
        for k in 0..3 {
            tr += r[k][i] * m[k][i];
        }
    }
    let c = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0);
    // acos is ill-conditioned near 0; use the skew part for small angles.
    let mut skew = [0.0; 3];
    let rt_m = |i: usize, j: usize| (0..3).map(|k| r[k][i] * m[k][j]).sum::<f64>();
    skew[0] = rt_m(2, 1) - rt_m(1, 2);
    skew[1] = rt_m(0, 2) - rt_m(2, 0);
    skew[2] = rt_m(1, 0) - rt_m(0, 1);
    let s = (skew[0].powi(2) + skew[1].powi(2) + skew[2].powi(2)).sqrt() / 2.0;
    (dp, s.atan2(c))
}
