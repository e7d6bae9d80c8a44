//! Forward/inverse kinematics for the track-mounted 7-DoF cell robot.
//!
//! The chain is one prismatic track joint that translates the arm mount
//! along `track_axis`, followed by six revolute joints. Each revolute link
//! is a fixed `origin` transform relative to the previous link frame and a
//! rotation about `axis`, URDF style.

use crate::geometry::{JointState, Pose6D, DOF};
use nalgebra::{SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub type Jacobian = SMatrix<f64, 6, DOF>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("robot model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("robot model schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("robot model invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IkError {
    #[error("target unreachable after {iterations} iterations (best residual {best_residual:.3e})")]
    Unreachable {
        iterations: usize,
        best_residual: f64,
        /// Residual after every accepted iteration, starting with the seed.
        residual_log: Vec<f64>,
        best: JointState,
    },
    #[error("non-finite ik input")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    pub origin: Pose6D,
    pub axis: Vector3<f64>,
    pub limits_rad: [f64; 2],
}

/// Capsule collision proxy rigidly attached to one link frame.
///
/// `frame` 0 is the mount frame (after the track), `k` in 1..=6 the frame
/// after revolute joint `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBody {
    pub name: String,
    pub frame: usize,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityLimits {
    pub track_m_s: f64,
    pub joints_rad_s: [f64; 6],
}

impl VelocityLimits {
    pub fn as_array(&self) -> [f64; DOF] {
        let j = self.joints_rad_s;
        [self.track_m_s, j[0], j[1], j[2], j[3], j[4], j[5]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub name: String,
    pub track_axis: Vector3<f64>,
    pub track_limits_m: [f64; 2],
    /// Arm base pose in world at track coordinate 0.
    pub mount: Pose6D,
    pub links: Vec<Link>,
    pub flange_offset: Pose6D,
    pub vel_limits: VelocityLimits,
    #[serde(default)]
    pub bodies: Vec<LinkBody>,
    /// Body-name pairs excluded from self-collision checks.
    #[serde(default)]
    pub adjacent_pairs: Vec<(String, String)>,
    /// Parking configuration, free of the cell at rest.
    #[serde(default = "JointState::zero")]
    pub home: JointState,
}

const CANONICAL_ROBOT: &str = include_str!("../fixtures/kr10_track.twin.json");

impl RobotModel {
    /// The bundled KR10-class fixture on a 2.9 m track, hanging mount.
    pub fn canonical() -> Self {
        Self::from_json(CANONICAL_ROBOT).expect("bundled robot fixture is valid")
    }

    pub fn from_json(doc: &str) -> Result<Self, ModelError> {
        let model: RobotModel = serde_json::from_str(doc)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |m: String| Err(ModelError::Invalid(m));
        if self.links.len() != 6 {
            return invalid(format!("expected 6 revolute links, got {}", self.links.len()));
        }
        if ((self.track_axis.norm()) - 1.0).abs() > 1e-9 {
            return invalid("track_axis must be a unit vector".into());
        }
        if self.track_limits_m[0] >= self.track_limits_m[1] {
            return invalid("track limits must satisfy min < max".into());
        }
        for l in &self.links {
            if ((l.axis.norm()) - 1.0).abs() > 1e-9 {
                return invalid(format!("axis of {} must be a unit vector", l.name));
            }
            if l.limits_rad[0] >= l.limits_rad[1] {
                return invalid(format!("limits of {} must satisfy min < max", l.name));
            }
        }
        for v in self.vel_limits.as_array() {
            if !(v > 0.0 && v.is_finite()) {
                return invalid("velocity limits must be positive".into());
            }
        }
        for b in &self.bodies {
            if b.frame > 6 || b.radius <= 0.0 {
                return invalid(format!("body {} has bad frame or radius", b.name));
            }
        }
        for (a, b) in &self.adjacent_pairs {
            for n in [a, b] {
                if n != "tool" && !self.bodies.iter().any(|x| &x.name == n) {
                    return invalid(format!("adjacent pair names unknown body {n}"));
                }
            }
        }
        if !self.within_limits(&self.home) {
            return invalid("home configuration is outside the limits".into());
        }
        Ok(())
    }

    pub fn limits(&self) -> [[f64; 2]; DOF] {
        let mut out = [self.track_limits_m; DOF];
        for (i, l) in self.links.iter().enumerate() {
            out[i + 1] = l.limits_rad;
        }
        out
    }

    pub fn within_limits(&self, q: &JointState) -> bool {
        let lim = self.limits();
        q.to_array()
            .iter()
            .zip(lim.iter())
            .all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
    }

    pub fn is_adjacent(&self, a: &str, b: &str) -> bool {
        self.adjacent_pairs
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }
}

/// World poses of the mount frame and the six link frames.
pub fn link_frames(model: &RobotModel, q: &JointState) -> [Pose6D; 7] {
    let mut frames = [Pose6D::identity(); 7];
    frames[0] = model.mount.translated(&(model.track_axis * q.track));
    for (k, link) in model.links.iter().enumerate() {
        let joint = UnitQuaternion::from_scaled_axis(link.axis * q.q[k]);
        frames[k + 1] = frames[k]
            .compose(&link.origin)
            .compose(&Pose6D::new(Vector3::zeros(), joint));
    }
    frames
}

/// Flange pose in world. Limits are not enforced.
pub fn forward_kinematics(model: &RobotModel, q: &JointState) -> Pose6D {
    link_frames(model, q)[6].compose(&model.flange_offset)
}

/// Pose of a point rigidly attached to the flange (e.g. a tool tip).
pub fn tcp_pose(model: &RobotModel, q: &JointState, tcp_offset: &Pose6D) -> Pose6D {
    forward_kinematics(model, q).compose(tcp_offset)
}

/// Geometric Jacobian of the point `flange ∘ tcp_offset` in world
/// coordinates: rows 0..3 linear velocity, rows 3..6 angular velocity.
pub fn jacobian_at(model: &RobotModel, q: &JointState, tcp_offset: &Pose6D) -> Jacobian {
    let frames = link_frames(model, q);
    let end = frames[6]
        .compose(&model.flange_offset)
        .compose(tcp_offset)
        .position;
    let mut jac = Jacobian::zeros();
    jac.fixed_view_mut::<3, 1>(0, 0).copy_from(&model.track_axis);
    for (k, link) in model.links.iter().enumerate() {
        let frame = &frames[k + 1];
        let w = frame.orientation * link.axis;
        let v = w.cross(&(end - frame.position));
        jac.fixed_view_mut::<3, 1>(0, k + 1).copy_from(&v);
        jac.fixed_view_mut::<3, 1>(3, k + 1).copy_from(&w);
    }
    jac
}

pub fn jacobian(model: &RobotModel, q: &JointState) -> Jacobian {
    jacobian_at(model, q, &Pose6D::identity())
}

/// Clamp every coordinate into its limit interval.
pub fn clamp_to_limits(model: &RobotModel, q: &JointState) -> JointState {
    let lim = model.limits();
    let mut v = q.to_array();
    for i in 0..DOF {
        v[i] = v[i].clamp(lim[i][0], lim[i][1]);
    }
    JointState::from_array(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkOptions {
    pub tol_pos: f64,
    pub tol_rot: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub max_step_rad: f64,
    pub max_step_m: f64,
    /// Gain of the null-space pull of the track back toward the seed.
    pub track_gain: f64,
    /// Residual below which the damping is dropped for the final steps.
    pub refine_below: f64,
    /// Target is `flange ∘ tcp_offset`.
    pub tcp_offset: Pose6D,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tol_pos: 1e-6,
            tol_rot: 1e-6,
            max_iters: 200,
            damping: 0.05,
            max_step_rad: 0.2,
            max_step_m: 0.05,
            track_gain: 0.5,
            refine_below: 1e-3,
            tcp_offset: Pose6D::identity(),
        }
    }
}

impl IkOptions {
    pub fn with_tcp(mut self, tcp_offset: Pose6D) -> Self {
        self.tcp_offset = tcp_offset;
        self
    }

    pub fn with_tolerance(mut self, pos: f64, rot: f64) -> Self {
        self.tol_pos = pos;
        self.tol_rot = rot;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointState,
    pub iterations: usize,
    pub pos_error: f64,
    pub rot_error: f64,
}

fn pose_error(model: &RobotModel, q: &JointState, target: &Pose6D, tcp: &Pose6D) -> SVector<f64, 6> {
    let pose = tcp_pose(model, q, tcp);
    let dp = target.position - pose.position;
    let dr = pose.rotation_error_to(target);
    SVector::<f64, 6>::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

fn split_norms(e: &SVector<f64, 6>) -> (f64, f64) {
    (
        e.fixed_rows::<3>(0).norm(),
        e.fixed_rows::<3>(3).norm(),
    )
}

fn dls_step(jac: &Jacobian, err: &SVector<f64, 6>, damp2: f64) -> SVector<f64, DOF> {
    if damp2 > 0.0 {
        let jjt = jac * jac.transpose() + SMatrix::<f64, 6, 6>::identity() * damp2;
        if let Some(inv) = jjt.try_inverse() {
            return jac.transpose() * (inv * err);
        }
    }
    match jac.svd(true, true).pseudo_inverse(1e-9) {
        Ok(pinv) => pinv * err,
        Err(_) => SVector::zeros(),
    }
}

fn null_space_track_pull(jac: &Jacobian, track_offset: f64, gain: f64) -> SVector<f64, DOF> {
    let mut z = SVector::<f64, DOF>::zeros();
    z[0] = -gain * track_offset;
    if track_offset == 0.0 {
        return z;
    }
    match jac.svd(true, true).pseudo_inverse(1e-9) {
        Ok(pinv) => (SMatrix::<f64, DOF, DOF>::identity() - pinv * jac) * z,
        Err(_) => SVector::zeros(),
    }
}

/// Damped least squares IK with a null-space objective that keeps the
/// track close to the seed. Each iterate is clamped to the joint limits and
/// accepted only if it does not increase the residual (step halving), so the
/// residual sequence is non-increasing.
pub fn inverse_kinematics(
    model: &RobotModel,
    target: &Pose6D,
    seed: &JointState,
    opts: &IkOptions,
) -> Result<IkSolution, IkError> {
    if !seed.is_finite() || !target.is_finite() {
        return Err(IkError::NonFinite);
    }
    let tcp = &opts.tcp_offset;
    let mut q = clamp_to_limits(model, seed);
    let mut err = pose_error(model, &q, target, tcp);
    let mut residual = err.norm();
    let mut log = vec![residual];
    let lambda2 = opts.damping * opts.damping;

    for iter in 0..=opts.max_iters {
        let (ep, er) = split_norms(&err);
        if ep < opts.tol_pos && er < opts.tol_rot {
            return Ok(IkSolution {
                q,
                iterations: iter,
                pos_error: ep,
                rot_error: er,
            });
        }
        if iter == opts.max_iters {
            break;
        }
        let lim = model.limits();
        let qa = q.to_array();
        let jac0 = jacobian_at(model, &q, tcp);
        // Below this residual the damped step only crawls along weakly
        // conditioned directions; finish with an undamped pseudo-inverse
        // step. Near singularities the null-space pull leaks into the task
        // and a step may fail to reduce the residual; retry without the pull
        // and then with heavier damping before giving up.
        // The null-space pull also stops in the refinement: the shared step
        // clamp would otherwise let it throttle the task step.
        let refining = residual < opts.refine_below;
        let first = if refining { 0.0 } else { lambda2 };
        let ladder = [
            (first, !refining),
            (first, false),
            (lambda2, false),
            (lambda2 * 16.0, false),
            (lambda2 * 256.0, false),
        ];
        let mut accepted = None;
        for (k, &(damp2, pull)) in ladder.iter().enumerate() {
            if k > 1 && damp2 <= ladder[k - 1].0 {
                continue;
            }
            let mut jac = jac0;
            let mut dq = SVector::<f64, DOF>::zeros();
            let mut locked = [false; DOF];
            for _ in 0..DOF {
                dq = dls_step(&jac, &err, damp2);
                if pull {
                    dq += null_space_track_pull(&jac, q.track - seed.track, opts.track_gain);
                }
                // Joints resting on a limit and pushed outward are frozen.
                let mut changed = false;
                for i in 0..DOF {
                    if locked[i] {
                        continue;
                    }
                    let at_lo = qa[i] <= lim[i][0] && dq[i] < 0.0;
                    let at_hi = qa[i] >= lim[i][1] && dq[i] > 0.0;
                    if at_lo || at_hi {
                        locked[i] = true;
                        jac.column_mut(i).fill(0.0);
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            for i in 0..DOF {
                if locked[i] {
                    dq[i] = 0.0;
                }
            }

            let mut scale = 1.0f64;
            if dq[0].abs() > opts.max_step_m {
                scale = scale.min(opts.max_step_m / dq[0].abs());
            }
            for i in 1..DOF {
                if dq[i].abs() > opts.max_step_rad {
                    scale = scale.min(opts.max_step_rad / dq[i].abs());
                }
            }
            dq *= scale;

            let mut alpha = 1.0;
            for _ in 0..12 {
                let mut cand = q.to_array();
                for i in 0..DOF {
                    cand[i] += alpha * dq[i];
                }
                let cand = clamp_to_limits(model, &JointState::from_array(cand));
                let cerr = pose_error(model, &cand, target, tcp);
                let cres = cerr.norm();
                if cres <= residual {
                    accepted = Some((cand, cerr, cres));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((cand, cerr, cres)) => {
                q = cand;
                err = cerr;
                residual = cres;
                log.push(residual);
            }
            None => break,
        }
    }
    Err(IkError::Unreachable {
        iterations: log.len() - 1,
        best_residual: residual,
        residual_log: log,
        best: q,
    })
}
