//! Collision checking and trajectory generation.
//!
//! Links are capsules, tools and carried parts are boxes or cylinders.
//! Continuous motion is checked by sampling at a fixed joint-space
//! resolution.

mod collision;
pub mod gjk;
mod planner;

pub use collision::{
    check_segment, check_state, robot_solids, CollisionReport, CollisionWorld, Payload, RobotLoad,
    SegmentReport, PAYLOAD_BODY, TOOL_BODY,
};
pub use planner::{
    plan_joint, plan_linear_cartesian, time_parameterize, time_parameterize_linear, LinearPath,
    PlannerConfig,
};

use crate::geometry::{JointState, DOF};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest allowed joint-space step: revolute joints in radians, the track
/// in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub rad: f64,
    pub m: f64,
}

/// Planning and validation resolution.
pub const RESOLUTION: Resolution = Resolution { rad: 0.01, m: 0.005 };

impl Resolution {
    /// Step length of `a -> b` in units of this resolution (max over coordinates).
    pub fn metric(&self, a: &JointState, b: &JointState) -> f64 {
        let (a, b) = (a.to_array(), b.to_array());
        let mut m = (a[0] - b[0]).abs() / self.m;
        for i in 1..DOF {
            m = m.max((a[i] - b[i]).abs() / self.rad);
        }
        m
    }

    /// Number of equal intervals needed so that each is within resolution.
    pub fn intervals(&self, a: &JointState, b: &JointState) -> usize {
        let m = self.metric(a, b);
        // Guard against 1.0000000000000002 splitting a step that is exactly on resolution.
        (m - 1e-9).ceil().max(0.0) as usize
    }

    pub fn scaled(&self, factor: f64) -> Resolution {
        Resolution {
            rad: self.rad * factor,
            m: self.m * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<JointState>,
    pub resolution: Resolution,
}

impl Trajectory {
    pub fn single(q: JointState) -> Self {
        Trajectory {
            waypoints: vec![q],
            resolution: RESOLUTION,
        }
    }

    /// Straight joint-space segment subdivided to `resolution`.
    pub fn interpolated(a: &JointState, b: &JointState, resolution: Resolution) -> Self {
        let n = resolution.intervals(a, b).max(1);
        let waypoints = (0..=n).map(|k| a.lerp(b, k as f64 / n as f64)).collect();
        Trajectory {
            waypoints,
            resolution,
        }
    }

    pub fn start(&self) -> &JointState {
        &self.waypoints[0]
    }

    pub fn end(&self) -> &JointState {
        self.waypoints.last().expect("trajectory is never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedTrajectory {
    pub waypoints: Vec<JointState>,
    /// Seconds from the start of the trajectory, one per waypoint.
    pub timestamps: Vec<f64>,
}

impl TimedTrajectory {
    pub fn hold(q: JointState) -> Self {
        TimedTrajectory {
            waypoints: vec![q],
            timestamps: vec![0.0],
        }
    }

    pub fn duration(&self) -> f64 {
        self.timestamps.last().copied().unwrap_or(0.0)
    }

    pub fn start(&self) -> &JointState {
        &self.waypoints[0]
    }

    pub fn end(&self) -> &JointState {
        self.waypoints.last().expect("trajectory is never empty")
    }

    /// Piecewise-linear sample at time `t`, clamped to the ends.
    pub fn sample(&self, t: f64) -> JointState {
        let ts = &self.timestamps;
        if t <= ts[0] {
            return self.waypoints[0];
        }
        if t >= self.duration() {
            return *self.end();
        }
        let k = ts.partition_point(|x| *x <= t);
        let (t0, t1) = (ts[k - 1], ts[k]);
        let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        self.waypoints[k - 1].lerp(&self.waypoints[k], f)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotionError {
    #[error("start configuration collides: {0:?}")]
    StartInCollision(Vec<(String, String)>),
    #[error("goal configuration collides: {0:?}")]
    GoalInCollision(Vec<(String, String)>),
    #[error("configuration outside joint limits")]
    OutOfLimits,
    #[error("no path found after {iterations} planner iterations")]
    PlanningTimeout { iterations: usize },
    #[error("target unreachable at path fraction {at:.3}: {reason}")]
    Unreachable { at: f64, reason: String },
    #[error("collision at path fraction {at:.3}: {pairs:?}")]
    CollisionOnPath { at: f64, pairs: Vec<(String, String)> },
}
