//! Joint-space RRT-Connect, Cartesian straight-line moves and timing.

use super::collision::CollisionWorld;
use super::{MotionError, Resolution, TimedTrajectory, Trajectory, RESOLUTION};
use crate::geometry::{JointState, Pose6D, DOF};
use crate::kinematics::{inverse_kinematics, IkOptions, RobotModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub max_iterations: usize,
    /// Tree extension step, in seconds at full joint speed.
    pub extend_s: f64,
    pub shortcut_attempts: usize,
    pub resolution: Resolution,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            max_iterations: 10_000,
            extend_s: 2.0,
            shortcut_attempts: 100,
            resolution: RESOLUTION,
        }
    }
}

/// Time to move between two states with every coordinate at its limit.
fn travel_time(model: &RobotModel, a: &JointState, b: &JointState) -> f64 {
    let v = model.vel_limits.as_array();
    let (a, b) = (a.to_array(), b.to_array());
    (0..DOF).map(|i| (a[i] - b[i]).abs() / v[i]).fold(0.0, f64::max)
}

struct Tree {
    nodes: Vec<JointState>,
    parent: Vec<Option<usize>>,
}

impl Tree {
    fn new(root: JointState) -> Self {
        Tree {
            nodes: vec![root],
            parent: vec![None],
        }
    }

    fn nearest(&self, model: &RobotModel, q: &JointState) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = travel_time(model, n, q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn path_to_root(&self, mut i: usize) -> Vec<JointState> {
        let mut out = vec![self.nodes[i]];
        while let Some(p) = self.parent[i] {
            out.push(self.nodes[p]);
            i = p;
        }
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn extend(
    tree: &mut Tree,
    world: &CollisionWorld,
    model: &RobotModel,
    target: &JointState,
    cfg: &PlannerConfig,
) -> Extend {
    let near = tree.nearest(model, target);
    let from = tree.nodes[near];
    let d = travel_time(model, &from, target);
    let (to, reached) = if d <= cfg.extend_s {
        (*target, true)
    } else {
        (from.lerp(target, cfg.extend_s / d), false)
    };
    if !world.segment_free(model, &from, &to, cfg.resolution) {
        return Extend::Trapped;
    }
    tree.nodes.push(to);
    tree.parent.push(Some(near));
    let idx = tree.nodes.len() - 1;
    if reached {
        Extend::Reached(idx)
    } else {
        Extend::Advanced(idx)
    }
}

fn sample_state(model: &RobotModel, rng: &mut ChaCha8Rng) -> JointState {
    let lim = model.limits();
    let mut v = [0.0; DOF];
    for i in 0..DOF {
        v[i] = rng.random_range(lim[i][0]..=lim[i][1]);
    }
    JointState::from_array(v)
}

/// Collision-free joint-space path between two configurations.
///
/// The straight segment is returned when it is free; otherwise a
/// bidirectional RRT seeded from `seed` searches for a path, which is then
/// shortcut and subdivided to the planning resolution.
pub fn plan_joint(
    world: &CollisionWorld,
    model: &RobotModel,
    q_start: &JointState,
    q_goal: &JointState,
    seed: u64,
) -> Result<Trajectory, MotionError> {
    plan_joint_with(world, model, q_start, q_goal, seed, &PlannerConfig::default())
}

pub fn plan_joint_with(
    world: &CollisionWorld,
    model: &RobotModel,
    q_start: &JointState,
    q_goal: &JointState,
    seed: u64,
    cfg: &PlannerConfig,
) -> Result<Trajectory, MotionError> {
    if !model.within_limits(q_start) || !model.within_limits(q_goal) {
        return Err(MotionError::OutOfLimits);
    }
    let r = world.check_state(model, q_start);
    if r.colliding {
        return Err(MotionError::StartInCollision(r.pairs));
    }
    let r = world.check_state(model, q_goal);
    if r.colliding {
        return Err(MotionError::GoalInCollision(r.pairs));
    }
    if q_start == q_goal {
        return Ok(Trajectory::single(*q_start));
    }
    if world.segment_free(model, q_start, q_goal, cfg.resolution) {
        return Ok(Trajectory::interpolated(q_start, q_goal, cfg.resolution));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start_tree = Tree::new(*q_start);
    let mut goal_tree = Tree::new(*q_goal);
    let mut keyframes = None;
    for iter in 0..cfg.max_iterations {
        let q_rand = sample_state(model, &mut rng);
        let forward = iter % 2 == 0;
        let (ta, tb) = if forward {
            (&mut start_tree, &mut goal_tree)
        } else {
            (&mut goal_tree, &mut start_tree)
        };
        let new = match extend(ta, world, model, &q_rand, cfg) {
            Extend::Trapped => continue,
            Extend::Reached(i) | Extend::Advanced(i) => i,
        };
        let q_new = ta.nodes[new];
        let joined = loop {
            match extend(tb, world, model, &q_new, cfg) {
                Extend::Advanced(_) => continue,
                Extend::Reached(i) => break Some(i),
                Extend::Trapped => break None,
            }
        };
        if let Some(j) = joined {
            let (si, gi) = if forward { (new, j) } else { (j, new) };
            let mut path = start_tree.path_to_root(si);
            path.reverse();
            path.extend(goal_tree.path_to_root(gi).into_iter().skip(1));
            keyframes = Some(path);
            break;
        }
    }
    let Some(mut path) = keyframes else {
        return Err(MotionError::PlanningTimeout {
            iterations: cfg.max_iterations,
        });
    };

    for _ in 0..cfg.shortcut_attempts {
        if path.len() < 3 {
            break;
        }
        let i = rng.random_range(0..path.len() - 2);
        let j = rng.random_range(i + 2..path.len());
        if world.segment_free(model, &path[i], &path[j], cfg.resolution) {
            path.drain(i + 1..j);
        }
    }

    let mut waypoints = vec![path[0]];
    for w in path.windows(2) {
        let seg = Trajectory::interpolated(&w[0], &w[1], cfg.resolution);
        waypoints.extend(seg.waypoints.into_iter().skip(1));
    }
    Ok(Trajectory {
        waypoints,
        resolution: cfg.resolution,
    })
}

/// A straight TCP segment and the joint states that realize it.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPath {
    pub trajectory: Trajectory,
    /// Commanded TCP pose for each waypoint, exactly on the segment.
    pub tcp: Vec<Pose6D>,
    /// Path parameter in [0, 1] for each waypoint.
    pub fraction: Vec<f64>,
    pub length_m: f64,
}

/// Orientation sampling step for Cartesian moves.
const ANGLE_STEP_RAD: f64 = 0.01;
const MAX_BISECTIONS: usize = 12;

/// Straight-line TCP move from `pose_a` to `pose_b` (slerp orientation),
/// sampled every `step_m` and refined until consecutive joint states are
/// within the planning resolution. The TCP offset comes from `ik`.
pub fn plan_linear_cartesian(
    world: &CollisionWorld,
    model: &RobotModel,
    pose_a: &Pose6D,
    pose_b: &Pose6D,
    step_m: f64,
    seed_q: &JointState,
    ik: &IkOptions,
) -> Result<LinearPath, MotionError> {
    let solve = |pose: &Pose6D, seed: &JointState, at: f64| {
        inverse_kinematics(model, pose, seed, ik)
            .map(|s| s.q)
            .map_err(|e| MotionError::Unreachable {
                at,
                reason: e.to_string(),
            })
    };
    let (length, angle) = pose_a.distance(pose_b);
    let q0 = solve(pose_a, seed_q, 0.0)?;
    let n = ((length / step_m).ceil() as usize)
        .max((angle / ANGLE_STEP_RAD).ceil() as usize);

    let mut pts: Vec<(f64, JointState)> = vec![(0.0, q0)];
    for k in 1..=n {
        let s = k as f64 / n as f64;
        refine(&mut pts, s, 0, &|s, seed| solve(&pose_a.interpolate(pose_b, s), seed, s))?;
    }

    let mut tcp = Vec::with_capacity(pts.len());
    let mut fraction = Vec::with_capacity(pts.len());
    let mut waypoints = Vec::with_capacity(pts.len());
    for (s, q) in pts {
        let r = world.check_state(model, &q);
        if r.colliding {
            return Err(MotionError::CollisionOnPath { at: s, pairs: r.pairs });
        }
        tcp.push(pose_a.interpolate(pose_b, s));
        fraction.push(s);
        waypoints.push(q);
    }
    Ok(LinearPath {
        trajectory: Trajectory {
            waypoints,
            resolution: RESOLUTION,
        },
        tcp,
        fraction,
        length_m: length,
    })
}

/// Extend `pts` up to path parameter `s`, bisecting wherever the joint
/// step would exceed the resolution.
fn refine(
    pts: &mut Vec<(f64, JointState)>,
    s: f64,
    depth: usize,
    solve: &dyn Fn(f64, &JointState) -> Result<JointState, MotionError>,
) -> Result<(), MotionError> {
    let (s_prev, q_prev) = *pts.last().expect("seeded with the start");
    let q = solve(s, &q_prev)?;
    if RESOLUTION.metric(&q_prev, &q) <= 1.0 {
        pts.push((s, q));
        return Ok(());
    }
    if depth >= MAX_BISECTIONS {
        return Err(MotionError::Unreachable {
            at: s,
            reason: "joint-space discontinuity along the line".into(),
        });
    }
    let mid = 0.5 * (s_prev + s);
    refine(pts, mid, depth + 1, solve)?;
    refine(pts, s, depth + 1, solve)
}

/// Timestamps from per-segment durations `max_i |dq_i| / (v_i * scale)`.
///
/// Panics unless `0 < vel_scale <= 1`.
pub fn time_parameterize(model: &RobotModel, traj: &Trajectory, vel_scale: f64) -> TimedTrajectory {
    assert!(
        vel_scale > 0.0 && vel_scale <= 1.0,
        "vel_scale must be in (0, 1], got {vel_scale}"
    );
    let mut t = 0.0;
    let mut timestamps = Vec::with_capacity(traj.waypoints.len());
    timestamps.push(0.0);
    for w in traj.waypoints.windows(2) {
        t += travel_time(model, &w[0], &w[1]) / vel_scale;
        timestamps.push(t);
    }
    TimedTrajectory {
        waypoints: traj.waypoints.clone(),
        timestamps,
    }
}

/// Timing for a Cartesian path at constant TCP speed. Segments whose joint
/// motion would exceed the scaled velocity limits are slowed down.
pub fn time_parameterize_linear(
    model: &RobotModel,
    path: &LinearPath,
    speed_m_s: f64,
    vel_scale: f64,
) -> TimedTrajectory {
    assert!(speed_m_s > 0.0, "speed must be positive");
    assert!(
        vel_scale > 0.0 && vel_scale <= 1.0,
        "vel_scale must be in (0, 1], got {vel_scale}"
    );
    let w = &path.trajectory.waypoints;
    let mut timestamps = Vec::with_capacity(w.len());
    let mut t = 0.0;
    timestamps.push(0.0);
    for k in 1..w.len() {
        let ds = (path.fraction[k] - path.fraction[k - 1]) * path.length_m;
        let dt = (ds / speed_m_s).max(travel_time(model, &w[k - 1], &w[k]) / vel_scale);
        t += dt;
        timestamps.push(t);
    }
    TimedTrajectory {
        waypoints: w.clone(),
        timestamps,
    }
}
