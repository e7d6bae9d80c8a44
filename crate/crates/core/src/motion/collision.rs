//! Robot collision geometry and state / segment checks.

use super::gjk::{distance, Solid};
use super::Resolution;
use crate::geometry::{JointState, Pose6D};
use crate::kinematics::{forward_kinematics, link_frames, RobotModel};
use crate::scene::{Scene, Shape, ToolSpec};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub const TOOL_BODY: &str = "tool";
pub const PAYLOAD_BODY: &str = "payload";

/// A part carried rigidly by the tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub component_id: String,
    pub shape: Shape,
    /// Shape center relative to the flange.
    pub flange_to_shape: Pose6D,
}

/// Whatever hangs off the flange.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RobotLoad {
    pub tool: Option<ToolSpec>,
    pub payload: Option<Payload>,
}

impl RobotLoad {
    pub fn tool(tool: Option<&ToolSpec>) -> Self {
        RobotLoad {
            tool: tool.cloned(),
            payload: None,
        }
    }

    /// Flange to tool tip; identity without a tool.
    pub fn tcp_offset(&self) -> Pose6D {
        self.tool
            .as_ref()
            .map(|t| t.tcp_offset)
            .unwrap_or_else(Pose6D::identity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub colliding: bool,
    /// (robot body, other body) for every intersecting pair.
    pub pairs: Vec<(String, String)>,
    /// Smallest separation over all checked pairs; 0 when colliding.
    pub min_clearance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub report: CollisionReport,
    /// Interpolation parameter of the first colliding sample.
    pub first_hit: Option<f64>,
    pub samples: usize,
}

/// Robot bodies at `q`: link capsules, then the tool box and payload.
pub fn robot_solids(model: &RobotModel, q: &JointState, load: &RobotLoad) -> Vec<(String, Solid)> {
    let frames = link_frames(model, q);
    let mut out: Vec<(String, Solid)> = model
        .bodies
        .iter()
        .map(|b| {
            let f = &frames[b.frame];
            (
                b.name.clone(),
                Solid::Capsule {
                    a: f.transform_point(&b.a),
                    b: f.transform_point(&b.b),
                    radius: b.radius,
                },
            )
        })
        .collect();
    let flange = forward_kinematics(model, q);
    if let Some(t) = &load.tool {
        out.push((
            TOOL_BODY.to_string(),
            Solid::Box {
                pose: flange.compose(&t.body.center),
                half: Vector3::from(t.body.extents) * 0.5,
            },
        ));
    }
    if let Some(p) = &load.payload {
        out.push((
            PAYLOAD_BODY.to_string(),
            Solid::from_shape(&p.shape, flange.compose(&p.flange_to_shape)),
        ));
    }
    out
}

fn self_pair_skipped(model: &RobotModel, a: &str, b: &str) -> bool {
    if model.is_adjacent(a, b) {
        return true;
    }
    // The payload touches the tool by construction; the wrist sits right
    // above both.
    let pair = |x: &str, y: &str| (a == x && b == y) || (a == y && b == x);
    pair(PAYLOAD_BODY, TOOL_BODY) || pair(PAYLOAD_BODY, "wrist")
}

#[derive(Clone)]
struct Obstacle {
    id: String,
    solid: Solid,
    center: Vector3<f64>,
    radius: f64,
}

/// Obstacles of a scene snapshot plus the robot load, prepared for many
/// queries.
#[derive(Clone)]
pub struct CollisionWorld {
    obstacles: std::sync::Arc<Vec<Obstacle>>,
    pub load: RobotLoad,
}

impl CollisionWorld {
    /// All scene obstacles; `load` replaces the scene's mounted tool.
    pub fn new(scene: &Scene, load: RobotLoad) -> Self {
        Self::with_exclusions(scene, load, &[])
    }

    /// The scene with its mounted tool and no payload.
    pub fn for_scene(scene: &Scene) -> Self {
        let tool = scene.mounted_tool().and_then(|t| scene.tool(t).ok());
        Self::new(scene, RobotLoad::tool(tool))
    }

    /// Scene obstacles minus the listed ids (the part being handled, the
    /// resting tool being picked up, ...).
    pub fn with_exclusions(scene: &Scene, load: RobotLoad, exclude: &[String]) -> Self {
        let obstacles = scene
            .collision_solids()
            .into_iter()
            .filter(|w| !exclude.contains(&w.id))
            .map(|w| {
                let solid = Solid::from_shape(&w.shape, w.pose);
                let (center, radius) = solid.bounding_sphere();
                Obstacle {
                    id: w.id,
                    solid,
                    center,
                    radius,
                }
            })
            .collect();
        CollisionWorld {
            obstacles: std::sync::Arc::new(obstacles),
            load,
        }
    }

    pub fn with_load(&self, load: RobotLoad) -> Self {
        CollisionWorld {
            obstacles: self.obstacles.clone(),
            load,
        }
    }

    pub fn obstacle_ids(&self) -> impl Iterator<Item = &str> {
        self.obstacles.iter().map(|o| o.id.as_str())
    }

    pub fn add_obstacle(&mut self, id: &str, solid: Solid) {
        let (center, radius) = solid.bounding_sphere();
        std::sync::Arc::make_mut(&mut self.obstacles).push(Obstacle {
            id: id.to_string(),
            solid,
            center,
            radius,
        });
    }

    /// Full report: every colliding pair and the minimum clearance.
    pub fn check_state(&self, model: &RobotModel, q: &JointState) -> CollisionReport {
        let bodies = robot_solids(model, q, &self.load);
        let mut pairs = Vec::new();
        let mut min_clear = f64::INFINITY;
        let mut visit = |a: &str, sa: &Solid, b: &str, sb: &Solid| {
            let (ca, ra) = sa.bounding_sphere();
            let (cb, rb) = sb.bounding_sphere();
            if (ca - cb).norm() - ra - rb >= min_clear {
                return;
            }
            let d = distance(sa, sb);
            if d <= 0.0 {
                pairs.push((a.to_string(), b.to_string()));
            }
            min_clear = min_clear.min(d.max(0.0));
        };
        for (name, s) in &bodies {
            for o in self.obstacles.iter() {
                visit(name, s, &o.id, &o.solid);
            }
        }
        for i in 0..bodies.len() {
            for j in i + 1..bodies.len() {
                let (na, sa) = &bodies[i];
                let (nb, sb) = &bodies[j];
                if !self_pair_skipped(model, na, nb) {
                    visit(na, sa, nb, sb);
                }
            }
        }
        CollisionReport {
            colliding: !pairs.is_empty(),
            pairs,
            min_clearance_m: if min_clear.is_finite() { min_clear } else { f64::MAX },
        }
    }

    /// Boolean check with early exit.
    pub fn collides(&self, model: &RobotModel, q: &JointState) -> bool {
        let bodies = robot_solids(model, q, &self.load);
        let hit = |sa: &Solid, sb: &Solid, cb: &Vector3<f64>, rb: f64| {
            let (ca, ra) = sa.bounding_sphere();
            (ca - cb).norm() <= ra + rb && distance(sa, sb) <= 0.0
        };
        for (_, s) in &bodies {
            for o in self.obstacles.iter() {
                if hit(s, &o.solid, &o.center, o.radius) {
                    return true;
                }
            }
        }
        for i in 0..bodies.len() {
            for j in i + 1..bodies.len() {
                let (na, sa) = &bodies[i];
                let (nb, sb) = &bodies[j];
                if self_pair_skipped(model, na, nb) {
                    continue;
                }
                let (cb, rb) = sb.bounding_sphere();
                if hit(sa, sb, &cb, rb) {
                    return true;
                }
            }
        }
        false
    }

    /// Samples the straight joint-space segment at `step` and reports the
    /// first colliding sample.
    pub fn check_segment(
        &self,
        model: &RobotModel,
        a: &JointState,
        b: &JointState,
        step: Resolution,
    ) -> SegmentReport {
        let n = step.intervals(a, b);
        for k in 0..=n {
            let t = if n == 0 { 0.0 } else { k as f64 / n as f64 };
            let q = a.lerp(b, t);
            if self.collides(model, &q) {
                return SegmentReport {
                    report: self.check_state(model, &q),
                    first_hit: Some(t),
                    samples: k + 1,
                };
            }
        }
        SegmentReport {
            report: CollisionReport {
                colliding: false,
                pairs: Vec::new(),
                min_clearance_m: self.check_state(model, b).min_clearance_m,
            },
            first_hit: None,
            samples: n + 1,
        }
    }

    /// True when the whole segment is free at `step`.
    pub fn segment_free(&self, model: &RobotModel, a: &JointState, b: &JointState, step: Resolution) -> bool {
        let n = step.intervals(a, b);
        (0..=n).all(|k| {
            let t = if n == 0 { 0.0 } else { k as f64 / n as f64 };
            !self.collides(model, &a.lerp(b, t))
        })
    }
}

/// Check one configuration against a scene with the given tool mounted.
pub fn check_state(
    scene: &Scene,
    model: &RobotModel,
    q: &JointState,
    attached_tool: Option<&ToolSpec>,
) -> CollisionReport {
    CollisionWorld::new(scene, RobotLoad::tool(attached_tool)).check_state(model, q)
}

/// Discretized segment check against a scene with its mounted tool.
pub fn check_segment(
    scene: &Scene,
    model: &RobotModel,
    q_a: &JointState,
    q_b: &JointState,
    step: Resolution,
) -> SegmentReport {
    CollisionWorld::for_scene(scene).check_segment(model, q_a, q_b, step)
}
