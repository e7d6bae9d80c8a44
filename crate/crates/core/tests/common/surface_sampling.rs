//! Brute-force intersection oracle: sample points on the surface of each
//! body and test them for containment in the other.
//!
//! Robot links are taken as plain cylinders between the capsule end
//! points, i.e. without the hemispherical caps the checker adds. Body
//! placement comes from `robot_solids`; only the verdict is independent.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twin_core::geometry::JointState;
use twin_core::kinematics::RobotModel;
use twin_core::motion::gjk::Solid;
use twin_core::motion::{robot_solids, RobotLoad, PAYLOAD_BODY, TOOL_BODY};
use twin_core::motion::CollisionWorld;
use twin_core::scene::Scene;

use super::sampling::random_state;

pub const SAMPLES: usize = 1000;

/// Exact solid used by the oracle.
#[derive(Clone, Debug)]
pub enum TrueBody {
    /// Points and a rotation-free description keep this independent of Pose6D.
    Box {
        center: Vector3<f64>,
        axes: [Vector3<f64>; 3],
        half: [f64; 3],
    },
    Cylinder {
        a: Vector3<f64>,
        b: Vector3<f64>,
        radius: f64,
    },
}

impl TrueBody {
    pub fn from_solid(s: &Solid) -> TrueBody {
        match s {
            Solid::Capsule { a, b, radius } => TrueBody::Cylinder {
                a: *a,
                b: *b,
                radius: *radius,
            },
            Solid::Box { pose, half } => {
                let m = pose.rotation_matrix();
                TrueBody::Box {
                    center: pose.position,
                    axes: [m.column(0).into(), m.column(1).into(), m.column(2).into()],
                    half: [half.x, half.y, half.z],
                }
            }
            Solid::Cylinder {
                pose,
                radius,
                half_length,
            } => {
                let z = pose.rotation_matrix().column(2).into_owned();
                TrueBody::Cylinder {
                    a: pose.position - z * *half_length,
                    b: pose.position + z * *half_length,
                    radius: *radius,
                }
            }
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        match self {
            TrueBody::Box { center, axes, half } => {
                let d = p - center;
                (0..3).all(|i| d.dot(&axes[i]).abs() <= half[i])
            }
            TrueBody::Cylinder { a, b, radius } => {
                let ax = b - a;
                let len2 = ax.norm_squared();
                let t = (p - a).dot(&ax);
                if t < 0.0 || t > len2 {
                    return false;
                }
                let radial = (p - a) - ax * (t / len2);
                radial.norm() <= *radius
            }
        }
    }

    pub fn bound(&self) -> (Vector3<f64>, f64) {
        match self {
            TrueBody::Box { center, half, .. } => {
                (*center, (half[0].powi(2) + half[1].powi(2) + half[2].powi(2)).sqrt())
            }
            TrueBody::Cylinder { a, b, radius } => {
                let h = (b - a).norm() / 2.0;
                ((a + b) / 2.0, (h * h + radius * radius).sqrt())
            }
        }
    }

    /// `n` points spread over the surface, area weighted.
    pub fn surface_points(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(n);
        match self {
            TrueBody::Box { center, axes, half } => {
                let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
                let total: f64 = areas.iter().sum();
                for _ in 0..n {
                    let mut pick = rng.random::<f64>() * total;
                    let mut face = 0;
                    while face < 2 && pick > areas[face] {
                        pick -= areas[face];
                        face += 1;
                    }
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let mut p = *center + axes[face] * (sign * half[face]);
                    for k in 0..3 {
                        if k != face {
                            p += axes[k] * (half[k] * rng.random_range(-1.0..=1.0));
                        }
                    }
                    out.push(p);
                }
            }
            TrueBody::Cylinder { a, b, radius } => {
                let ax = b - a;
                let len = ax.norm();
                let z = ax / len;
                let helper = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                let u = z.cross(&helper).normalize();
                let v = z.cross(&u);
                let side = 2.0 * std::f64::consts::PI * radius * len;
                let cap = std::f64::consts::PI * radius * radius;
                for _ in 0..n {
                    let phi = rng.random_range(0.0..std::f64::consts::TAU);
                    let dir = u * phi.cos() + v * phi.sin();
                    let pick = rng.random::<f64>() * (side + 2.0 * cap);
                    let p = if pick < side {
                        a + z * (len * rng.random::<f64>()) + dir * *radius
                    } else {
                        let r = radius * rng.random::<f64>().sqrt();
                        let base = if pick < side + cap { *a } else { *b };
                        base + dir * r
                    };
                    out.push(p);
                }
            }
        }
        out
    }
}

fn overlaps(x: &TrueBody, px: &[Vector3<f64>], y: &TrueBody, py: &[Vector3<f64>]) -> bool {
    let (cx, rx) = x.bound();
    let (cy, ry) = y.bound();
    if (cx - cy).norm() > rx + ry {
        return false;
    }
    px.iter().any(|p| y.contains(p)) || py.iter().any(|p| x.contains(p))
}

fn skipped(model: &RobotModel, a: &str, b: &str) -> bool {
    let pair = |x: &str, y: &str| (a == x && b == y) || (a == y && b == x);
    model.is_adjacent(a, b) || pair(PAYLOAD_BODY, TOOL_BODY) || pair(PAYLOAD_BODY, "wrist")
}

/// Sampling oracle for one scene and robot load.
pub struct SamplingOracle {
    obstacles: Vec<(String, TrueBody, Vec<Vector3<f64>>)>,
    load: RobotLoad,
    seed: u64,
}

impl SamplingOracle {
    pub fn new(scene: &Scene, load: RobotLoad, exclude: &[&str], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obstacles = scene
            .collision_solids()
            .into_iter()
            .filter(|w| !exclude.contains(&w.id.as_str()))
            .map(|w| {
                let body = TrueBody::from_solid(&Solid::from_shape(&w.shape, w.pose));
                let pts = body.surface_points(SAMPLES, &mut rng);
                (w.id, body, pts)
            })
            .collect();
        SamplingOracle {
            obstacles,
            load,
            seed,
        }
    }

    /// Colliding pairs found by sampling at configuration `q`.
    pub fn pairs(&self, model: &RobotModel, q: &JointState) -> Vec<(String, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let bodies: Vec<(String, TrueBody, Vec<Vector3<f64>>)> = robot_solids(model, q, &self.load)
            .into_iter()
            .map(|(n, s)| {
                let b = TrueBody::from_solid(&s);
                let pts = b.surface_points(SAMPLES, &mut rng);
                (n, b, pts)
            })
            .collect();
        let mut out = Vec::new();
        for (n, b, pts) in &bodies {
            for (id, ob, opts) in &self.obstacles {
                if overlaps(b, pts, ob, opts) {
                    out.push((n.clone(), id.clone()));
                }
            }
        }
        for i in 0..bodies.len() {
            for j in i + 1..bodies.len() {
                let (na, ba, pa) = &bodies[i];
                let (nb, bb, pb) = &bodies[j];
                if !skipped(model, na, nb) && overlaps(ba, pa, bb, pb) {
                    out.push((na.clone(), nb.clone()));
                }
            }
        }
        out
    }

    pub fn collides(&self, model: &RobotModel, q: &JointState) -> bool {
        !self.pairs(model, q).is_empty()
    }
}

/// Checker vs sampling oracle over random states. Returns (false
/// negatives, false positives, colliding per oracle).
pub fn oracle_agreement(n: usize, seed: u64) -> (usize, usize, usize) {
    let model = RobotModel::canonical();
    let scene = Scene::canonical();
    let load = RobotLoad::tool(Some(scene.tool("screwdriver").unwrap()));
    let world = CollisionWorld::new(&scene, load.clone());
    let oracle = SamplingOracle::new(&scene, load, &[], seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fneg, mut fpos, mut hits) = (0, 0, 0);
    for _ in 0..n {
        let q = random_state(&model, &mut rng);
        let o = oracle.collides(&model, &q);
        let c = world.collides(&model, &q);
        hits += o as usize;
        if o && !c {
            fneg += 1;
        }
        if c && !o {
            fpos += 1;
        }
    }
    (fneg, fpos, hits)
}
