//! Convex distance queries (GJK) over the solids used by the checker.

use crate::geometry::Pose6D;
use crate::scene::Shape;
use nalgebra::{Matrix3, Vector3};

/// Convex solid in world coordinates. A capsule is a segment core swept by
/// a sphere; boxes and cylinders have no margin.
#[derive(Debug, Clone, PartialEq)]
pub enum Solid {
    Capsule {
        a: Vector3<f64>,
        b: Vector3<f64>,
        radius: f64,
    },
    Box {
        pose: Pose6D,
        half: Vector3<f64>,
    },
    Cylinder {
        pose: Pose6D,
        radius: f64,
        half_length: f64,
    },
}

impl Solid {
    pub fn from_shape(shape: &Shape, pose: Pose6D) -> Solid {
        match *shape {
            Shape::Box { extents } => Solid::Box {
                pose,
                half: Vector3::from(extents) * 0.5,
            },
            Shape::Cylinder { radius, length } => Solid::Cylinder {
                pose,
                radius,
                half_length: 0.5 * length,
            },
        }
    }

    fn margin(&self) -> f64 {
        match self {
            Solid::Capsule { radius, .. } => *radius,
            _ => 0.0,
        }
    }

    /// Sphere enclosing the solid.
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        match self {
            Solid::Capsule { a, b, radius } => ((a + b) * 0.5, (b - a).norm() * 0.5 + radius),
            Solid::Box { pose, half } => (pose.position, half.norm()),
            Solid::Cylinder {
                pose,
                radius,
                half_length,
            } => (pose.position, (radius * radius + half_length * half_length).sqrt()),
        }
    }

    /// Farthest point of the margin-free core along `d`.
    fn core_support(&self, d: &Vector3<f64>) -> Vector3<f64> {
        match self {
            Solid::Capsule { a, b, .. } => {
                if d.dot(&(b - a)) > 0.0 {
                    *b
                } else {
                    *a
                }
            }
            Solid::Box { pose, half } => {
                let l = pose.orientation.inverse() * d;
                let p = Vector3::new(
                    half.x.copysign(l.x),
                    half.y.copysign(l.y),
                    half.z.copysign(l.z),
                );
                pose.transform_point(&p)
            }
            Solid::Cylinder {
                pose,
                radius,
                half_length,
            } => {
                let l = pose.orientation.inverse() * d;
                let s = (l.x * l.x + l.y * l.y).sqrt();
                let (x, y) = if s > 1e-12 {
                    (radius * l.x / s, radius * l.y / s)
                } else {
                    (0.0, 0.0)
                };
                pose.transform_point(&Vector3::new(x, y, half_length.copysign(l.z)))
            }
        }
    }
}

/// Separation distance between two solids; `<= 0` means they intersect.
/// Penetration depth is not computed, so negative values only say how much
/// of the capsule margins overlap.
pub fn distance(a: &Solid, b: &Solid) -> f64 {
    core_distance(a, b) - a.margin() - b.margin()
}

const MAX_ITERS: usize = 64;

fn core_distance(a: &Solid, b: &Solid) -> f64 {
    let support = |d: &Vector3<f64>| a.core_support(d) - b.core_support(&-d);
    let (ca, _) = a.bounding_sphere();
    let (cb, _) = b.bounding_sphere();
    let mut d0 = ca - cb;
    if d0.norm_squared() < 1e-24 {
        d0 = Vector3::x();
    }
    let mut simplex: Vec<Vector3<f64>> = vec![support(&-d0)];
    let mut v = simplex[0];
    for _ in 0..MAX_ITERS {
        let vv = v.norm_squared();
        if vv < 1e-24 {
            return 0.0;
        }
        let w = support(&-v);
        // No progress toward the origin: v is the closest point.
        if vv - v.dot(&w) <= 1e-12 * vv.max(1e-6) {
            return vv.sqrt();
        }
        simplex.push(w);
        let (nv, kept) = closest_on_simplex(&simplex);
        if kept.len() == 4 {
            return 0.0;
        }
        simplex = kept;
        if nv.norm_squared() >= vv {
            return vv.sqrt();
        }
        v = nv;
    }
    v.norm()
}

/// Closest point to the origin on the convex hull of up to four points,
/// together with the smallest subset of points supporting it.
fn closest_on_simplex(pts: &[Vector3<f64>]) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let n = pts.len();
    let mut best: Option<(f64, Vector3<f64>, Vec<Vector3<f64>>)> = None;
    for mask in 1u32..(1 << n) {
        let sub: Vec<Vector3<f64>> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| pts[i])
            .collect();
        let Some(p) = affine_projection(&sub) else {
            continue;
        };
        let d = p.norm_squared();
        if best.as_ref().is_none_or(|(bd, _, _)| d < *bd - 1e-18) {
            best = Some((d, p, sub));
        }
    }
    let (_, p, sub) = best.expect("single points always project");
    (p, sub)
}

/// Projection of the origin onto the affine hull of `sub`, if it falls
/// strictly inside the simplex.
fn affine_projection(sub: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    let k = sub.len();
    if k == 1 {
        return Some(sub[0]);
    }
    let p0 = sub[0];
    let e: Vec<Vector3<f64>> = sub[1..].iter().map(|p| p - p0).collect();
    let m = k - 1;
    // Solve the Gram system for the barycentric weights of the edges.
    let lam: Vec<f64> = match m {
        1 => {
            let g = e[0].dot(&e[0]);
            if g < 1e-24 {
                return None;
            }
            vec![-p0.dot(&e[0]) / g]
        }
        2 => {
            let g = nalgebra::Matrix2::new(
                e[0].dot(&e[0]),
                e[0].dot(&e[1]),
                e[1].dot(&e[0]),
                e[1].dot(&e[1]),
            );
            let r = nalgebra::Vector2::new(-p0.dot(&e[0]), -p0.dot(&e[1]));
            if g.determinant().abs() < 1e-18 * g.trace().powi(2).max(1e-30) {
                return None;
            }
            let x = g.try_inverse()? * r;
            vec![x[0], x[1]]
        }
        3 => {
            let g = Matrix3::from_fn(|i, j| e[i].dot(&e[j]));
            let r = Vector3::new(-p0.dot(&e[0]), -p0.dot(&e[1]), -p0.dot(&e[2]));
            if g.determinant().abs() < 1e-18 * g.trace().powi(3).max(1e-30) {
                return None;
            }
            let x = g.try_inverse()? * r;
            vec![x[0], x[1], x[2]]
        }
        _ => unreachable!("simplex has at most four points"),
    };
    let l0 = 1.0 - lam.iter().sum::<f64>();
    if l0 < 0.0 || lam.iter().any(|l| *l < 0.0) {
        return None;
    }
    let mut p = p0;
    for (l, ei) in lam.iter().zip(&e) {
        p += ei * *l;
    }
    Some(p)
}
