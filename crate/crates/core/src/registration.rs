//! Rigid registration of observed pack features against the model, and
//! rebase of the scene onto the estimate.

use crate::geometry::Pose6D;
use crate::scene::Scene;
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residual above which an estimate is not applied.
pub const DEFAULT_RESIDUAL_GATE_M: f64 = 0.005;

/// Estimated pose of the pack base: maps model (pack frame) points to
/// observed world points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseUpdate {
    pub transform: Pose6D,
    pub timestamp_us: u64,
    pub residual_rmse_m: f64,
}

impl PoseUpdate {
    pub fn exact(transform: Pose6D) -> Self {
        PoseUpdate {
            transform,
            timestamp_us: 0,
            residual_rmse_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistrationError {
    #[error("point sets differ in size: {model} model vs {observed} observed")]
    CountMismatch { model: usize, observed: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("residual {residual_m:.4} m exceeds the {gate_m:.4} m gate")]
    ResidualTooHigh { residual_m: f64, gate_m: f64 },
}

fn centroid(pts: &[Vector3<f64>]) -> Vector3<f64> {
    pts.iter().sum::<Vector3<f64>>() / pts.len() as f64
}

/// Least-squares rigid transform taking `model` onto `observed` with known
/// correspondences. The rotation is always proper.
pub fn estimate_rigid_transform(
    model: &[Vector3<f64>],
    observed: &[Vector3<f64>],
) -> Result<PoseUpdate, RegistrationError> {
    if model.len() != observed.len() {
        return Err(RegistrationError::CountMismatch {
            model: model.len(),
            observed: observed.len(),
        });
    }
    if model.len() < 3 {
        return Err(RegistrationError::DegenerateInput(format!(
            "need at least 3 points, got {}",
            model.len()
        )));
    }
    if model.iter().chain(observed).any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(RegistrationError::DegenerateInput("non-finite point".into()));
    }
    let cm = centroid(model);
    let co = centroid(observed);

    // Spread of the model points: collinear or coincident sets leave the
    // rotation about their line undetermined.
    let mut spread = Matrix3::zeros();
    for p in model {
        let d = p - cm;
        spread += d * d.transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 1e-18 || sv[1] <= 1e-12 * sv[0] {
        return Err(RegistrationError::DegenerateInput(
            "model points are collinear or coincident".into(),
        ));
    }

    let mut h = Matrix3::zeros();
    for (m, o) in model.iter().zip(observed) {
        h += (m - cm) * (o - co).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let r = v * fix * u.transpose();
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let t = co - rot * cm;
    let transform = Pose6D::new(t, rot);

    let sq: f64 = model
        .iter()
        .zip(observed)
        .map(|(m, o)| (transform.transform_point(m) - o).norm_squared())
        .sum();
    Ok(PoseUpdate {
        transform,
        timestamp_us: 0,
        residual_rmse_m: (sq / model.len() as f64).sqrt(),
    })
}

/// Move the pack base of `scene` to the estimated pose.
pub fn rebase_scene(scene: &Scene, update: &PoseUpdate) -> Result<Scene, RegistrationError> {
    rebase_scene_gated(scene, update, DEFAULT_RESIDUAL_GATE_M)
}

pub fn rebase_scene_gated(
    scene: &Scene,
    update: &PoseUpdate,
    gate_m: f64,
) -> Result<Scene, RegistrationError> {
    if !(update.residual_rmse_m <= gate_m) {
        return Err(RegistrationError::ResidualTooHigh {
            residual_m: update.residual_rmse_m,
            gate_m,
        });
    }
    // The update is a world pose; the frame may hang off another frame.
    let base = scene.evb_base_frame();
    let parent = scene
        .document()
        .frames
        .iter()
        .find(|f| f.name == base)
        .map(|f| f.parent.clone())
        .expect("validated evb base frame");
    let parent_world = scene
        .world_transform(&parent)
        .unwrap_or_else(|_| Pose6D::identity());
    Ok(scene.with_evb_base_pose(parent_world.inverse().compose(&update.transform)))
}

/// Simulated camera: the pack corners placed by `true_transform`, with
/// isotropic Gaussian noise of `noise_sigma_m` per coordinate.
pub fn synthesize_observation(
    scene: &Scene,
    true_transform: &Pose6D,
    noise_sigma_m: f64,
    seed: u64,
) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma_m.max(0.0)).expect("sigma is finite");
    scene
        .pack_corners()
        .iter()
        .map(|c| {
            let p = true_transform.transform_point(c);
            if noise_sigma_m > 0.0 {
                p + Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                )
            } else {
                p
            }
        })
        .collect()
}
