mod common;

use common::matrix_chain;
use common::sampling::random_state;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use twin_core::geometry::{JointState, DOF};
use twin_core::kinematics::{
    clamp_to_limits, forward_kinematics, inverse_kinematics, jacobian, IkOptions, RobotModel,
};
use twin_core::Pose6D;

fn deg(v: f64) -> f64 {
    v * PI / 180.0
}

#[test]
fn fk_matches_matrix_chain_oracle() {
    let m = RobotModel::canonical();
    let q = JointState::new(0.5, [deg(10.0), deg(-20.0), deg(30.0), deg(-40.0), deg(50.0), deg(-60.0)]);
    let (dp, dr) = matrix_chain::pose_vs_matrix(&forward_kinematics(&m, &q), &matrix_chain::flange(&m, &q));
    assert!(dp < 1e-9 && dr < 1e-9, "dp={dp} dr={dr}");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let q = random_state(&m, &mut rng);
        let (dp, dr) =
            matrix_chain::pose_vs_matrix(&forward_kinematics(&m, &q), &matrix_chain::flange(&m, &q));
        assert!(dp < 1e-9 && dr < 1e-9);
    }
}

/// Column i against (FK(q + eps e_i) - FK(q)) / eps, angular part via the
/// rotation vector of R(q + eps e_i) R(q)^T.
fn finite_difference_error(m: &RobotModel, q: &JointState, eps: f64) -> f64 {
    let j = jacobian(m, q);
    let base = forward_kinematics(m, q);
    let mut worst: f64 = 0.0;
    for i in 0..DOF {
        let mut qp = *q;
        qp.set(i, q.get(i) + eps);
        let p = forward_kinematics(m, &qp);
        let lin = (p.position - base.position) / eps;
        let ang = base.rotation_error_to(&p) / eps;
        for r in 0..3 {
            worst = worst.max((j[(r, i)] - lin[r]).abs());
            worst = worst.max((j[(r + 3, i)] - ang[r]).abs());
        }
    }
    worst
}

#[test]
fn jacobian_matches_finite_differences() {
    let m = RobotModel::canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let q = random_state(&m, &mut rng);
        let err = finite_difference_error(&m, &q, 1e-7);
        assert!(err < 1e-5, "fd error {err}");
    }
}

#[test]
fn wrist_singularity_drops_arm_rank() {
    let m = RobotModel::canonical();
    // q5 = 0 aligns the axes of joints 4 and 6.
    let q = JointState::new(1.0, [0.3, 0.2, -0.4, 0.7, 0.0, -0.3]);
    let j = jacobian(&m, &q);
    let sv = j.svd(false, false).singular_values;
    let rank = sv.iter().filter(|s| **s > 1e-9).count();
    assert!(rank < 7);
    let arm = j.fixed_view::<6, 6>(0, 1).into_owned();
    let arm_sv = arm.svd(false, false).singular_values;
    assert_eq!(arm_sv.iter().filter(|s| **s > 1e-9).count(), 5);
}

#[test]
fn track_translation_equivariance() {
    let m = RobotModel::canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let q = random_state(&m, &mut rng);
        let d: f64 = rng.random_range(-1.0..1.0);
        let mut shifted = q;
        shifted.track += d;
        let a = forward_kinematics(&m, &shifted);
        let b = forward_kinematics(&m, &q).translated(&(m.track_axis * d));
        let (dp, dr) = a.distance(&b);
        assert!(dp < 1e-12 && dr < 1e-12);
    }
}

#[test]
fn ik_round_trip_random_targets() {
    let m = RobotModel::canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = IkOptions::default();
    for trial in 0..1000 {
        let target_q = random_state(&m, &mut rng);
        let target = forward_kinematics(&m, &target_q);
        let mut seed = target_q;
        seed.track += rng.random_range(-0.02..0.02);
        for k in 0..6 {
            seed.q[k] += deg(rng.random_range(-5.0..5.0));
        }
        let seed = clamp_to_limits(&m, &seed);
        let sol = inverse_kinematics(&m, &target, &seed, &opts)
            .unwrap_or_else(|e| panic!("trial {trial}: {e}"));
        let (dp, dr) = forward_kinematics(&m, &sol.q).distance(&target);
        assert!(dp < 1e-6 && dr < 1e-6, "trial {trial}: dp={dp} dr={dr}");
        assert!(m.within_limits(&sol.q));
    }
}

#[test]
fn ik_respects_tcp_offset() {
    let m = RobotModel::canonical();
    let tcp = Pose6D::from_translation(0.0, 0.0, 0.15);
    let q = JointState::new(1.5, [0.2, 0.4, 0.3, 0.1, -1.2, 0.2]);
    let target = forward_kinematics(&m, &q).compose(&tcp).translated(&Vector3::new(0.02, -0.01, 0.03));
    let opts = IkOptions::default().with_tcp(tcp);
    let sol = inverse_kinematics(&m, &target, &q, &opts).unwrap();
    let (dp, dr) = forward_kinematics(&m, &sol.q).compose(&tcp).distance(&target);
    assert!(dp < 1e-6 && dr < 1e-6);
}
