//! Full-fixture session runs and pack displacements for replay checks.

use nalgebra::{Unit, UnitQuaternion, Vector3};
use twin_core::session::{Envelope, Session, SessionConfig};
use twin_core::{Pose6D, RobotModel, Scene};

/// Disassemble the canonical fixture in topological order. Returns the
/// session and the event log of a subscriber attached from the start.
pub fn full_run(cfg: SessionConfig) -> (Session, Vec<Envelope>) {
    let scene = Scene::canonical();
    let mut s = Session::new(RobotModel::canonical(), scene.clone(), cfg);
    let sub = s.bus().subscribe_with_capacity(1 << 20);
    for id in scene.topological_order().unwrap() {
        s.handle_detach_command(&id).unwrap_or_else(|e| panic!("{id}: {e}"));
    }
    let log = sub.drain();
    (s, log)
}

/// World-frame rigid motion that rotates the pack about its own base
/// origin and then shifts it.
pub fn pack_displacement(scene: &Scene, axis: Vector3<f64>, angle: f64, shift: Vector3<f64>) -> Pose6D {
    let pivot = scene.evb_base_pose().position;
    let r = UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle);
    Pose6D::new(pivot + shift - r * pivot, r)
}

pub fn ndjson(log: &[Envelope]) -> String {
    log.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect()
}
