mod common;

use common::fixture_run::{apply_effects, compile_all, first_collision};
use common::surface_sampling::SamplingOracle;
use nalgebra::Vector3;
use twin_core::kinematics::tcp_pose;
use twin_core::motion::RobotLoad;
use twin_core::scene::ComponentState;
use twin_core::skills::*;
use twin_core::{RobotModel, Scene};

fn fixture() -> (RobotModel, Scene, SkillConfig) {
    (RobotModel::canonical(), Scene::canonical(), SkillConfig::default())
}

fn phase<'a>(plan: &'a SkillPlan, name: &str) -> &'a Phase {
    plan.phases
        .iter()
        .find(|p| p.name == name)
        .unwrap_or_else(|| panic!("no phase {name}"))
}

fn assert_chained(plan: &SkillPlan) {
    for w in plan.phases.windows(2) {
        assert_eq!(w[0].end(), w[1].start(), "{} -> {}", w[0].name, w[1].name);
    }
}

#[test]
fn unscrew_speed_follows_pitch_and_rpm() {
    let (model, scene, cfg) = fixture();
    assert_eq!(unscrew_speed(0.001, 300.0), 0.005);
    let plan = unscrew_plan(&scene, &model, "cover_screw_1", &model.home, &cfg).unwrap();
    let names: Vec<_> = plan.phases.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["approach", "engage", "unscrew", "retreat", "drop"]);
    let p = phase(&plan, "unscrew");
    assert_eq!(p.tool_command, ToolCommand::ScrewCcw { rpm: 300.0 });
    assert!((p.trajectory.duration() - 4.0).abs() < 1e-9);
    let ts = &p.trajectory.timestamps;
    for k in 1..p.tcp_path.len() {
        let d = (p.tcp_path[k].position - p.tcp_path[k - 1].position).norm();
        let v = d / (ts[k] - ts[k - 1]);
        assert!((v - 0.005).abs() < 1e-9, "sample {k}: {v}");
    }
    // The joint solution realizes the commanded line.
    let tcp = scene.tool("screwdriver").unwrap().tcp_offset;
    for (q, c) in p.trajectory.waypoints.iter().zip(&p.tcp_path) {
        let (dp, _) = tcp_pose(&model, q, &tcp).distance(c);
        assert!(dp < 1e-6);
    }
    assert_chained(&plan);
    assert_eq!(plan.phases[0].start(), &model.home);
}

#[test]
fn unscrew_marks_detached_then_removed() {
    let (model, scene, cfg) = fixture();
    let plan = unscrew_plan(&scene, &model, "cover_screw_2", &model.home, &cfg).unwrap();
    let states: Vec<_> = plan
        .phases
        .iter()
        .flat_map(|p| p.effects.iter())
        .filter_map(|e| match e {
            Effect::ComponentState { id, state } if id == "cover_screw_2" => Some(*state),
            _ => None,
        })
        .collect();
    assert_eq!(states, [ComponentState::Detached, ComponentState::Removed]);
    assert_eq!(phase(&plan, "retreat").payload.as_ref().unwrap().component_id, "cover_screw_2");
    assert!(phase(&plan, "engage").payload.is_none());
}

#[test]
fn cover_is_blocked_by_its_screws() {
    let (model, scene, cfg) = fixture();
    let err = compile_skill(&scene, &model, "cover", &model.home, &cfg).unwrap_err();
    let SkillError::PrecedenceViolation { component, mut blockers } = err else {
        panic!("{err:?}")
    };
    assert_eq!(component, "cover");
    blockers.sort();
    assert_eq!(blockers, ["cover_screw_1", "cover_screw_2", "cover_screw_3", "cover_screw_4"]);
}

#[test]
fn mounted_tool_skips_the_change() {
    let (model, scene, cfg) = fixture();
    let plan = compile_skill(&scene, &model, "cover_screw_1", &model.home, &cfg).unwrap();
    assert!(plan.phases.iter().all(|p| p.kind == PhaseKind::Skill));
    assert_eq!(plan.tool_id, "screwdriver");
}

fn scene_after_cover(model: &RobotModel, cfg: &SkillConfig) -> (Scene, twin_core::JointState) {
    let mut scene = Scene::canonical();
    let mut q = model.home;
    for id in ["cover_screw_1", "cover_screw_2", "cover_screw_3", "cover_screw_4", "cover"] {
        let plan = compile_skill(&scene, model, id, &q, cfg).unwrap();
        for p in &plan.phases {
            scene = apply_effects(&scene, &p.effects);
        }
        q = *plan.end().unwrap();
    }
    (scene, q)
}

#[test]
fn connector_detach_has_four_phases() {
    let (model, _, cfg) = fixture();
    let (scene, q) = scene_after_cover(&model, &cfg);
    assert_eq!(scene.mounted_tool(), Some("vacuum_gripper"));

    // Holding the wrong tool: the plan opens with the change.
    let plan = compile_skill(&scene, &model, "connector_1", &q, &cfg).unwrap();
    assert_eq!(plan.phases[0].kind, PhaseKind::ToolChange);
    assert_chained(&plan);

    let change = tool_change_plan(&scene, &model, Some("vacuum_gripper"), "connector_gripper", &q, &cfg).unwrap();
    let mut scene = scene;
    for p in &change.phases {
        scene = apply_effects(&scene, &p.effects);
    }
    let q = *change.end().unwrap();
    let plan = connector_detach_plan(&scene, &model, "connector_1", &q, &cfg).unwrap();
    let names: Vec<_> = plan.phases.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["vertical_approach", "over_latch", "unlatch", "pull"]);
    assert_chained(&plan);

    let exit = Vector3::y();
    let socket = scene.world_transform("connector_1").unwrap().position;
    let (i, ii, iii, iv) = (&plan.phases[0], &plan.phases[1], &plan.phases[2], &plan.phases[3]);
    let offset = i.tcp_path.last().unwrap().position - socket;
    assert!(offset.dot(&exit) < 0.0, "{offset:?}");
    // (i) ends straight above the latch, (ii) comes down by the latch height.
    let drop = ii.tcp_path.last().unwrap().position - ii.tcp_path[0].position;
    assert!((drop - Vector3::new(0.0, 0.0, -0.02)).norm() < 1e-12);
    assert_eq!(iii.trajectory.waypoints.len(), 1);
    assert_eq!(iii.tool_command, ToolCommand::GripClose);
    let pull = iv.tcp_path.last().unwrap().position - iv.tcp_path[0].position;
    assert!((pull.normalize() - exit).norm() < 1e-6);
    assert!((pull.norm() - 0.03).abs() < 1e-12);
    assert!(iv.effects.contains(&Effect::ComponentState {
        id: "connector_1".into(),
        state: ComponentState::Detached
    }));
}

#[test]
fn vacuum_lift_is_vertical_and_releases_last() {
    let (model, _, cfg) = fixture();
    let mut scene = Scene::canonical();
    let mut q = model.home;
    for id in ["cover_screw_1", "cover_screw_2", "cover_screw_3", "cover_screw_4"] {
        let plan = compile_skill(&scene, &model, id, &q, &cfg).unwrap();
        for p in &plan.phases {
            scene = apply_effects(&scene, &p.effects);
        }
        q = *plan.end().unwrap();
    }
    let change = tool_change_plan(&scene, &model, Some("screwdriver"), "vacuum_gripper", &q, &cfg).unwrap();
    for p in &change.phases {
        scene = apply_effects(&scene, &p.effects);
    }
    let q = *change.end().unwrap();
    let plan = vacuum_lift_plan(&scene, &model, "cover", &q, &cfg).unwrap();
    let lift = phase(&plan, "lift");
    let d = lift.tcp_path.last().unwrap().position - lift.tcp_path[0].position;
    assert!((d - Vector3::new(0.0, 0.0, 0.1)).norm() < 1e-12, "{d:?}");
    let offs: Vec<_> = plan
        .phases
        .iter()
        .enumerate()
        .filter(|(_, p)| p.tool_command == ToolCommand::VacuumOff)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(offs, [plan.phases.len() - 1]);
    // Wrong strategy is refused.
    let err = vacuum_lift_plan(&scene, &model, "connector_1", &q, &cfg).unwrap_err();
    assert!(matches!(err, SkillError::PrecedenceViolation { .. } | SkillError::WrongStrategy { .. }));
}

#[test]
fn tool_change_latches_at_the_holder() {
    let (model, scene, cfg) = fixture();
    let same = tool_change_plan(&scene, &model, Some("screwdriver"), "screwdriver", &model.home, &cfg).unwrap();
    assert!(same.phases.is_empty());

    let plan = tool_change_plan(&scene, &model, Some("screwdriver"), "vacuum_gripper", &model.home, &cfg).unwrap();
    assert!(plan.phases.len() >= 4);
    assert!(plan.phases.iter().all(|p| p.kind == PhaseKind::ToolChange));
    assert_chained(&plan);
    let latch = phase(&plan, "tool_latch");
    assert_eq!(latch.tool_command, ToolCommand::AtcLatch);
    let to = scene.tool("vacuum_gripper").unwrap();
    // Flange on the holder at the latch.
    let flange = tcp_pose(&model, latch.end(), &twin_core::Pose6D::identity());
    let (dp, dr) = flange.distance(&to.holder_pose);
    assert!(dp < 1e-6 && dr < 1e-6, "{dp} {dr}");
    // After the change the new offset is active: the tip sits at holder ∘ tcp.
    let tip = tcp_pose(&model, latch.end(), &to.tcp_offset);
    let (dp, dr) = tip.distance(&to.holder_pose.compose(&to.tcp_offset));
    assert!(dp < 1e-6 && dr < 1e-6);
    let mut after = scene.clone();
    for p in &plan.phases {
        after = apply_effects(&after, &p.effects);
    }
    assert_eq!(after.mounted_tool(), Some("vacuum_gripper"));
}

#[test]
fn full_fixture_compiles_collision_free() {
    let (model, scene, cfg) = fixture();
    let (plans, last) = compile_all(&model, &scene, &cfg);
    assert_eq!(plans.len(), 13);
    assert!(last.components().iter().all(|c| c.state == ComponentState::Removed));
    let mut q = model.home;
    for (before, plan) in &plans {
        assert_eq!(plan.phases[0].start(), &q);
        assert_chained(plan);
        q = *plan.end().unwrap();
        if let Some((phase, at, pairs)) = first_collision(&model, before, plan) {
            panic!("{}: {phase} collides at {at:?}: {pairs:?}", plan.component_id);
        }
    }
}

#[test]
fn plan_waypoints_pass_the_sampling_oracle() {
    let (model, scene, cfg) = fixture();
    let (plans, _) = compile_all(&model, &scene, &cfg);
    let mut checked = 0;
    for (before, plan) in &plans {
        let mut s = before.clone();
        for p in &plan.phases {
            let load = RobotLoad {
                tool: s.mounted_tool().map(|t| s.tool(t).unwrap().clone()),
                payload: p.payload.clone(),
            };
            let ignored: Vec<&str> = p.ignored.iter().map(String::as_str).collect();
            let oracle = SamplingOracle::new(&s, load, &ignored, 11);
            for q in p.trajectory.waypoints.iter().step_by(7) {
                let pairs = oracle.pairs(&model, q);
                assert!(pairs.is_empty(), "{} {}: {pairs:?}", plan.component_id, p.name);
                checked += 1;
            }
            s = apply_effects(&s, &p.effects);
        }
    }
    assert!(checked > 100);
}

#[test]
fn compilation_is_deterministic() {
    let (model, scene, cfg) = fixture();
    let a = compile_skill(&scene, &model, "cover_screw_3", &model.home, &cfg).unwrap();
    let b = compile_skill(&scene, &model, "cover_screw_3", &model.home, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
