//! Compile the whole canonical fixture in topological order, folding the
//! plan effects into the scene by hand.

use twin_core::motion::{CollisionWorld, RobotLoad, RESOLUTION};
use twin_core::skills::{compile_skill, Effect, SkillConfig, SkillPlan};
use twin_core::{JointState, RobotModel, Scene};

pub fn apply_effects(scene: &Scene, effects: &[Effect]) -> Scene {
    let mut s = scene.clone();
    for e in effects {
        s = match e {
            Effect::ComponentState { id, state } => s.set_component_state(id, *state).unwrap(),
            Effect::MountTool { tool } => s.with_mounted_tool(tool.as_deref()).unwrap(),
        };
    }
    s
}

/// Plans with the scene each one was compiled against, and the final scene.
pub fn compile_all(model: &RobotModel, scene: &Scene, cfg: &SkillConfig) -> (Vec<(Scene, SkillPlan)>, Scene) {
    let mut scene = scene.clone();
    let mut q = model.home;
    let mut out = Vec::new();
    for id in scene.topological_order().unwrap() {
        let plan = compile_skill(&scene, model, &id, &q, cfg)
            .unwrap_or_else(|e| panic!("{id}: {e}"));
        let before = scene.clone();
        for p in &plan.phases {
            scene = apply_effects(&scene, &p.effects);
        }
        q = *plan.end().unwrap();
        out.push((before, plan));
    }
    (out, scene)
}

/// Sweep every phase of `plan` at a tenth of the planning resolution with a
/// world rebuilt from the scene, the mounted tool and the recorded payload.
/// Returns the first colliding sample as (phase, time, pairs).
pub fn first_collision(
    model: &RobotModel,
    scene: &Scene,
    plan: &SkillPlan,
) -> Option<(String, JointState, Vec<(String, String)>)> {
    let mut scene = scene.clone();
    let fine = RESOLUTION.scaled(0.1);
    for p in &plan.phases {
        let load = RobotLoad {
            tool: scene.mounted_tool().map(|t| scene.tool(t).unwrap().clone()),
            payload: p.payload.clone(),
        };
        let world = CollisionWorld::with_exclusions(&scene, load, &p.ignored);
        for w in p.trajectory.waypoints.windows(2) {
            let r = world.check_segment(model, &w[0], &w[1], fine);
            if r.report.colliding {
                return Some((p.name.clone(), w[0], r.report.pairs));
            }
        }
        scene = apply_effects(&scene, &p.effects);
    }
    None
}
