//! Detach skills: compile a component tag into a chain of collision-checked
//! phases with tool commands.

use crate::geometry::{frame_from_z_and_x, JointState, Pose6D};
use crate::kinematics::{inverse_kinematics, tcp_pose, IkOptions, RobotModel};
use crate::motion::{
    plan_joint, plan_linear_cartesian, time_parameterize, time_parameterize_linear,
    CollisionWorld, MotionError, Payload, RobotLoad, TimedTrajectory,
};
use crate::scene::{ComponentState, Scene, SceneError, Shape, Strategy, StrategyKind, ToolSpec};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tool signal issued when a phase starts, before any motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ToolCommand {
    None,
    ScrewCw { rpm: f64 },
    ScrewCcw { rpm: f64 },
    ScrewStop,
    GripClose,
    GripOpen,
    VacuumOn,
    VacuumOff,
    /// Open the tool-changer lock and leave the tool in its holder.
    AtcRelease,
    AtcLatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Skill,
    ToolChange,
}

/// Scene change applied once a phase has finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Effect {
    ComponentState { id: String, state: ComponentState },
    MountTool { tool: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub kind: PhaseKind,
    pub trajectory: TimedTrajectory,
    pub tool_command: ToolCommand,
    /// Hold time after the motion (tool actuation).
    pub dwell_s: f64,
    /// Commanded TCP pose for every waypoint.
    pub tcp_path: Vec<Pose6D>,
    /// Whether the phase's target is defined relative to the pack. Only
    /// such phases move with a rebase.
    pub pack_relative: bool,
    pub effects: Vec<Effect>,
    /// Part carried on the tool during the motion.
    pub payload: Option<Payload>,
    /// Obstacles the motion was allowed to touch: the part being worked on
    /// and the holder of a tool being swapped.
    pub ignored: Vec<String>,
}

impl Phase {
    pub fn duration_s(&self) -> f64 {
        self.trajectory.duration() + self.dwell_s
    }

    pub fn start(&self) -> &JointState {
        self.trajectory.start()
    }

    pub fn end(&self) -> &JointState {
        self.trajectory.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillPlan {
    /// Empty for a bare tool change.
    pub component_id: String,
    pub strategy: Option<StrategyKind>,
    pub tool_id: String,
    pub phases: Vec<Phase>,
    pub expected_duration_s: f64,
}

impl SkillPlan {
    pub fn end(&self) -> Option<&JointState> {
        self.phases.last().map(|p| p.end())
    }

    pub fn skill_phases(&self) -> impl Iterator<Item = &Phase> {
        self.phases.iter().filter(|p| p.kind == PhaseKind::Skill)
    }

    /// Last commanded TCP pose of the last pack-relative phase.
    pub fn terminal_pack_pose(&self) -> Option<Pose6D> {
        self.phases
            .iter()
            .rev()
            .find(|p| p.pack_relative)
            .and_then(|p| p.tcp_path.last().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkillError {
    #[error("{component:?} is blocked by {blockers:?}")]
    PrecedenceViolation {
        component: String,
        blockers: Vec<String>,
    },
    #[error("{0:?} is not attached")]
    NotAttached(String),
    #[error("{component:?} does not use the {expected:?} strategy")]
    WrongStrategy {
        component: String,
        expected: StrategyKind,
    },
    #[error("planning {phase:?} failed: {source}")]
    Motion {
        phase: String,
        #[source]
        source: MotionError,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

impl SkillError {
    pub fn is_timeout(&self) -> bool {
        matches!(
            self,
            SkillError::Motion {
                source: MotionError::PlanningTimeout { .. },
                ..
            }
        )
    }
}

/// Speeds, dwell times and offsets shared by every skill.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillConfig {
    pub rpm: f64,
    pub standoff_m: f64,
    pub engage_speed_m_s: f64,
    pub retreat_speed_m_s: f64,
    /// Slow moves around the connector latch.
    pub fine_speed_m_s: f64,
    pub lift_speed_m_s: f64,
    /// Distance above a tool holder where the flange changes direction.
    pub holder_clearance_m: f64,
    pub grip_dwell_s: f64,
    pub vacuum_dwell_s: f64,
    pub atc_dwell_s: f64,
    pub vel_scale: f64,
    pub linear_step_m: f64,
    pub seed: u64,
}

impl Default for SkillConfig {
    fn default() -> Self {
        SkillConfig {
            rpm: 300.0,
            standoff_m: 0.05,
            engage_speed_m_s: 0.02,
            retreat_speed_m_s: 0.05,
            fine_speed_m_s: 0.001,
            lift_speed_m_s: 0.05,
            holder_clearance_m: 0.1,
            grip_dwell_s: 1.0,
            vacuum_dwell_s: 0.5,
            atc_dwell_s: 1.0,
            vel_scale: 1.0,
            linear_step_m: 0.005,
            seed: 0,
        }
    }
}

/// Linear speed of a screw backing out: one pitch per revolution.
pub fn unscrew_speed(pitch_m_per_rev: f64, rpm: f64) -> f64 {
    pitch_m_per_rev * rpm / 60.0
}

fn ik_options(tcp: Pose6D) -> IkOptions {
    IkOptions::default().with_tcp(tcp).with_tolerance(1e-7, 1e-7)
}

/// Accumulates phases while tracking the robot and a private copy of the
/// scene.
struct Builder<'a> {
    model: &'a RobotModel,
    cfg: SkillConfig,
    scene: Scene,
    q: JointState,
    load: RobotLoad,
    /// TCP pose the last move ended on, exactly as commanded.
    tcp_cmd: Pose6D,
    exclude: Vec<String>,
    plans: u64,
    phases: Vec<Phase>,
    // Segments of the phase under construction.
    seg_traj: Option<TimedTrajectory>,
    seg_tcp: Vec<Pose6D>,
    seg_ignored: Vec<String>,
}

impl<'a> Builder<'a> {
    fn new(model: &'a RobotModel, cfg: &SkillConfig, scene: &Scene, q: &JointState) -> Self {
        let tool = scene.mounted_tool().and_then(|t| scene.tool(t).ok());
        let load = RobotLoad::tool(tool);
        let tcp_cmd = tcp_pose(model, q, &load.tcp_offset());
        Builder {
            model,
            cfg: *cfg,
            scene: scene.clone(),
            q: *q,
            load,
            tcp_cmd,
            exclude: Vec::new(),
            plans: 0,
            phases: Vec::new(),
            seg_traj: None,
            seg_tcp: Vec::new(),
            seg_ignored: Vec::new(),
        }
    }

    fn world(&self) -> CollisionWorld {
        CollisionWorld::with_exclusions(&self.scene, self.load.clone(), &self.exclude)
    }

    fn fail(phase: &str) -> impl Fn(MotionError) -> SkillError + '_ {
        move |source| SkillError::Motion {
            phase: phase.to_string(),
            source,
        }
    }

    /// Start configuration for IK: the home arm posture with the track
    /// shifted so the home TCP lines up with the target.
    fn posture_seed(&self, target: &Pose6D) -> JointState {
        let home = self.model.home;
        let home_tcp = tcp_pose(self.model, &home, &self.load.tcp_offset());
        let mut seed = home;
        let lim = self.model.track_limits_m;
        seed.track = (home.track + (target.position - home_tcp.position).dot(&self.model.track_axis))
            .clamp(lim[0], lim[1]);
        seed
    }

    fn solve(&self, target: &Pose6D, phase: &str) -> Result<JointState, SkillError> {
        let opts = ik_options(self.load.tcp_offset());
        let world = self.world();
        let mut last = None;
        for seed in [self.q, self.posture_seed(target)] {
            match inverse_kinematics(self.model, target, &seed, &opts) {
                Ok(sol) if !world.collides(self.model, &sol.q) => return Ok(sol.q),
                Ok(sol) => {
                    last = Some(MotionError::GoalInCollision(
                        world.check_state(self.model, &sol.q).pairs,
                    ))
                }
                Err(e) => {
                    last = Some(MotionError::Unreachable {
                        at: 1.0,
                        reason: e.to_string(),
                    })
                }
            }
        }
        Err(Self::fail(phase)(last.expect("at least one attempt")))
    }

    fn append(&mut self, traj: TimedTrajectory, tcp: Vec<Pose6D>) {
        for id in &self.exclude {
            if !self.seg_ignored.contains(id) {
                self.seg_ignored.push(id.clone());
            }
        }
        match &mut self.seg_traj {
            None => {
                self.seg_traj = Some(traj);
                self.seg_tcp = tcp;
            }
            Some(cur) => {
                let t0 = cur.duration();
                cur.waypoints.extend(traj.waypoints.iter().skip(1).copied());
                cur.timestamps
                    .extend(traj.timestamps.iter().skip(1).map(|t| t + t0));
                self.seg_tcp.extend(tcp.into_iter().skip(1));
            }
        }
        self.q = *self.seg_traj.as_ref().expect("just set").end();
    }

    /// Joint-space move to a TCP target.
    fn transit(&mut self, target: &Pose6D, phase: &str) -> Result<(), SkillError> {
        let goal = self.solve(target, phase)?;
        let seed = self.cfg.seed.wrapping_mul(1_000_003).wrapping_add(self.plans);
        self.plans += 1;
        let traj = plan_joint(&self.world(), self.model, &self.q, &goal, seed)
            .map_err(Self::fail(phase))?;
        let timed = time_parameterize(self.model, &traj, self.cfg.vel_scale);
        let tcp_off = self.load.tcp_offset();
        let mut tcp: Vec<Pose6D> = timed
            .waypoints
            .iter()
            .map(|q| tcp_pose(self.model, q, &tcp_off))
            .collect();
        *tcp.last_mut().expect("non-empty") = *target;
        self.append(timed, tcp);
        self.tcp_cmd = *target;
        Ok(())
    }

    /// Straight TCP move at constant speed from the last commanded pose.
    fn linear(&mut self, target: &Pose6D, speed: f64, phase: &str) -> Result<(), SkillError> {
        let opts = ik_options(self.load.tcp_offset());
        let from = self.tcp_cmd;
        let mut path = plan_linear_cartesian(
            &self.world(),
            self.model,
            &from,
            target,
            self.cfg.linear_step_m,
            &self.q,
            &opts,
        )
        .map_err(Self::fail(phase))?;
        // The first sample re-solves the pose the robot already holds.
        path.trajectory.waypoints[0] = self.q;
        let timed = time_parameterize_linear(self.model, &path, speed, self.cfg.vel_scale);
        self.append(timed, path.tcp);
        self.tcp_cmd = *target;
        Ok(())
    }

    fn finish_phase(
        &mut self,
        name: &str,
        kind: PhaseKind,
        tool_command: ToolCommand,
        dwell_s: f64,
        pack_relative: bool,
        effects: Vec<Effect>,
    ) -> Result<(), SkillError> {
        let trajectory = self
            .seg_traj
            .take()
            .unwrap_or_else(|| TimedTrajectory::hold(self.q));
        let mut tcp_path = std::mem::take(&mut self.seg_tcp);
        if tcp_path.is_empty() {
            tcp_path.push(self.tcp_cmd);
        }
        let payload = self.load.payload.clone();
        let mut ignored = std::mem::take(&mut self.seg_ignored);
        ignored.sort();
        for e in &effects {
            self.apply(e)?;
        }
        self.phases.push(Phase {
            name: name.to_string(),
            kind,
            trajectory,
            tool_command,
            dwell_s,
            tcp_path,
            pack_relative,
            effects,
            payload,
            ignored,
        });
        Ok(())
    }

    fn apply(&mut self, e: &Effect) -> Result<(), SkillError> {
        match e {
            Effect::ComponentState { id, state } => {
                self.scene = self.scene.set_component_state(id, *state)?;
                if *state == ComponentState::Removed
                    && self.load.payload.as_ref().map(|p| &p.component_id) == Some(id)
                {
                    self.load.payload = None;
                }
            }
            Effect::MountTool { tool } => {
                self.scene = self.scene.with_mounted_tool(tool.as_deref())?;
                self.load.tool = tool.as_deref().map(|t| self.scene.tool(t)).transpose()?.cloned();
                self.tcp_cmd = tcp_pose(self.model, &self.q, &self.load.tcp_offset());
            }
        }
        Ok(())
    }

    /// Attach a component (at its current world pose, shifted by
    /// `displacement`) to the flange as a payload.
    fn pick(&mut self, id: &str, displacement: Vector3<f64>) -> Result<(), SceneError> {
        let c = self.scene.component(id)?;
        let world = self.scene.world_transform(id)?;
        let center = world
            .translated(&(world.orientation * c.shape_offset))
            .translated(&displacement);
        let flange = crate::kinematics::forward_kinematics(self.model, &self.q);
        self.load.payload = Some(Payload {
            component_id: id.to_string(),
            shape: c.shape,
            flange_to_shape: flange.inverse().compose(&center),
        });
        Ok(())
    }

    fn into_plan(self, component_id: &str, strategy: Option<StrategyKind>, tool_id: &str) -> SkillPlan {
        let expected_duration_s = self.phases.iter().map(Phase::duration_s).sum();
        SkillPlan {
            component_id: component_id.to_string(),
            strategy,
            tool_id: tool_id.to_string(),
            phases: self.phases,
            expected_duration_s,
        }
    }
}

fn state_effect(id: &str, state: ComponentState) -> Effect {
    Effect::ComponentState {
        id: id.to_string(),
        state,
    }
}

/// Half the extent of a shape along a unit direction in its own frame.
fn half_extent_along(shape: &Shape, dir: &Vector3<f64>) -> f64 {
    match shape {
        Shape::Box { extents } => {
            0.5 * (extents[0] * dir.x.abs() + extents[1] * dir.y.abs() + extents[2] * dir.z.abs())
        }
        Shape::Cylinder { radius, length } => {
            let axial = dir.z.abs();
            0.5 * length * axial + radius * (1.0 - axial * axial).max(0.0).sqrt()
        }
    }
}

fn check_ready(scene: &Scene, id: &str) -> Result<(), SkillError> {
    let c = scene.component(id)?;
    if c.state != ComponentState::Attached {
        return Err(SkillError::NotAttached(id.to_string()));
    }
    let blockers = scene.blocking_predecessors(id)?;
    if !blockers.is_empty() {
        return Err(SkillError::PrecedenceViolation {
            component: id.to_string(),
            blockers,
        });
    }
    Ok(())
}

fn tool_change_into(
    b: &mut Builder,
    from: Option<&ToolSpec>,
    to: &ToolSpec,
) -> Result<(), SkillError> {
    let up = Vector3::z() * b.cfg.holder_clearance_m;
    let slow = b.cfg.engage_speed_m_s;
    if let Some(f) = from {
        b.transit(&f.holder_pose.translated(&up).compose(&f.tcp_offset), "tool_to_holder")?;
        b.linear(&f.holder_pose.compose(&f.tcp_offset), slow, "tool_to_holder")?;
        b.finish_phase("tool_to_holder", PhaseKind::ToolChange, ToolCommand::None, 0.0, false, vec![])?;
        // The flange sits on the tool it just let go of until it lifts off.
        let left = crate::scene::resting_tool_id(&f.id);
        b.exclude.push(left.clone());
        b.finish_phase(
            "tool_release",
            PhaseKind::ToolChange,
            ToolCommand::AtcRelease,
            b.cfg.atc_dwell_s,
            false,
            vec![Effect::MountTool { tool: None }],
        )?;
        b.linear(&f.holder_pose.translated(&up), slow, "tool_fetch")?;
        b.exclude.retain(|x| x != &left);
    }
    let resting = crate::scene::resting_tool_id(&to.id);
    b.exclude.push(resting.clone());
    b.transit(&to.holder_pose.translated(&up), "tool_fetch")?;
    b.linear(&to.holder_pose, slow, "tool_fetch")?;
    b.finish_phase("tool_fetch", PhaseKind::ToolChange, ToolCommand::None, 0.0, false, vec![])?;
    b.finish_phase(
        "tool_latch",
        PhaseKind::ToolChange,
        ToolCommand::AtcLatch,
        b.cfg.atc_dwell_s,
        false,
        vec![Effect::MountTool {
            tool: Some(to.id.clone()),
        }],
    )?;
    b.exclude.retain(|x| x != &resting);
    b.linear(&to.holder_pose.translated(&up).compose(&to.tcp_offset), slow, "tool_clear")?;
    b.finish_phase("tool_clear", PhaseKind::ToolChange, ToolCommand::None, 0.0, false, vec![])
}

/// Swap `from_tool` (None: bare flange) for `to_tool`. Empty when they are
/// the same.
pub fn tool_change_plan(
    scene: &Scene,
    model: &RobotModel,
    from_tool: Option<&str>,
    to_tool: &str,
    q_current: &JointState,
    cfg: &SkillConfig,
) -> Result<SkillPlan, SkillError> {
    let to = scene.tool(to_tool)?.clone();
    let scene = scene.with_mounted_tool(from_tool)?;
    let mut b = Builder::new(model, cfg, &scene, q_current);
    if from_tool != Some(to_tool) {
        let from = from_tool.map(|t| scene.tool(t)).transpose()?.cloned();
        tool_change_into(&mut b, from.as_ref(), &to)?;
    }
    Ok(b.into_plan("", None, to_tool))
}

/// Compile the skill for `component_id` starting from `q_current`. A tool
/// change is prepended when the mounted tool is not the one the tag asks for.
pub fn compile_skill(
    scene: &Scene,
    model: &RobotModel,
    component_id: &str,
    q_current: &JointState,
    cfg: &SkillConfig,
) -> Result<SkillPlan, SkillError> {
    check_ready(scene, component_id)?;
    let c = scene.component(component_id)?;
    let tool = scene.tool(&c.tag.tool_id)?.clone();
    let kind = c.tag.strategy.kind();
    let mut b = Builder::new(model, cfg, scene, q_current);
    if scene.mounted_tool() != Some(tool.id.as_str()) {
        let from = scene.mounted_tool().map(|t| scene.tool(t)).transpose()?.cloned();
        tool_change_into(&mut b, from.as_ref(), &tool)?;
    }
    b.exclude.push(component_id.to_string());
    match kind {
        StrategyKind::Unscrew => unscrew_into(&mut b, component_id)?,
        StrategyKind::ConnectorDetach => connector_into(&mut b, component_id)?,
        StrategyKind::VacuumLift | StrategyKind::Grip => lift_into(&mut b, component_id)?,
    }
    Ok(b.into_plan(component_id, Some(kind), &tool.id))
}

fn require(scene: &Scene, id: &str, expected: StrategyKind) -> Result<(), SkillError> {
    check_ready(scene, id)?;
    let c = scene.component(id)?;
    if c.tag.strategy.kind() != expected {
        return Err(SkillError::WrongStrategy {
            component: id.to_string(),
            expected,
        });
    }
    if scene.mounted_tool() != Some(c.tag.tool_id.as_str()) {
        return Err(SkillError::Scene(SceneError::UnknownId(format!(
            "{} is not mounted",
            c.tag.tool_id
        ))));
    }
    Ok(())
}

fn standalone(
    scene: &Scene,
    model: &RobotModel,
    id: &str,
    q: &JointState,
    cfg: &SkillConfig,
    kind: StrategyKind,
    body: fn(&mut Builder, &str) -> Result<(), SkillError>,
) -> Result<SkillPlan, SkillError> {
    require(scene, id, kind)?;
    let tool = scene.component(id)?.tag.tool_id.clone();
    let mut b = Builder::new(model, cfg, scene, q);
    b.exclude.push(id.to_string());
    body(&mut b, id)?;
    Ok(b.into_plan(id, Some(kind), &tool))
}

/// Approach, engage, back the screw out at the synchronized speed, clear
/// and drop it in the sort bin. Requires the screwdriver to be mounted.
pub fn unscrew_plan(
    scene: &Scene,
    model: &RobotModel,
    screw: &str,
    q: &JointState,
    cfg: &SkillConfig,
) -> Result<SkillPlan, SkillError> {
    standalone(scene, model, screw, q, cfg, StrategyKind::Unscrew, unscrew_into)
}

fn unscrew_into(b: &mut Builder, id: &str) -> Result<(), SkillError> {
    let c = b.scene.component(id)?.clone();
    let Strategy::Unscrew {
        pitch_m_per_rev,
        engage_depth_m,
    } = c.tag.strategy
    else {
        unreachable!("dispatched on strategy kind")
    };
    let cfg = b.cfg;
    let dir = b.scene.world_approach_dir(id)?;
    let work = b.scene.work_pose(id)?;
    let approach = b.scene.approach_pose(id, cfg.standoff_m)?;

    b.transit(&approach, "approach")?;
    b.finish_phase("approach", PhaseKind::Skill, ToolCommand::None, 0.0, true, vec![])?;

    b.linear(&work, cfg.engage_speed_m_s, "engage")?;
    b.finish_phase("engage", PhaseKind::Skill, ToolCommand::None, 0.0, true, vec![])?;

    let backed_out = work.translated(&(-dir * engage_depth_m));
    let v = unscrew_speed(pitch_m_per_rev, cfg.rpm);
    b.linear(&backed_out, v, "unscrew")?;
    b.finish_phase(
        "unscrew",
        PhaseKind::Skill,
        ToolCommand::ScrewCcw { rpm: cfg.rpm },
        0.0,
        true,
        vec![state_effect(id, ComponentState::Detached)],
    )?;
    b.pick(id, -dir * engage_depth_m)?;

    let clear = backed_out.translated(&(-dir * cfg.standoff_m));
    b.linear(&clear, cfg.retreat_speed_m_s, "retreat")?;
    b.finish_phase("retreat", PhaseKind::Skill, ToolCommand::ScrewStop, 0.0, true, vec![])?;

    let bin = sort_pose(b, &c.tag.sort_frame, id)?;
    b.transit(&bin, "drop")?;
    b.finish_phase(
        "drop",
        PhaseKind::Skill,
        ToolCommand::None,
        0.0,
        false,
        vec![state_effect(id, ComponentState::Removed)],
    )
}

fn sort_pose(b: &Builder, frame: &Option<String>, id: &str) -> Result<Pose6D, SkillError> {
    let f = frame
        .as_deref()
        .ok_or_else(|| SceneError::DanglingRef(format!("{id}: no sort frame")))?;
    Ok(b.scene.world_transform(f)?)
}

/// The four connector phases: vertical approach on the side away from
/// the harness, descent over the latch, grip to unlatch, pull along the
/// harness exit direction.
pub fn connector_detach_plan(
    scene: &Scene,
    model: &RobotModel,
    connector: &str,
    q: &JointState,
    cfg: &SkillConfig,
) -> Result<SkillPlan, SkillError> {
    standalone(
        scene,
        model,
        connector,
        q,
        cfg,
        StrategyKind::ConnectorDetach,
        connector_into,
    )
}

fn connector_into(b: &mut Builder, id: &str) -> Result<(), SkillError> {
    let c = b.scene.component(id)?.clone();
    let Strategy::ConnectorDetach {
        wiring_exit_dir,
        latch_height_m,
        pull_length_m,
    } = c.tag.strategy
    else {
        unreachable!("dispatched on strategy kind")
    };
    let cfg = b.cfg;
    let world = b.scene.world_transform(id)?;
    let exit = (world.orientation * wiring_exit_dir).normalize();
    let down = b.scene.world_approach_dir(id)?;
    let center = world.transform_point(&c.shape_offset);
    let latch = center - exit * half_extent_along(&c.shape, &wiring_exit_dir)
        - down * half_extent_along(&c.shape, &c.tag.approach_dir);
    let rot = frame_from_z_and_x(&down, &exit);
    let at = |p: Vector3<f64>| Pose6D::new(p, rot);
    let over = at(latch - down * latch_height_m);

    b.transit(&at(latch - down * (latch_height_m + cfg.standoff_m)), "vertical_approach")?;
    b.linear(&over, cfg.fine_speed_m_s * 5.0, "vertical_approach")?;
    b.finish_phase("vertical_approach", PhaseKind::Skill, ToolCommand::GripOpen, 0.0, true, vec![])?;

    b.linear(&at(latch), cfg.fine_speed_m_s, "over_latch")?;
    b.finish_phase("over_latch", PhaseKind::Skill, ToolCommand::None, 0.0, true, vec![])?;

    b.finish_phase(
        "unlatch",
        PhaseKind::Skill,
        ToolCommand::GripClose,
        cfg.grip_dwell_s,
        true,
        vec![],
    )?;
    b.pick(id, Vector3::zeros())?;

    b.linear(&at(latch + exit * pull_length_m), cfg.fine_speed_m_s, "pull")?;
    // The plug stays on its harness; once out of the socket it no longer
    // takes part in the disassembly.
    b.finish_phase(
        "pull",
        PhaseKind::Skill,
        ToolCommand::None,
        0.0,
        true,
        vec![
            state_effect(id, ComponentState::Detached),
            state_effect(id, ComponentState::Removed),
        ],
    )
}

/// Approach, suck on, lift straight up, carry to the sort frame, release.
pub fn vacuum_lift_plan(
    scene: &Scene,
    model: &RobotModel,
    panel: &str,
    q: &JointState,
    cfg: &SkillConfig,
) -> Result<SkillPlan, SkillError> {
    standalone(scene, model, panel, q, cfg, StrategyKind::VacuumLift, lift_into)
}

fn lift_into(b: &mut Builder, id: &str) -> Result<(), SkillError> {
    let c = b.scene.component(id)?.clone();
    let (lift, on, off) = match c.tag.strategy {
        Strategy::VacuumLift { lift_height_m } => {
            (lift_height_m, ToolCommand::VacuumOn, ToolCommand::VacuumOff)
        }
        Strategy::Grip { lift_height_m } => (lift_height_m, ToolCommand::GripClose, ToolCommand::GripOpen),
        _ => unreachable!("dispatched on strategy kind"),
    };
    let dwell = if on == ToolCommand::VacuumOn {
        b.cfg.vacuum_dwell_s
    } else {
        b.cfg.grip_dwell_s
    };
    let cfg = b.cfg;
    let work = b.scene.work_pose(id)?;
    let approach = b.scene.approach_pose(id, cfg.standoff_m)?;

    b.transit(&approach, "approach")?;
    b.linear(&work, cfg.lift_speed_m_s, "approach")?;
    b.finish_phase("approach", PhaseKind::Skill, ToolCommand::None, 0.0, true, vec![])?;

    b.finish_phase(
        "attach",
        PhaseKind::Skill,
        on,
        dwell,
        true,
        vec![state_effect(id, ComponentState::Detached)],
    )?;
    b.pick(id, Vector3::zeros())?;

    // Straight back out along the approach axis, so the lift moves with
    // the pack.
    let down = b.scene.world_approach_dir(id)?;
    b.linear(&work.translated(&(-down * lift)), cfg.lift_speed_m_s, "lift")?;
    b.finish_phase("lift", PhaseKind::Skill, ToolCommand::None, 0.0, true, vec![])?;

    let drop = sort_pose(b, &c.tag.sort_frame, id)?;
    b.transit(&drop, "transport")?;
    b.finish_phase("transport", PhaseKind::Skill, ToolCommand::None, 0.0, false, vec![])?;

    b.finish_phase(
        "release",
        PhaseKind::Skill,
        off,
        dwell,
        false,
        vec![state_effect(id, ComponentState::Removed)],
    )
}
