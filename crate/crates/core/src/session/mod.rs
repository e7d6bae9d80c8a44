//! Teleoperation session: detach commands executed one at a time over the
//! link against the simulated controller, the operation record, sequence
//! files and rebased replay.

mod events;
mod executor;

pub use events::{Envelope, Event, EventBus, Snapshot, Subscription, DEFAULT_QUEUE_CAPACITY};

use crate::geometry::{JointState, Pose6D};
use crate::kinematics::{tcp_pose, RobotModel};
use crate::link::{Impairment, DEFAULT_CYCLE_MS};
use crate::registration::{rebase_scene, PoseUpdate, RegistrationError};
use crate::scene::{Scene, SceneError, StrategyKind};
use crate::skills::{compile_skill, Effect, PhaseKind, SkillConfig, SkillError, SkillPlan};
use executor::{ExecError, Executor};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::{Arc, Mutex, TryLockError};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub skills: SkillConfig,
    pub cycle_ms: u64,
    pub impairment: Impairment,
    pub link_seed: u64,
    /// Simulated seconds per wall-clock second; None runs as fast as possible.
    pub pace: Option<f64>,
    pub settle_timeout_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            skills: SkillConfig::default(),
            cycle_ms: DEFAULT_CYCLE_MS,
            impairment: Impairment::perfect(),
            link_seed: 0,
            pace: None,
            settle_timeout_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Aborted { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub name: String,
    pub kind: PhaseKind,
    /// Simulated seconds, including settling and dwell.
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationRecord {
    pub index: usize,
    pub component_id: String,
    pub phase_label: String,
    pub strategy: Option<StrategyKind>,
    /// None when planning failed.
    pub skill_plan: Option<SkillPlan>,
    /// Commanded TCP pose of every waypoint, all phases in order.
    pub tcp_waypoints: Vec<Pose6D>,
    /// TCP measured on the plant when the last pack-relative phase ended.
    pub terminal_tcp: Option<Pose6D>,
    pub started_us: u64,
    pub duration_s: f64,
    pub phases: Vec<PhaseTiming>,
    pub outcome: Outcome,
}

impl OperationRecord {
    pub fn is_completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDocument {
    pub format_version: u32,
    pub evb_type_id: String,
    pub scene_hash: String,
    /// Simulated controller clock when the document was made.
    pub created_us: u64,
    pub records: Vec<OperationRecord>,
}

impl SequenceDocument {
    /// Sorted keys, two-space indent, shortest round-trip floats.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("document serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        serde_json::from_str(text).map_err(|e| SessionError::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| SessionError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub record_index: usize,
    pub component_id: String,
    pub recorded_tcp: Pose6D,
    /// Displacement composed with the recorded pose.
    pub expected_tcp: Pose6D,
    pub replayed_tcp: Pose6D,
    pub position_error_m: f64,
    pub rotation_error_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub displacement: Pose6D,
    pub entries: Vec<ReplayEntry>,
    pub max_position_error_m: f64,
    pub max_rotation_error_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("a command is already executing")]
    Busy,
    #[error("{component:?} is blocked by {blockers:?}")]
    PrecedenceViolation {
        component: String,
        blockers: Vec<String>,
    },
    #[error("{0:?} is not attached")]
    NotAttached(String),
    #[error("planning for {component:?} timed out: {reason}")]
    PlanningTimeout { component: String, reason: String },
    #[error("planning for {component:?} failed: {reason}")]
    PlanningFailed { component: String, reason: String },
    #[error("link faulted at cycle {cycle} while executing {component:?}")]
    LinkFaulted { component: String, cycle: u64 },
    #[error("execution of {component:?} failed: {reason}")]
    ExecutionFailed { component: String, reason: String },
    #[error("no completed operations to save")]
    EmptySession,
    #[error("i/o: {0}")]
    Io(String),
    #[error("bad sequence document: {0}")]
    Format(String),
    #[error("sequence was recorded on scene {recorded}, loaded scene is {loaded}")]
    SceneMismatch { recorded: String, loaded: String },
    #[error("replay aborted at record {record_index}: {reason}")]
    ReplayAborted { record_index: usize, reason: String },
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Apply plan effects to a scene.
pub fn apply_effects(scene: &Scene, effects: &[Effect]) -> Result<Scene, SceneError> {
    let mut s = scene.clone();
    for e in effects {
        s = match e {
            Effect::ComponentState { id, state } => s.set_component_state(id, *state)?,
            Effect::MountTool { tool } => s.with_mounted_tool(tool.as_deref())?,
        };
    }
    Ok(s)
}

/// Scene after every Completed record, starting from `initial`.
pub fn fold_records(initial: &Scene, records: &[OperationRecord]) -> Result<Scene, SceneError> {
    let mut s = initial.clone();
    for r in records.iter().filter(|r| r.is_completed()) {
        if let Some(plan) = &r.skill_plan {
            for p in &plan.phases {
                s = apply_effects(&s, &p.effects)?;
            }
        }
    }
    Ok(s)
}

pub struct Session {
    model: RobotModel,
    initial: Scene,
    scene: Scene,
    cfg: SessionConfig,
    records: Vec<OperationRecord>,
    exec: Executor,
    bus: EventBus,
}

impl Session {
    pub fn new(model: RobotModel, scene: Scene, cfg: SessionConfig) -> Self {
        let exec = Self::fresh_executor(&model, &cfg);
        let bus = EventBus::new(Snapshot {
            scene: scene.document().clone(),
            q: exec.sim.q_actual,
            tool_rpm: 0.0,
            din: exec.sim.din(),
            link_mode: exec.link.mode,
            busy: false,
            records: 0,
        });
        Session {
            model,
            initial: scene.clone(),
            scene,
            cfg,
            records: Vec::new(),
            exec,
            bus,
        }
    }

    fn fresh_executor(model: &RobotModel, cfg: &SessionConfig) -> Executor {
        Executor::new(
            model.home,
            cfg.cycle_ms,
            cfg.impairment,
            cfg.link_seed,
            cfg.settle_timeout_s,
            cfg.pace,
        )
    }

    pub fn bus(&self) -> &EventBus {
        &self.bus
    }

    pub fn subscribe(&self) -> Subscription {
        self.bus.subscribe()
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn initial_scene(&self) -> &Scene {
        &self.initial
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn records(&self) -> &[OperationRecord] {
        &self.records
    }

    pub fn robot_state(&self) -> JointState {
        self.exec.sim.q_actual
    }

    pub fn clock_us(&self) -> u64 {
        self.exec.clock_us()
    }

    pub fn link_state(&self) -> crate::link::LinkState {
        self.exec.link
    }

    pub fn heartbeat(&self) {
        self.bus.publish(self.exec.clock_us(), Event::Heartbeat);
    }

    /// Back to the loaded scene, the home pose and an empty record.
    pub fn reset(&mut self) {
        self.scene = self.initial.clone();
        self.records.clear();
        self.exec = Self::fresh_executor(&self.model, &self.cfg);
        self.bus.set_scene(&self.scene);
        let q = self.exec.sim.q_actual;
        let din = self.exec.sim.din();
        self.bus.update_snapshot(|s| {
            s.q = q;
            s.tool_rpm = 0.0;
            s.din = din;
            s.records = 0;
            s.link_mode = crate::link::LinkMode::Running;
        });
        self.bus.publish(0, Event::SessionReset);
    }

    /// Plan and execute the detach skill of `component_id`. Planning and
    /// execution failures leave the scene as it was, append an Aborted
    /// record and return the error.
    pub fn handle_detach_command(&mut self, component_id: &str) -> Result<OperationRecord, SessionError> {
        self.bus.update_snapshot(|s| s.busy = true);
        let r = self.detach(component_id);
        let n = self.records.len();
        self.bus.update_snapshot(|s| {
            s.busy = false;
            s.records = n;
        });
        r
    }

    fn detach(&mut self, component_id: &str) -> Result<OperationRecord, SessionError> {
        let component = self.scene.component(component_id)?.clone();
        self.exec.acknowledge_fault();
        let q = self.exec.sim.q_actual;
        let index = self.records.len();
        let started_us = self.exec.clock_us();
        let mut record = OperationRecord {
            index,
            component_id: component_id.to_string(),
            phase_label: component.phase_label(),
            strategy: Some(component.tag.strategy.kind()),
            skill_plan: None,
            tcp_waypoints: Vec::new(),
            terminal_tcp: None,
            started_us,
            duration_s: 0.0,
            phases: Vec::new(),
            outcome: Outcome::Completed,
        };

        let plan = match compile_skill(&self.scene, &self.model, component_id, &q, &self.cfg.skills) {
            Ok(p) => p,
            Err(e) => {
                let err = match e {
                    SkillError::PrecedenceViolation { component, blockers } => {
                        return Err(SessionError::PrecedenceViolation { component, blockers })
                    }
                    SkillError::NotAttached(id) => return Err(SessionError::NotAttached(id)),
                    SkillError::Scene(s) => return Err(SessionError::Scene(s)),
                    e if e.is_timeout() => SessionError::PlanningTimeout {
                        component: component_id.to_string(),
                        reason: e.to_string(),
                    },
                    e => SessionError::PlanningFailed {
                        component: component_id.to_string(),
                        reason: e.to_string(),
                    },
                };
                record.outcome = Outcome::Aborted { reason: err.to_string() };
                self.bus.publish(started_us, Event::ExecutionStarted { index, component_id: component_id.into() });
                self.finish(record, Some(err.to_string()));
                return Err(err);
            }
        };

        self.bus.publish(started_us, Event::ExecutionStarted { index, component_id: component_id.into() });
        let before = self.scene.clone();
        let mut scene = self.scene.clone();
        let mut failure = None;
        for (pi, phase) in plan.phases.iter().enumerate() {
            self.bus.publish(
                self.exec.clock_us(),
                Event::PhaseStarted { index, phase: pi, name: phase.name.clone(), kind: phase.kind },
            );
            self.exec.set_tool(&phase.tool_command);
            match self.exec.run_phase(&self.model, phase, &self.bus) {
                Ok(t) => record.phases.push(PhaseTiming { name: phase.name.clone(), kind: phase.kind, duration_s: t }),
                Err(e) => {
                    failure = Some(match e {
                        ExecError::Faulted { cycle } => SessionError::LinkFaulted {
                            component: component_id.to_string(),
                            cycle,
                        },
                        ExecError::NotSettled { phase } => SessionError::ExecutionFailed {
                            component: component_id.to_string(),
                            reason: format!("plant did not settle at the end of {phase:?}"),
                        },
                    });
                    break;
                }
            }
            if phase.pack_relative {
                let tool = scene.tool(&plan.tool_id)?;
                record.terminal_tcp = Some(tcp_pose(&self.model, &self.exec.sim.q_actual, &tool.tcp_offset));
            }
            scene = apply_effects(&scene, &phase.effects)?;
            for e in &phase.effects {
                let ev = match e {
                    Effect::ComponentState { id, state } => Event::ComponentState { id: id.clone(), state: *state },
                    Effect::MountTool { tool } => Event::ToolMounted { tool: tool.clone() },
                };
                self.bus.publish(self.exec.clock_us(), ev);
            }
            if !phase.effects.is_empty() {
                self.bus.set_scene(&scene);
            }
        }
        record.duration_s = (self.exec.clock_us() - started_us) as f64 / 1e6;
        record.tcp_waypoints = plan.phases.iter().flat_map(|p| p.tcp_path.iter().copied()).collect();
        record.skill_plan = Some(plan);

        if let Some(err) = failure {
            self.scene = before;
            self.bus.set_scene(&self.scene);
            self.bus.publish(self.exec.clock_us(), Event::Snapshot(self.bus.snapshot()));
            record.outcome = Outcome::Aborted { reason: err.to_string() };
            self.finish(record, Some(err.to_string()));
            return Err(err);
        }
        self.scene = scene;
        Ok(self.finish(record, None))
    }

    fn finish(&mut self, record: OperationRecord, reason: Option<String>) -> OperationRecord {
        self.bus.publish(
            self.exec.clock_us(),
            Event::ExecutionFinished {
                index: record.index,
                component_id: record.component_id.clone(),
                completed: reason.is_none(),
                reason,
            },
        );
        self.records.push(record.clone());
        record
    }

    pub fn sequence_document(&self) -> Result<SequenceDocument, SessionError> {
        if !self.records.iter().any(|r| r.is_completed()) {
            return Err(SessionError::EmptySession);
        }
        Ok(SequenceDocument {
            format_version: FORMAT_VERSION,
            evb_type_id: self.initial.evb_type_id().to_string(),
            scene_hash: self.initial.scene_hash(),
            created_us: self.exec.clock_us(),
            records: self.records.clone(),
        })
    }

    pub fn save_sequence(&self, path: impl AsRef<Path>) -> Result<SequenceDocument, SessionError> {
        let doc = self.sequence_document()?;
        std::fs::write(path.as_ref(), doc.to_canonical_json())
            .map_err(|e| SessionError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Ok(doc)
    }

    /// Reset to the loaded scene, displace the pack by `displacement`
    /// (a world-frame rigid motion of the recorded pack pose) and re-plan
    /// every Completed record in order.
    pub fn replay_sequence(
        &mut self,
        doc: &SequenceDocument,
        displacement: &PoseUpdate,
    ) -> Result<ReplayReport, SessionError> {
        if doc.format_version != FORMAT_VERSION {
            return Err(SessionError::Format(format!("unsupported format_version {}", doc.format_version)));
        }
        let loaded = self.initial.scene_hash();
        if doc.scene_hash != loaded {
            return Err(SessionError::SceneMismatch { recorded: doc.scene_hash.clone(), loaded });
        }
        self.reset();
        let t = displacement.transform;
        let base = PoseUpdate {
            transform: t.compose(&self.initial.evb_base_pose()),
            ..*displacement
        };
        self.scene = rebase_scene(&self.initial, &base)?;
        self.bus.set_scene(&self.scene);
        self.bus.publish(
            self.exec.clock_us(),
            Event::PoseUpdate { transform: base.transform, residual_rmse_m: base.residual_rmse_m },
        );

        let mut entries = Vec::new();
        for rec in doc.records.iter().filter(|r| r.is_completed()) {
            let abort = |reason: String| SessionError::ReplayAborted { record_index: rec.index, reason };
            let new = self.handle_detach_command(&rec.component_id).map_err(|e| abort(e.to_string()))?;
            match (rec.terminal_tcp, new.terminal_tcp) {
                (Some(recorded), Some(replayed)) => {
                    let expected = t.compose(&recorded);
                    let (dp, dr) = replayed.distance(&expected);
                    entries.push(ReplayEntry {
                        record_index: rec.index,
                        component_id: rec.component_id.clone(),
                        recorded_tcp: recorded,
                        expected_tcp: expected,
                        replayed_tcp: replayed,
                        position_error_m: dp,
                        rotation_error_rad: dr,
                    });
                }
                (None, None) => {}
                _ => return Err(abort("recorded and replayed plans differ in shape".into())),
            }
        }
        Ok(ReplayReport {
            displacement: t,
            max_position_error_m: entries.iter().map(|e| e.position_error_m).fold(0.0, f64::max),
            max_rotation_error_rad: entries.iter().map(|e| e.rotation_error_rad).fold(0.0, f64::max),
            entries,
        })
    }
}

/// Shared access for concurrent callers. Commands that arrive while one
/// is executing fail with Busy instead of queueing.
#[derive(Clone)]
pub struct SessionHandle {
    session: Arc<Mutex<Session>>,
    bus: EventBus,
}

impl SessionHandle {
    pub fn new(session: Session) -> Self {
        let bus = session.bus().clone();
        SessionHandle { session: Arc::new(Mutex::new(session)), bus }
    }

    fn with<T>(&self, f: impl FnOnce(&mut Session) -> Result<T, SessionError>) -> Result<T, SessionError> {
        let mut guard = match self.session.try_lock() {
            Ok(g) => g,
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
            Err(TryLockError::WouldBlock) => return Err(SessionError::Busy),
        };
        f(&mut guard)
    }

    pub fn detach(&self, component_id: &str) -> Result<OperationRecord, SessionError> {
        self.with(|s| s.handle_detach_command(component_id))
    }

    pub fn sequence_document(&self) -> Result<SequenceDocument, SessionError> {
        self.with(|s| s.sequence_document())
    }

    pub fn save_sequence(&self, path: impl AsRef<Path>) -> Result<SequenceDocument, SessionError> {
        self.with(|s| s.save_sequence(path))
    }

    pub fn replay_sequence(&self, doc: &SequenceDocument, displacement: &PoseUpdate) -> Result<ReplayReport, SessionError> {
        self.with(|s| s.replay_sequence(doc, displacement))
    }

    pub fn reset(&self) -> Result<(), SessionError> {
        self.with(|s| {
            s.reset();
            Ok(())
        })
    }

    /// Current state without waiting for a running command.
    pub fn snapshot(&self) -> Snapshot {
        self.bus.snapshot()
    }

    pub fn subscribe(&self) -> Subscription {
        self.bus.subscribe()
    }

    pub fn subscribe_with_capacity(&self, capacity: usize) -> Subscription {
        self.bus.subscribe_with_capacity(capacity)
    }

    pub fn heartbeat(&self) {
        let t = self.bus.snapshot_time();
        self.bus.publish(t, Event::Heartbeat);
    }
}
