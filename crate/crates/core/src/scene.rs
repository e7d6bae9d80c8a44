//! The digital twin of the cell and the battery pack.
//!
//! A [`Scene`] is a value. Every mutation returns a new scene, so the
//! session can hand out snapshots freely.

use crate::geometry::Pose6D;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

pub const WORLD: &str = "world";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("scene schema: {0}")]
    Schema(String),
    #[error("precedence cycle through {0:?}")]
    Cycle(Vec<String>),
    #[error("dangling reference: {0}")]
    DanglingRef(String),
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("component {0:?} is not attached")]
    AlreadyDetached(String),
    #[error("illegal transition of {id:?}: {from:?} -> {to:?}")]
    IllegalTransition {
        id: String,
        from: ComponentState,
        to: ComponentState,
    },
}

/// Solid convex shape centered on its pose. Cylinders run along local z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Box { extents: [f64; 3] },
    Cylinder { radius: f64, length: f64 },
}

impl Shape {
    fn validate(&self, owner: &str) -> Result<(), SceneError> {
        let ok = match self {
            Shape::Box { extents } => extents.iter().all(|e| *e > 0.0 && e.is_finite()),
            Shape::Cylinder { radius, length } => *radius > 0.0 && *length > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SceneError::Schema(format!("{owner}: shape dimensions must be > 0")))
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Box { extents } => {
                0.5 * (extents[0].powi(2) + extents[1].powi(2) + extents[2].powi(2)).sqrt()
            }
            Shape::Cylinder { radius, length } => (radius.powi(2) + (0.5 * length).powi(2)).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentState {
    Attached,
    Detached,
    Removed,
}

impl ComponentState {
    pub fn can_become(self, next: ComponentState) -> bool {
        use ComponentState::*;
        matches!((self, next), (Attached, Detached) | (Detached, Removed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Unscrew,
    ConnectorDetach,
    VacuumLift,
    Grip,
}

/// Detach strategy with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Strategy {
    Unscrew {
        pitch_m_per_rev: f64,
        engage_depth_m: f64,
    },
    ConnectorDetach {
        wiring_exit_dir: Vector3<f64>,
        latch_height_m: f64,
        pull_length_m: f64,
    },
    VacuumLift {
        lift_height_m: f64,
    },
    Grip {
        lift_height_m: f64,
    },
}

impl Strategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Unscrew { .. } => StrategyKind::Unscrew,
            Strategy::ConnectorDetach { .. } => StrategyKind::ConnectorDetach,
            Strategy::VacuumLift { .. } => StrategyKind::VacuumLift,
            Strategy::Grip { .. } => StrategyKind::Grip,
        }
    }

    fn validate(&self, owner: &str) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::Schema(format!("{owner}: {m}")));
        match self {
            Strategy::Unscrew {
                pitch_m_per_rev,
                engage_depth_m,
            } => {
                if *pitch_m_per_rev <= 0.0 || *engage_depth_m <= 0.0 {
                    return bad("unscrew pitch and engage depth must be > 0");
                }
            }
            Strategy::ConnectorDetach {
                wiring_exit_dir,
                latch_height_m,
                pull_length_m,
            } => {
                if (wiring_exit_dir.norm() - 1.0).abs() > 1e-9 {
                    return bad("wiring_exit_dir must be a unit vector");
                }
                if *latch_height_m <= 0.0 || *pull_length_m <= 0.0 {
                    return bad("latch height and pull length must be > 0");
                }
            }
            Strategy::VacuumLift { lift_height_m } | Strategy::Grip { lift_height_m } => {
                if *lift_height_m <= 0.0 {
                    return bad("lift height must be > 0");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TagRepr", into = "TagRepr")]
pub struct Tag {
    pub strategy: Strategy,
    /// Direction the tool travels toward the part, in the component frame.
    pub approach_dir: Vector3<f64>,
    pub tool_id: String,
    /// Frame that receives the part after removal (unused for connectors).
    #[serde(default)]
    pub sort_frame: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagRepr {
    strategy: StrategyKind,
    params: serde_json::Value,
    approach_dir: Vector3<f64>,
    tool_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sort_frame: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UnscrewParams {
    pitch_m_per_rev: f64,
    engage_depth_m: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectorParams {
    wiring_exit_dir: Vector3<f64>,
    latch_height_m: f64,
    pull_length_m: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftParams {
    lift_height_m: f64,
}

impl TryFrom<TagRepr> for Tag {
    type Error = String;

    fn try_from(r: TagRepr) -> Result<Self, String> {
        let p = r.params;
        let err = |e: serde_json::Error| format!("{:?} params: {e}", r.strategy);
        let strategy = match r.strategy {
            StrategyKind::Unscrew => {
                let v: UnscrewParams = serde_json::from_value(p).map_err(err)?;
                Strategy::Unscrew {
                    pitch_m_per_rev: v.pitch_m_per_rev,
                    engage_depth_m: v.engage_depth_m,
                }
            }
            StrategyKind::ConnectorDetach => {
                let v: ConnectorParams = serde_json::from_value(p).map_err(err)?;
                Strategy::ConnectorDetach {
                    wiring_exit_dir: v.wiring_exit_dir,
                    latch_height_m: v.latch_height_m,
                    pull_length_m: v.pull_length_m,
                }
            }
            StrategyKind::VacuumLift => {
                let v: LiftParams = serde_json::from_value(p).map_err(err)?;
                Strategy::VacuumLift {
                    lift_height_m: v.lift_height_m,
                }
            }
            StrategyKind::Grip => {
                let v: LiftParams = serde_json::from_value(p).map_err(err)?;
                Strategy::Grip {
                    lift_height_m: v.lift_height_m,
                }
            }
        };
        Ok(Tag {
            strategy,
            approach_dir: r.approach_dir,
            tool_id: r.tool_id,
            sort_frame: r.sort_frame,
        })
    }
}

impl From<Tag> for TagRepr {
    fn from(t: Tag) -> Self {
        let strategy = t.strategy.kind();
        let params = serde_json::to_value(&t.strategy).expect("strategy params serialize");
        TagRepr {
            strategy,
            params,
            approach_dir: t.approach_dir,
            tool_id: t.tool_id,
            sort_frame: t.sort_frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub id: String,
    pub shape: Shape,
    /// Offset of the shape center from the component origin, component frame.
    #[serde(default = "zero_vec")]
    pub shape_offset: Vector3<f64>,
    #[serde(default)]
    pub parent: Option<String>,
    pub local_pose: Pose6D,
    pub tag: Tag,
    #[serde(default = "attached")]
    pub state: ComponentState,
    pub mass_kg: f64,
    #[serde(default)]
    pub predecessors: Vec<String>,
    /// Row label used when aggregating disassembly phase times.
    #[serde(default)]
    pub phase_label: Option<String>,
}

fn zero_vec() -> Vector3<f64> {
    Vector3::zeros()
}

fn attached() -> ComponentState {
    ComponentState::Attached
}

impl Component {
    pub fn phase_label(&self) -> String {
        self.phase_label.clone().unwrap_or_else(|| {
            match self.tag.strategy.kind() {
                StrategyKind::Unscrew => "Screw removal",
                StrategyKind::ConnectorDetach => "Wiring connectors detach",
                StrategyKind::VacuumLift => "Vacuum lift",
                StrategyKind::Grip => "Grip removal",
            }
            .to_string()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Screwdriver,
    VacuumGripper,
    ConnectorGripper,
}

/// Collision box of a tool, posed in the flange frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolBody {
    pub extents: [f64; 3],
    pub center: Pose6D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub id: String,
    pub kind: ToolKind,
    /// Flange pose at which the tool latches in its holder.
    pub holder_pose: Pose6D,
    /// Flange to tool tip.
    pub tcp_offset: Pose6D,
    pub body: ToolBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: String,
    #[serde(default = "world_name")]
    pub frame: String,
    pub pose: Pose6D,
    pub shape: Shape,
}

fn world_name() -> String {
    WORLD.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub name: String,
    pub parent: String,
    pub pose: Pose6D,
}

/// Serialized scene document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub evb_type_id: String,
    pub evb_base_frame: String,
    /// Outer box of the pack; the base frame sits at the bottom-face center.
    pub pack_extents: [f64; 3],
    pub frames: Vec<Frame>,
    #[serde(default)]
    pub statics: Vec<Obstacle>,
    #[serde(default)]
    pub tools: Vec<ToolSpec>,
    #[serde(default)]
    pub components: Vec<Component>,
    #[serde(default)]
    pub mounted_tool: Option<String>,
}

/// A solid in world coordinates, as seen by the collision checker.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSolid {
    pub id: String,
    pub pose: Pose6D,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    doc: SceneDocument,
}

const CANONICAL_SCENE: &str = include_str!("../fixtures/phev_pack.scene.json");

impl Scene {
    /// The bundled PHEV pack and cell fixture.
    pub fn canonical() -> Self {
        Self::from_json(CANONICAL_SCENE).expect("bundled scene fixture is valid")
    }

    pub fn from_json(doc: &str) -> Result<Self, SceneError> {
        let parsed: SceneDocument =
            serde_json::from_str(doc).map_err(|e| SceneError::Schema(e.to_string()))?;
        Self::from_document(parsed)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| SceneError::Schema(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn from_document(doc: SceneDocument) -> Result<Self, SceneError> {
        let scene = Scene { doc };
        scene.validate()?;
        Ok(scene)
    }

    pub fn document(&self) -> &SceneDocument {
        &self.doc
    }

    pub fn evb_type_id(&self) -> &str {
        &self.doc.evb_type_id
    }

    pub fn evb_base_frame(&self) -> &str {
        &self.doc.evb_base_frame
    }

    pub fn components(&self) -> &[Component] {
        &self.doc.components
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.doc.tools
    }

    pub fn statics(&self) -> &[Obstacle] {
        &self.doc.statics
    }

    pub fn mounted_tool(&self) -> Option<&str> {
        self.doc.mounted_tool.as_deref()
    }

    pub fn component(&self, id: &str) -> Result<&Component, SceneError> {
        self.doc
            .components
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| SceneError::UnknownId(id.to_string()))
    }

    pub fn tool(&self, id: &str) -> Result<&ToolSpec, SceneError> {
        self.doc
            .tools
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| SceneError::UnknownId(id.to_string()))
    }

    fn frame(&self, name: &str) -> Option<&Frame> {
        self.doc.frames.iter().find(|f| f.name == name)
    }

    fn validate(&self) -> Result<(), SceneError> {
        let doc = &self.doc;
        let mut names = BTreeSet::new();
        names.insert(WORLD.to_string());
        for f in &doc.frames {
            if !names.insert(f.name.clone()) {
                return Err(SceneError::Schema(format!("duplicate frame {:?}", f.name)));
            }
        }
        for f in &doc.frames {
            if !names.contains(&f.parent) {
                return Err(SceneError::DanglingRef(format!(
                    "frame {:?} has unknown parent {:?}",
                    f.name, f.parent
                )));
            }
        }
        // Frame graph must be a tree rooted at world.
        for f in &doc.frames {
            let mut seen = BTreeSet::new();
            let mut cur = f.name.as_str();
            while cur != WORLD {
                if !seen.insert(cur.to_string()) {
                    return Err(SceneError::Cycle(seen.into_iter().collect()));
                }
                cur = &self.frame(cur).expect("validated above").parent;
            }
        }
        if self.frame(&doc.evb_base_frame).is_none() {
            return Err(SceneError::DanglingRef(format!(
                "evb_base_frame {:?} is not a frame",
                doc.evb_base_frame
            )));
        }

        if doc.pack_extents.iter().any(|e| *e <= 0.0) {
            return Err(SceneError::Schema("pack_extents must be > 0".into()));
        }
        let mut tool_ids = BTreeSet::new();
        for t in &doc.tools {
            if !tool_ids.insert(t.id.clone()) {
                return Err(SceneError::Schema(format!("duplicate tool {:?}", t.id)));
            }
            if t.body.extents.iter().any(|e| *e <= 0.0) {
                return Err(SceneError::Schema(format!("tool {:?}: extents must be > 0", t.id)));
            }
        }
        if let Some(m) = &doc.mounted_tool {
            if !tool_ids.contains(m) {
                return Err(SceneError::DanglingRef(format!("mounted tool {m:?}")));
            }
        }

        let mut static_ids = BTreeSet::new();
        for o in &doc.statics {
            if !static_ids.insert(o.id.clone()) || names.contains(&o.id) {
                return Err(SceneError::Schema(format!("duplicate id {:?}", o.id)));
            }
            o.shape.validate(&o.id)?;
            if !names.contains(&o.frame) {
                return Err(SceneError::DanglingRef(format!(
                    "obstacle {:?} frame {:?}",
                    o.id, o.frame
                )));
            }
        }

        let mut ids = BTreeSet::new();
        for c in &doc.components {
            if !ids.insert(c.id.clone()) || names.contains(&c.id) || static_ids.contains(&c.id) {
                return Err(SceneError::Schema(format!("duplicate id {:?}", c.id)));
            }
        }
        for c in &doc.components {
            c.shape.validate(&c.id)?;
            c.tag.strategy.validate(&c.id)?;
            if c.mass_kg < 0.0 {
                return Err(SceneError::Schema(format!("{}: mass must be >= 0", c.id)));
            }
            if (c.tag.approach_dir.norm() - 1.0).abs() > 1e-9 {
                return Err(SceneError::Schema(format!(
                    "{}: approach_dir must be a unit vector",
                    c.id
                )));
            }
            if !tool_ids.contains(&c.tag.tool_id) {
                return Err(SceneError::DanglingRef(format!(
                    "{}: unknown tool {:?}",
                    c.id, c.tag.tool_id
                )));
            }
            if let Some(sf) = &c.tag.sort_frame {
                if !names.contains(sf) {
                    return Err(SceneError::DanglingRef(format!("{}: sort frame {sf:?}", c.id)));
                }
            }
            let parent = self.parent_of(c);
            if !names.contains(parent) {
                return Err(SceneError::DanglingRef(format!("{}: parent {parent:?}", c.id)));
            }
            if !self.is_under_evb(parent) {
                return Err(SceneError::Schema(format!(
                    "{}: components must be parented under {:?}",
                    c.id, doc.evb_base_frame
                )));
            }
            for p in &c.predecessors {
                if !ids.contains(p) {
                    return Err(SceneError::DanglingRef(format!(
                        "{}: unknown predecessor {p:?}",
                        c.id
                    )));
                }
            }
        }
        self.topological_order()?;
        Ok(())
    }

    fn parent_of<'a>(&'a self, c: &'a Component) -> &'a str {
        c.parent.as_deref().unwrap_or(&self.doc.evb_base_frame)
    }

    fn is_under_evb(&self, frame: &str) -> bool {
        let mut cur = frame;
        loop {
            if cur == self.doc.evb_base_frame {
                return true;
            }
            if cur == WORLD {
                return false;
            }
            match self.frame(cur) {
                Some(f) => cur = &f.parent,
                None => return false,
            }
        }
    }

    /// Components ordered so that predecessors come first. Ties are broken
    /// by document order, so the result is deterministic.
    pub fn topological_order(&self) -> Result<Vec<String>, SceneError> {
        let comps = &self.doc.components;
        let mut done: BTreeSet<&str> = BTreeSet::new();
        let mut order = Vec::with_capacity(comps.len());
        while order.len() < comps.len() {
            let next = comps.iter().find(|c| {
                !done.contains(c.id.as_str())
                    && c.predecessors.iter().all(|p| done.contains(p.as_str()))
            });
            match next {
                Some(c) => {
                    done.insert(&c.id);
                    order.push(c.id.clone());
                }
                None => {
                    let stuck = comps
                        .iter()
                        .filter(|c| !done.contains(c.id.as_str()))
                        .map(|c| c.id.clone())
                        .collect();
                    return Err(SceneError::Cycle(stuck));
                }
            }
        }
        Ok(order)
    }

    fn frame_world(&self, name: &str) -> Option<Pose6D> {
        if name == WORLD {
            return Some(Pose6D::identity());
        }
        let f = self.frame(name)?;
        Some(self.frame_world(&f.parent)?.compose(&f.pose))
    }

    /// World pose of a frame, component or static obstacle.
    pub fn world_transform(&self, id: &str) -> Result<Pose6D, SceneError> {
        if let Some(p) = self.frame_world(id) {
            return Ok(p);
        }
        if let Some(c) = self.doc.components.iter().find(|c| c.id == id) {
            let parent = self
                .frame_world(self.parent_of(c))
                .ok_or_else(|| SceneError::UnknownId(id.to_string()))?;
            return Ok(parent.compose(&c.local_pose));
        }
        if let Some(o) = self.doc.statics.iter().find(|o| o.id == id) {
            let parent = self
                .frame_world(&o.frame)
                .ok_or_else(|| SceneError::UnknownId(id.to_string()))?;
            return Ok(parent.compose(&o.pose));
        }
        Err(SceneError::UnknownId(id.to_string()))
    }

    pub fn evb_base_pose(&self) -> Pose6D {
        self.frame_world(&self.doc.evb_base_frame)
            .expect("validated evb base frame")
    }

    /// Approach direction of a component in world coordinates.
    pub fn world_approach_dir(&self, id: &str) -> Result<Vector3<f64>, SceneError> {
        let c = self.component(id)?;
        Ok(self.world_transform(id)?.orientation * c.tag.approach_dir)
    }

    /// Tool-tip pose `standoff_m` back from the component along its approach
    /// direction, tool z axis pointing along the approach. The tool x axis
    /// follows the component x axis so the pose moves rigidly with the pack.
    pub fn approach_pose(&self, id: &str, standoff_m: f64) -> Result<Pose6D, SceneError> {
        let c = self.component(id)?;
        if c.state != ComponentState::Attached {
            return Err(SceneError::AlreadyDetached(id.to_string()));
        }
        Ok(self.work_pose(id)?.translated(&(-self.world_approach_dir(id)? * standoff_m)))
    }

    /// Tool-tip pose at the component origin, regardless of state.
    pub fn work_pose(&self, id: &str) -> Result<Pose6D, SceneError> {
        let world = self.world_transform(id)?;
        let a = self.world_approach_dir(id)?;
        let x_ref = world.orientation * Vector3::x();
        Ok(Pose6D::new(
            world.position,
            crate::geometry::frame_from_z_and_x(&a, &x_ref),
        ))
    }

    pub fn set_component_state(&self, id: &str, new_state: ComponentState) -> Result<Scene, SceneError> {
        let mut next = self.clone();
        let c = next
            .doc
            .components
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or_else(|| SceneError::UnknownId(id.to_string()))?;
        if !c.state.can_become(new_state) {
            return Err(SceneError::IllegalTransition {
                id: id.to_string(),
                from: c.state,
                to: new_state,
            });
        }
        c.state = new_state;
        Ok(next)
    }

    pub fn with_mounted_tool(&self, tool: Option<&str>) -> Result<Scene, SceneError> {
        if let Some(t) = tool {
            self.tool(t)?;
        }
        let mut next = self.clone();
        next.doc.mounted_tool = tool.map(str::to_string);
        Ok(next)
    }

    /// Replace the pose of the pack base frame (relative to its parent).
    pub fn with_evb_base_pose(&self, pose: Pose6D) -> Scene {
        let mut next = self.clone();
        let name = next.doc.evb_base_frame.clone();
        if let Some(f) = next.doc.frames.iter_mut().find(|f| f.name == name) {
            f.pose = pose;
        }
        next
    }

    /// Ids of predecessors of `id` that are not yet Removed.
    pub fn blocking_predecessors(&self, id: &str) -> Result<Vec<String>, SceneError> {
        let c = self.component(id)?;
        Ok(c.predecessors
            .iter()
            .filter(|p| {
                self.component(p)
                    .map(|x| x.state != ComponentState::Removed)
                    .unwrap_or(true)
            })
            .cloned()
            .collect())
    }

    /// Everything the robot can hit: static obstacles, components that are
    /// not Removed, and tools resting in their holders.
    pub fn collision_solids(&self) -> Vec<WorldSolid> {
        let mut out = Vec::new();
        for o in &self.doc.statics {
            if let Ok(pose) = self.world_transform(&o.id) {
                out.push(WorldSolid {
                    id: o.id.clone(),
                    pose,
                    shape: o.shape,
                });
            }
        }
        for c in &self.doc.components {
            if c.state == ComponentState::Removed {
                continue;
            }
            if let Ok(pose) = self.world_transform(&c.id) {
                out.push(WorldSolid {
                    id: c.id.clone(),
                    pose: pose.translated(&(pose.orientation * c.shape_offset)),
                    shape: c.shape,
                });
            }
        }
        for t in &self.doc.tools {
            if self.doc.mounted_tool.as_deref() == Some(t.id.as_str()) {
                continue;
            }
            out.push(WorldSolid {
                id: resting_tool_id(&t.id),
                pose: t.holder_pose.compose(&t.body.center),
                shape: Shape::Box {
                    extents: t.body.extents,
                },
            });
        }
        out
    }

    /// Corner points of the pack box in the pack base frame.
    pub fn pack_corners(&self) -> Vec<Vector3<f64>> {
        let [ex, ey, h] = self.doc.pack_extents;
        let (hx, hy) = (ex / 2.0, ey / 2.0);
        let mut out = Vec::with_capacity(8);
        for z in [0.0, h] {
            for y in [-hy, hy] {
                for x in [-hx, hx] {
                    out.push(Vector3::new(x, y, z));
                }
            }
        }
        out
    }

    /// Hash of everything that defines the pack type and cell layout.
    /// Component states, the mounted tool and the pack base pose are left
    /// out, so a rebased or partly disassembled scene hashes the same.
    pub fn scene_hash(&self) -> String {
        let mut doc = self.doc.clone();
        doc.mounted_tool = None;
        let base = doc.evb_base_frame.clone();
        for f in doc.frames.iter_mut().filter(|f| f.name == base) {
            f.pose = Pose6D::identity();
        }
        for c in doc.components.iter_mut() {
            c.state = ComponentState::Attached;
        }
        let value = serde_json::to_value(&doc).expect("scene serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn component_states(&self) -> BTreeMap<String, ComponentState> {
        self.doc
            .components
            .iter()
            .map(|c| (c.id.clone(), c.state))
            .collect()
    }
}

pub fn resting_tool_id(tool: &str) -> String {
    format!("resting:{tool}")
}
