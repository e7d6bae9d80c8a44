//! Controller-side plant: integrates link corrections and holds the tool
//! signals.

use crate::geometry::{JointState, DOF};
use crate::kinematics::{clamp_to_limits, RobotModel};
use crate::link::{bits, Actuals};
use crate::skills::ToolCommand;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gripper {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vacuum {
    Off,
    On,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrewDirection {
    Cw,
    Ccw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub q_actual: JointState,
    pub tool_rpm: f64,
    pub screw_dir: Option<ScrewDirection>,
    pub gripper: Gripper,
    pub vacuum: Vacuum,
    pub atc_latched: bool,
    pub clock_us: u64,
}

impl SimState {
    pub fn new(q: JointState) -> Self {
        SimState {
            q_actual: q,
            tool_rpm: 0.0,
            screw_dir: None,
            gripper: Gripper::Open,
            vacuum: Vacuum::Off,
            atc_latched: true,
            clock_us: 0,
        }
    }

    /// Tool state as DIN bits.
    pub fn din(&self) -> u32 {
        let mut b = 0;
        if self.tool_rpm > 0.0 {
            b |= bits::SCREW_RUN;
        }
        if self.screw_dir == Some(ScrewDirection::Ccw) {
            b |= bits::SCREW_CCW;
        }
        if self.gripper == Gripper::Closed {
            b |= bits::GRIP_CLOSED;
        }
        if self.vacuum == Vacuum::On {
            b |= bits::VACUUM_ON;
        }
        if self.atc_latched {
            b |= bits::ATC_LATCHED;
        }
        b
    }

    pub fn actuals(&self) -> Actuals {
        Actuals {
            q: self.q_actual,
            tool_rpm: self.tool_rpm,
            din: self.din(),
        }
    }
}

/// Add the (already clamped) corrections, in meters and radians, and
/// saturate at the joint limits.
pub fn step_sim(model: &RobotModel, sim: &SimState, corrections: &[f64; DOF], dt_s: f64) -> SimState {
    assert!(dt_s > 0.0, "dt must be positive, got {dt_s}");
    let mut v = sim.q_actual.to_array();
    for (x, c) in v.iter_mut().zip(corrections) {
        *x += c;
    }
    SimState {
        q_actual: clamp_to_limits(model, &JointState::from_array(v)),
        clock_us: sim.clock_us + (dt_s * 1e6).round() as u64,
        ..*sim
    }
}

/// Apply a tool signal. Speeds change instantly.
pub fn set_tool_command(sim: &SimState, command: &ToolCommand) -> SimState {
    let mut s = *sim;
    match *command {
        ToolCommand::None => {}
        ToolCommand::ScrewCw { rpm } => {
            s.tool_rpm = rpm.max(0.0);
            s.screw_dir = Some(ScrewDirection::Cw);
        }
        ToolCommand::ScrewCcw { rpm } => {
            s.tool_rpm = rpm.max(0.0);
            s.screw_dir = Some(ScrewDirection::Ccw);
        }
        ToolCommand::ScrewStop => {
            s.tool_rpm = 0.0;
            s.screw_dir = None;
        }
        ToolCommand::GripClose => s.gripper = Gripper::Closed,
        ToolCommand::GripOpen => s.gripper = Gripper::Open,
        ToolCommand::VacuumOn => s.vacuum = Vacuum::On,
        ToolCommand::VacuumOff => s.vacuum = Vacuum::Off,
        ToolCommand::AtcRelease => {
            // Whatever the tool was doing stops with it.
            s.atc_latched = false;
            s.tool_rpm = 0.0;
            s.screw_dir = None;
            s.gripper = Gripper::Open;
            s.vacuum = Vacuum::Off;
        }
        ToolCommand::AtcLatch => s.atc_latched = true,
    }
    s
}

/// Tool state requested through DOUT bits by a remote client. The screw
/// runs at `rpm` of the controller-side subprogram.
pub fn apply_dout(sim: &SimState, dout: u32, rpm: f64) -> SimState {
    let screw = if dout & bits::SCREW_RUN == 0 {
        ToolCommand::ScrewStop
    } else if dout & bits::SCREW_CCW != 0 {
        ToolCommand::ScrewCcw { rpm }
    } else {
        ToolCommand::ScrewCw { rpm }
    };
    let mut s = *sim;
    if dout & bits::ATC_LATCHED == 0 {
        s = set_tool_command(&s, &ToolCommand::AtcRelease);
        return s;
    }
    s.atc_latched = true;
    if (s.tool_rpm > 0.0) != (dout & bits::SCREW_RUN != 0)
        || (dout & bits::SCREW_RUN != 0
            && (s.screw_dir == Some(ScrewDirection::Ccw)) != (dout & bits::SCREW_CCW != 0))
    {
        s = set_tool_command(&s, &screw);
    }
    s.gripper = if dout & bits::GRIP_CLOSED != 0 {
        Gripper::Closed
    } else {
        Gripper::Open
    };
    s.vacuum = if dout & bits::VACUUM_ON != 0 {
        Vacuum::On
    } else {
        Vacuum::Off
    };
    s
}
