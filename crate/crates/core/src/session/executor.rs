//! In-process loopback: controller, simulated plant and twin client run in
//! lock step over two channels, one cycle at a time.

use super::events::{Event, EventBus};
use crate::geometry::JointState;
use crate::kinematics::RobotModel;
use crate::link::{
    client_step, controller_step, to_wire, ActualFrame, Channel, ClientState, Impairment,
    LinkMode, LinkState, ReplyFrame,
};
use crate::robotsim::{set_tool_command, step_sim, SimState};
use crate::skills::{Phase, ToolCommand};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub enum ExecError {
    Faulted { cycle: u64 },
    /// The plant did not reach the end of the phase in time.
    NotSettled { phase: String },
}

pub struct Executor {
    pub sim: SimState,
    pub link: LinkState,
    client: ClientState,
    down: Channel<ActualFrame>,
    up: Channel<ReplyFrame>,
    pub cycle: u64,
    dt_s: f64,
    joint_every: u64,
    settle_cycles: u64,
    pace: Option<(f64, Instant, u64)>,
}

impl Executor {
    pub fn new(
        q: JointState,
        cycle_ms: u64,
        net: Impairment,
        seed: u64,
        settle_timeout_s: f64,
        pace: Option<f64>,
    ) -> Self {
        let dt_s = cycle_ms as f64 / 1000.0;
        Executor {
            sim: SimState::new(q),
            link: LinkState::default(),
            client: ClientState::default(),
            down: Channel::new(net, seed),
            up: Channel::new(net, seed.wrapping_add(1)),
            cycle: 0,
            dt_s,
            // Joint states go out at 30 Hz or faster unless the cycle
            // itself is slower.
            joint_every: ((1000.0 / 30.0) / cycle_ms as f64).floor().max(1.0) as u64,
            settle_cycles: (settle_timeout_s / dt_s).ceil() as u64,
            pace: pace.filter(|f| *f > 0.0).map(|f| (f, Instant::now(), 0)),
        }
    }

    pub fn clock_us(&self) -> u64 {
        self.sim.clock_us
    }

    fn cycle_once(&mut self, model: &RobotModel, desired_next: &JointState, bus: &EventBus) {
        let inbox = self.up.receive(self.cycle);
        let awaiting = self.link.awaiting;
        let reply = inbox
            .iter()
            .find(|r| Some(r.ipoc) == awaiting)
            .or(inbox.last());
        let dt = self.dt_s;
        let mut sim = self.sim;
        let (link, frame, _) = controller_step(&self.link, reply, |c| {
            sim = step_sim(model, &sim, c, dt);
            sim.actuals()
        });
        self.sim = sim;
        if link.mode != self.link.mode {
            bus.publish(sim.clock_us, Event::LinkMode { mode: link.mode });
            bus.update_snapshot(|s| s.link_mode = link.mode);
        }
        self.link = link;
        self.down.send(self.cycle, frame);
        for f in self.down.receive(self.cycle) {
            let (c, r) = client_step(&self.client, Some(&f), desired_next, 0);
            self.client = c;
            if let Some(r) = r {
                self.up.send(self.cycle, r);
            }
        }
        if self.cycle % self.joint_every == 0 {
            let a = sim.actuals();
            bus.publish(sim.clock_us, Event::JointState { q: a.q, tool_rpm: a.tool_rpm, din: a.din });
            bus.update_snapshot(|s| {
                s.q = a.q;
                s.tool_rpm = a.tool_rpm;
                s.din = a.din;
            });
        }
        self.cycle += 1;
        self.pace_wait();
    }

    fn pace_wait(&mut self) {
        if let Some((factor, start, first)) = self.pace {
            let due = Duration::from_secs_f64((self.cycle - first) as f64 * self.dt_s / factor);
            let elapsed = start.elapsed();
            if due > elapsed {
                std::thread::sleep(due - elapsed);
            }
        }
    }

    /// Clear a fault so the next command can run.
    pub fn acknowledge_fault(&mut self) {
        if self.link.mode == LinkMode::Faulted {
            self.link = self.link.reset();
        }
    }

    fn settled(&self, target: &JointState) -> bool {
        to_wire(&self.sim.q_actual) == to_wire(target)
    }

    pub fn set_tool(&mut self, command: &ToolCommand) {
        self.sim = set_tool_command(&self.sim, command);
    }

    /// Stream one phase: motion, settling at the end pose, then the dwell.
    /// Returns the simulated time spent.
    pub fn run_phase(&mut self, model: &RobotModel, phase: &Phase, bus: &EventBus) -> Result<f64, ExecError> {
        let start = self.cycle;
        let traj = &phase.trajectory;
        let end = *traj.end();
        let motion_cycles = (traj.duration() / self.dt_s - 1e-9).ceil().max(0.0) as u64;
        let mut k = 0;
        loop {
            if self.link.mode == LinkMode::Faulted {
                return Err(ExecError::Faulted { cycle: self.cycle });
            }
            if k >= motion_cycles && self.settled(&end) {
                break;
            }
            if k > motion_cycles + self.settle_cycles {
                return Err(ExecError::NotSettled { phase: phase.name.clone() });
            }
            let desired = traj.sample((k + 1) as f64 * self.dt_s);
            self.cycle_once(model, &desired, bus);
            k += 1;
        }
        let dwell_cycles = (phase.dwell_s / self.dt_s - 1e-9).ceil().max(0.0) as u64;
        for _ in 0..dwell_cycles {
            self.cycle_once(model, &end, bus);
            if self.link.mode == LinkMode::Faulted {
                return Err(ExecError::Faulted { cycle: self.cycle });
            }
        }
        Ok((self.cycle - start) as f64 * self.dt_s)
    }
}
