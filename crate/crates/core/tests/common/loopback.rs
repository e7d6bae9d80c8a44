//! Controller, plant and client wired together in one thread.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use twin_core::geometry::DOF;
use twin_core::link::*;
use twin_core::robotsim::{step_sim, SimState};
use twin_core::{JointState, RobotModel};

/// Controller, plant and client in lock step over two impaired channels.
/// Returns the sim state and the per-cycle applied corrections.
pub fn run_loop(
    model: &RobotModel,
    start: JointState,
    desired: impl Fn(u64) -> JointState,
    cycles: u64,
    net: Impairment,
    seed: u64,
) -> (SimState, LinkState, Vec<[f64; DOF]>) {
    let dt = DEFAULT_CYCLE_MS as f64 / 1000.0;
    let mut sim = SimState::new(start);
    let mut link = LinkState::default();
    let mut client = ClientState::default();
    let mut down: Channel<ActualFrame> = Channel::new(net, seed);
    let mut up: Channel<ReplyFrame> = Channel::new(net, seed ^ 0xff);
    let mut applied_log = Vec::new();
    let mut ipoc_prev = None;
    for cycle in 0..cycles {
        let inbox = up.receive(cycle);
        let reply = inbox
            .iter()
            .find(|r| Some(r.ipoc) == link.awaiting)
            .or(inbox.last());
        let (next, frame, applied) = controller_step(&link, reply, |c| {
            sim = step_sim(model, &sim, c, dt);
            sim.actuals()
        });
        if let Some(p) = ipoc_prev {
            assert_eq!(frame.ipoc, p + 1);
        }
        ipoc_prev = Some(frame.ipoc);
        link = next;
        applied_log.push(applied);
        down.send(cycle, frame);
        for f in down.receive(cycle) {
            let (c, r) = client_step(&client, Some(&f), &desired(cycle + 1), 0);
            client = c;
            if let Some(r) = r {
                up.send(cycle, r);
            }
        }
    }
    (sim, link, applied_log)
}

fn q6(rng: &mut ChaCha8Rng, span: f64) -> f64 {
    quantize(rng.random_range(-span..span))
}

/// Any frame the codec must carry: values on the 1e-6 grid, corrections
/// within the clamp.
pub fn random_frame(rng: &mut ChaCha8Rng) -> CyclicFrame {
    if rng.random_bool(0.5) {
        let mut joints_deg = [0.0; 6];
        for j in &mut joints_deg {
            *j = q6(rng, 400.0);
        }
        CyclicFrame::ControllerToClient(ActualFrame {
            ipoc: rng.random(),
            track_mm: q6(rng, 5000.0),
            joints_deg,
            tool_rpm: q6(rng, 3000.0).abs(),
            din: rng.random(),
        })
    } else {
        let mut corrections = [0.0; DOF];
        corrections[0] = q6(rng, CLAMP_MM);
        for c in &mut corrections[1..] {
            *c = q6(rng, CLAMP_DEG);
        }
        CyclicFrame::ClientToController(ReplyFrame {
            ipoc: rng.random(),
            corrections,
            dout: rng.random(),
        })
    }
}
