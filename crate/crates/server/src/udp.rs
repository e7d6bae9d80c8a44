//! The link protocol over real UDP sockets.
//!
//! [`run_twin_endpoint`] is the client side: it answers every frame from a
//! controller with corrections toward the twin's current joint state.
//! [`run_controller`] is the controller side driven by `robotsim`.

use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};
use twin_core::kinematics::RobotModel;
use twin_core::link::{
    client_step, controller_step, decode_frame, encode_frame, ClientState, CyclicFrame, LinkMode, LinkState,
    ReplyFrame,
};
use twin_core::robotsim::{apply_dout, step_sim, SimState};
use twin_core::session::{Event, SessionHandle};
use twin_core::JointState;

const MAX_DATAGRAM: usize = 512;
const POLL: Duration = Duration::from_millis(200);

/// Joint state and tool bits the remote controller is steered toward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub q: JointState,
    pub dout: u32,
}

/// Follow the session's event feed and keep `target` current.
pub fn track_session(handle: &SessionHandle, target: Arc<Mutex<Target>>, stop: Arc<AtomicBool>) {
    let sub = handle.subscribe();
    while !stop.load(Ordering::Relaxed) {
        let Some(env) = sub.recv_timeout(POLL) else { continue };
        let update = match env.event {
            Event::Snapshot(s) => Some(Target { q: s.q, dout: s.din }),
            Event::JointState { q, din, .. } => Some(Target { q, dout: din }),
            _ => None,
        };
        if let Some(t) = update {
            *target.lock().unwrap_or_else(|p| p.into_inner()) = t;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EndpointStats {
    pub frames: u64,
    pub replies: u64,
    pub rejected: u64,
}

/// Answer controller frames until `stop` is set. The reply goes back to
/// the sender of each frame.
pub fn run_twin_endpoint(
    socket: &UdpSocket,
    target: &Mutex<Target>,
    stop: &AtomicBool,
) -> std::io::Result<EndpointStats> {
    socket.set_read_timeout(Some(POLL))?;
    let mut buf = [0u8; MAX_DATAGRAM];
    let mut client = ClientState::default();
    let mut stats = EndpointStats::default();
    let mut peer: Option<SocketAddr> = None;
    while !stop.load(Ordering::Relaxed) {
        let (n, from) = match socket.recv_from(&mut buf) {
            Ok(x) => x,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) => return Err(e),
        };
        let frame = match decode_frame(&buf[..n]) {
            Ok(CyclicFrame::ControllerToClient(f)) => f,
            Ok(CyclicFrame::ClientToController(_)) => {
                stats.rejected += 1;
                continue;
            }
            Err(e) => {
                stats.rejected += 1;
                tracing::debug!("dropping datagram from {from}: {e}");
                continue;
            }
        };
        if peer != Some(from) {
            tracing::info!("controller at {from}");
            peer = Some(from);
        }
        stats.frames += 1;
        let t = *target.lock().unwrap_or_else(|p| p.into_inner());
        let (next, reply) = client_step(&client, Some(&frame), &t.q, t.dout);
        client = next;
        if let Some(r) = reply {
            let bytes = encode_frame(&CyclicFrame::ClientToController(r)).expect("client replies are clamped");
            socket.send_to(&bytes, from)?;
            stats.replies += 1;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub cycle: Duration,
    /// Screw speed of the controller-side subprogram.
    pub rpm: f64,
    /// Stop after this many cycles.
    pub cycles: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSummary {
    pub sim: SimState,
    pub link: LinkState,
    pub cycles: u64,
}

/// Controller timing loop on a connected socket. Each tick takes the reply
/// to the previous frame if it has arrived, integrates it and sends the
/// next frame.
pub fn run_controller(
    model: &RobotModel,
    socket: &UdpSocket,
    cfg: &ControllerConfig,
    stop: &AtomicBool,
) -> std::io::Result<ControllerSummary> {
    socket.set_nonblocking(true)?;
    let dt_s = cfg.cycle.as_secs_f64();
    let mut sim = SimState::new(model.home);
    let mut link = LinkState::default();
    let mut buf = [0u8; MAX_DATAGRAM];
    let start = Instant::now();
    let mut cycle = 0u64;
    let mut reported = LinkMode::Running;
    while !stop.load(Ordering::Relaxed) && cfg.cycles.is_none_or(|n| cycle < n) {
        let mut inbox: Vec<ReplyFrame> = Vec::new();
        loop {
            match socket.recv(&mut buf) {
                Ok(n) => match decode_frame(&buf[..n]) {
                    Ok(CyclicFrame::ClientToController(r)) => inbox.push(r),
                    Ok(_) => {}
                    Err(e) => tracing::debug!("dropping reply: {e}"),
                },
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                // Nobody listening yet; the next frame tries again.
                Err(e) if e.kind() == ErrorKind::ConnectionRefused => break,
                Err(e) => return Err(e),
            }
        }
        let reply = inbox.iter().find(|r| Some(r.ipoc) == link.awaiting).or(inbox.last());
        let accepted = link.mode != LinkMode::Faulted && reply.is_some_and(|r| Some(r.ipoc) == link.awaiting);
        let (next, frame, _) = controller_step(&link, reply, |c| {
            sim = step_sim(model, &sim, c, dt_s);
            if let (true, Some(r)) = (accepted, reply) {
                sim = apply_dout(&sim, r.dout, cfg.rpm);
            }
            sim.actuals()
        });
        link = next;
        if link.mode == LinkMode::Faulted && link.stats.accepted == 0 {
            // Still waiting for the twin to answer at all.
            link = link.reset();
        }
        if link.mode != reported {
            match link.mode {
                LinkMode::Faulted => tracing::error!("link faulted at ipoc {}", frame.ipoc),
                m => tracing::debug!("link {m:?}"),
            }
            reported = link.mode;
        }
        let bytes = encode_frame(&CyclicFrame::ControllerToClient(frame)).expect("actual frames always encode");
        match socket.send(&bytes) {
            Ok(_) => {}
            Err(e) if e.kind() == ErrorKind::ConnectionRefused => {}
            Err(e) => return Err(e),
        }
        cycle += 1;
        let due = start + cfg.cycle.mul_f64(cycle as f64);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
    Ok(ControllerSummary { sim, link, cycles: cycle })
}
