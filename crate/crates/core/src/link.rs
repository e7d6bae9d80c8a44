//! Cyclic external-control link between the twin (client) and the robot
//! controller: wire codec, the two protocol state machines and a seeded
//! network impairment harness.
//!
//! Wire format, one datagram per frame, ASCII, fixed six decimals:
//!
//! ```text
//! controller -> client: IPOC=<u64>;E1=<mm>;A1=<deg>;...;A6=<deg>;RPM=<rev/min>;DIN=<u32>\n
//! client -> controller: IPOC=<u64>;DE1=<mm>;DA1=<deg>;...;DA6=<deg>;DOUT=<u32>\n
//! ```
//!
//! Corrections are relative and limited to ±1 mm / ±0.1° per cycle.

use crate::geometry::{JointState, DOF};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 49152;
pub const DEFAULT_CYCLE_MS: u64 = 12;
pub const CYCLE_MS_RANGE: std::ops::RangeInclusive<u64> = 4..=100;
/// Per-cycle correction limit on the track axis.
pub const CLAMP_MM: f64 = 1.0;
/// Per-cycle correction limit on each revolute joint.
pub const CLAMP_DEG: f64 = 0.1;
/// Consecutive missed replies that fault the link.
pub const FAULT_MISSES: u32 = 10;

/// Digital I/O bit assignments, shared by DIN (tool state) and DOUT
/// (requested tool state).
pub mod bits {
    pub const SCREW_RUN: u32 = 1;
    pub const SCREW_CCW: u32 = 1 << 1;
    pub const GRIP_CLOSED: u32 = 1 << 2;
    pub const VACUUM_ON: u32 = 1 << 3;
    pub const ATC_LATCHED: u32 = 1 << 4;
}

const EPS: f64 = 1e-9;

/// Actual state reported by the controller each cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActualFrame {
    pub ipoc: u64,
    pub track_mm: f64,
    pub joints_deg: [f64; 6],
    pub tool_rpm: f64,
    pub din: u32,
}

/// Client reply: echoed cycle counter and relative corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplyFrame {
    pub ipoc: u64,
    /// Track correction in mm, then six joint corrections in degrees.
    pub corrections: [f64; DOF],
    pub dout: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "direction", rename_all = "snake_case")]
pub enum CyclicFrame {
    ControllerToClient(ActualFrame),
    ClientToController(ReplyFrame),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("correction {index} = {value} exceeds the per-cycle clamp")]
    ClampViolation { index: usize, value: f64 },
    #[error("malformed frame: {0}")]
    Parse(String),
    #[error("key {found:?} where {expected:?} was expected")]
    Order { expected: String, found: String },
    #[error("value out of range: {0}")]
    Range(String),
}

/// Round to the six decimals the wire carries. Negative zero becomes zero.
pub fn quantize(v: f64) -> f64 {
    let q = (v * 1e6).round() / 1e6;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

fn clamp_of(index: usize) -> f64 {
    if index == 0 {
        CLAMP_MM
    } else {
        CLAMP_DEG
    }
}

fn fmt6(v: f64) -> String {
    format!("{:.6}", quantize(v))
}

const ACTUAL_KEYS: [&str; 10] = ["IPOC", "E1", "A1", "A2", "A3", "A4", "A5", "A6", "RPM", "DIN"];
const REPLY_KEYS: [&str; 9] = ["IPOC", "DE1", "DA1", "DA2", "DA3", "DA4", "DA5", "DA6", "DOUT"];

fn check_actual(f: &ActualFrame) -> Result<(), LinkError> {
    let all = std::iter::once(f.track_mm)
        .chain(f.joints_deg)
        .chain(std::iter::once(f.tool_rpm));
    for v in all {
        if !v.is_finite() {
            return Err(LinkError::Range(format!("non-finite value {v}")));
        }
    }
    if f.tool_rpm < 0.0 {
        return Err(LinkError::Range(format!("negative rpm {}", f.tool_rpm)));
    }
    Ok(())
}

fn check_reply(f: &ReplyFrame) -> Result<(), LinkError> {
    for (i, v) in f.corrections.iter().enumerate() {
        if !v.is_finite() || v.abs() > clamp_of(i) + EPS {
            return Err(LinkError::ClampViolation { index: i, value: *v });
        }
    }
    Ok(())
}

pub fn encode_frame(frame: &CyclicFrame) -> Result<Vec<u8>, LinkError> {
    let mut s = String::with_capacity(128);
    match frame {
        CyclicFrame::ControllerToClient(f) => {
            check_actual(f)?;
            s.push_str(&format!("IPOC={};E1={}", f.ipoc, fmt6(f.track_mm)));
            for (i, a) in f.joints_deg.iter().enumerate() {
                s.push_str(&format!(";A{}={}", i + 1, fmt6(*a)));
            }
            s.push_str(&format!(";RPM={};DIN={}\n", fmt6(f.tool_rpm), f.din));
        }
        CyclicFrame::ClientToController(f) => {
            check_reply(f)?;
            s.push_str(&format!("IPOC={};DE1={}", f.ipoc, fmt6(f.corrections[0])));
            for i in 1..DOF {
                s.push_str(&format!(";DA{}={}", i, fmt6(f.corrections[i])));
            }
            s.push_str(&format!(";DOUT={}\n", f.dout));
        }
    }
    Ok(s.into_bytes())
}

fn parse_f64(key: &str, v: &str) -> Result<f64, LinkError> {
    let x: f64 = v
        .parse()
        .map_err(|_| LinkError::Parse(format!("{key}: bad number {v:?}")))?;
    if !x.is_finite() {
        return Err(LinkError::Range(format!("{key}: non-finite")));
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, LinkError> {
    v.parse()
        .map_err(|_| LinkError::Parse(format!("{key}: bad integer {v:?}")))
}

pub fn decode_frame(bytes: &[u8]) -> Result<CyclicFrame, LinkError> {
    let text = std::str::from_utf8(bytes).map_err(|_| LinkError::Parse("not ASCII".into()))?;
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| LinkError::Parse("missing terminating newline".into()))?;
    let mut fields = Vec::new();
    for tok in body.split(';') {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| LinkError::Parse(format!("token {tok:?} is not key=value")))?;
        fields.push((k, v));
    }
    let keys: &[&str] = match fields.get(1).map(|f| f.0) {
        Some(k) if k.starts_with('D') => &REPLY_KEYS,
        _ => &ACTUAL_KEYS,
    };
    for (k, _) in &fields {
        if !ACTUAL_KEYS.contains(k) && !REPLY_KEYS.contains(k) {
            return Err(LinkError::Parse(format!("unknown key {k:?}")));
        }
    }
    if !fields.iter().any(|(k, _)| *k == "IPOC") {
        return Err(LinkError::Parse("missing IPOC".into()));
    }
    for (i, expected) in keys.iter().enumerate() {
        match fields.get(i) {
            None => return Err(LinkError::Parse(format!("missing {expected}"))),
            Some((k, _)) if k != expected => {
                return Err(if keys.contains(k) {
                    LinkError::Order {
                        expected: expected.to_string(),
                        found: k.to_string(),
                    }
                } else {
                    LinkError::Parse(format!("key {k:?} does not belong in this frame"))
                })
            }
            _ => {}
        }
    }
    if fields.len() > keys.len() {
        return Err(LinkError::Parse("trailing fields".into()));
    }
    let ipoc: u64 = parse_int("IPOC", fields[0].1)?;
    if keys.len() == REPLY_KEYS.len() {
        let mut corrections = [0.0; DOF];
        for (i, c) in corrections.iter_mut().enumerate() {
            *c = parse_f64(keys[i + 1], fields[i + 1].1)?;
        }
        let f = ReplyFrame {
            ipoc,
            corrections,
            dout: parse_int("DOUT", fields[8].1)?,
        };
        check_reply(&f).map_err(|e| LinkError::Range(e.to_string()))?;
        Ok(CyclicFrame::ClientToController(f))
    } else {
        let mut joints_deg = [0.0; 6];
        for (i, a) in joints_deg.iter_mut().enumerate() {
            *a = parse_f64(keys[i + 2], fields[i + 2].1)?;
        }
        let f = ActualFrame {
            ipoc,
            track_mm: parse_f64("E1", fields[1].1)?,
            joints_deg,
            tool_rpm: parse_f64("RPM", fields[8].1)?,
            din: parse_int("DIN", fields[9].1)?,
        };
        check_actual(&f)?;
        Ok(CyclicFrame::ControllerToClient(f))
    }
}

/// Joint state in wire units (mm, degrees), quantized.
pub fn to_wire(q: &JointState) -> [f64; DOF] {
    let mut out = [0.0; DOF];
    out[0] = quantize(q.track * 1000.0);
    for i in 0..6 {
        out[i + 1] = quantize(q.q[i].to_degrees());
    }
    out
}

/// Wire units back to meters and radians.
pub fn from_wire(v: &[f64; DOF]) -> [f64; DOF] {
    let mut out = [0.0; DOF];
    out[0] = v[0] / 1000.0;
    for i in 1..DOF {
        out[i] = v[i].to_radians();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    Running,
    Holding,
    Faulted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub accepted: u64,
    pub missed: u64,
    /// Replies that arrived with the wrong IPOC.
    pub stale: u64,
    /// Longest run of consecutive misses seen.
    pub worst_gap: u32,
}

/// Controller-side protocol state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub ipoc_next: u64,
    /// IPOC of the frame the next reply must echo.
    pub awaiting: Option<u64>,
    pub consecutive_misses: u32,
    pub mode: LinkMode,
    pub stats: LinkStats,
}

impl Default for LinkState {
    fn default() -> Self {
        LinkState::new(1)
    }
}

impl LinkState {
    pub fn new(first_ipoc: u64) -> Self {
        LinkState {
            ipoc_next: first_ipoc,
            awaiting: None,
            consecutive_misses: 0,
            mode: LinkMode::Running,
            stats: LinkStats::default(),
        }
    }

    /// Leave Faulted. The cycle counter keeps counting.
    pub fn reset(&self) -> Self {
        LinkState {
            awaiting: None,
            consecutive_misses: 0,
            mode: LinkMode::Running,
            ..*self
        }
    }
}

/// What the controller reads from its plant after applying corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuals {
    pub q: JointState,
    pub tool_rpm: f64,
    pub din: u32,
}

/// One controller cycle. The reply to the previous frame is checked, its
/// corrections (meters and radians, zero when holding or faulted) are
/// handed to `plant`, and the frame for this cycle reports what the plant
/// returns.
pub fn controller_step(
    state: &LinkState,
    reply: Option<&ReplyFrame>,
    plant: impl FnOnce(&[f64; DOF]) -> Actuals,
) -> (LinkState, ActualFrame, [f64; DOF]) {
    let mut next = *state;
    let mut applied = [0.0; DOF];
    if next.mode != LinkMode::Faulted {
        if let Some(expected) = state.awaiting {
            match reply {
                Some(r) if r.ipoc == expected => {
                    let mut wire = [0.0; DOF];
                    for i in 0..DOF {
                        let c = clamp_of(i);
                        wire[i] = r.corrections[i].clamp(-c, c);
                    }
                    applied = from_wire(&wire);
                    next.consecutive_misses = 0;
                    next.mode = LinkMode::Running;
                    next.stats.accepted += 1;
                }
                other => {
                    if other.is_some() {
                        next.stats.stale += 1;
                    }
                    next.consecutive_misses += 1;
                    next.stats.missed += 1;
                    next.stats.worst_gap = next.stats.worst_gap.max(next.consecutive_misses);
                    next.mode = if next.consecutive_misses >= FAULT_MISSES {
                        LinkMode::Faulted
                    } else {
                        LinkMode::Holding
                    };
                }
            }
        }
    }
    let actual = plant(&applied);
    let wire = to_wire(&actual.q);
    let mut joints_deg = [0.0; 6];
    joints_deg.copy_from_slice(&wire[1..]);
    let frame = ActualFrame {
        ipoc: next.ipoc_next,
        track_mm: wire[0],
        joints_deg,
        tool_rpm: quantize(actual.tool_rpm.max(0.0)),
        din: actual.din,
    };
    next.awaiting = Some(next.ipoc_next);
    next.ipoc_next += 1;
    (next, frame, applied)
}

/// Client-side protocol state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientState {
    pub last_ipoc: Option<u64>,
    pub frames_seen: u64,
    /// Last actual state received, in meters and radians.
    pub last_actual: Option<[f64; DOF]>,
}

/// Answer one inbound frame with corrections toward `desired`, clamped per
/// coordinate. Without an inbound frame there is nothing to answer.
pub fn client_step(
    state: &ClientState,
    inbound: Option<&ActualFrame>,
    desired: &JointState,
    dout: u32,
) -> (ClientState, Option<ReplyFrame>) {
    let Some(f) = inbound else {
        return (*state, None);
    };
    let mut actual = [0.0; DOF];
    actual[0] = f.track_mm;
    actual[1..].copy_from_slice(&f.joints_deg);
    let target = to_wire(desired);
    let mut corrections = [0.0; DOF];
    for i in 0..DOF {
        let c = clamp_of(i);
        corrections[i] = quantize((target[i] - quantize(actual[i])).clamp(-c, c));
    }
    let next = ClientState {
        last_ipoc: Some(f.ipoc),
        frames_seen: state.frames_seen + 1,
        last_actual: Some(from_wire(&actual)),
    };
    (
        next,
        Some(ReplyFrame {
            ipoc: f.ipoc,
            corrections,
            dout,
        }),
    )
}

/// Delay in whole cycles added by the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DelayDist {
    Fixed { cycles: u64 },
    Uniform { min: u64, max: u64 },
}

impl DelayDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            DelayDist::Fixed { cycles } => cycles,
            DelayDist::Uniform { min, max } => rng.random_range(min..=max.max(min)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impairment {
    pub loss_prob: f64,
    pub delay: DelayDist,
    pub duplicate_prob: f64,
}

impl Impairment {
    pub fn perfect() -> Self {
        Impairment {
            loss_prob: 0.0,
            delay: DelayDist::Fixed { cycles: 0 },
            duplicate_prob: 0.0,
        }
    }
}

impl Default for Impairment {
    fn default() -> Self {
        Impairment::perfect()
    }
}

/// Fate of one frame sent in `cycle`: zero, one or two deliveries, each
/// with its delivery cycle. Decided by `seed` and `cycle` alone.
pub fn impair<F: Clone>(net: &Impairment, cycle: u64, frame: &F, seed: u64) -> Vec<(u64, F)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cycle);
    if rng.random_bool(net.loss_prob.clamp(0.0, 1.0)) {
        return Vec::new();
    }
    let mut out = vec![(cycle + net.delay.sample(&mut rng), frame.clone())];
    if rng.random_bool(net.duplicate_prob.clamp(0.0, 1.0)) {
        out.push((cycle + net.delay.sample(&mut rng), frame.clone()));
    }
    out
}

/// One direction of an impaired datagram link.
#[derive(Debug, Clone)]
pub struct Channel<F> {
    pub net: Impairment,
    seed: u64,
    pending: BTreeMap<u64, Vec<F>>,
}

impl<F: Clone> Channel<F> {
    pub fn new(net: Impairment, seed: u64) -> Self {
        Channel {
            net,
            seed,
            pending: BTreeMap::new(),
        }
    }

    pub fn send(&mut self, cycle: u64, frame: F) {
        for (at, f) in impair(&self.net, cycle, &frame, self.seed) {
            self.pending.entry(at).or_default().push(f);
        }
    }

    /// Frames due at or before `cycle`, in send order.
    pub fn receive(&mut self, cycle: u64) -> Vec<F> {
        let later = self.pending.split_off(&(cycle + 1));
        let due = std::mem::replace(&mut self.pending, later);
        due.into_values().flatten().collect()
    }
}
