//! Broadcast of the session state feed. Every subscriber has its own
//! bounded queue; a slow one loses its oldest events and is told how many.

use crate::geometry::{JointState, Pose6D};
use crate::link::LinkMode;
use crate::scene::{ComponentState, Scene, SceneDocument};
use crate::skills::PhaseKind;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

pub const DEFAULT_QUEUE_CAPACITY: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub scene: SceneDocument,
    pub q: JointState,
    pub tool_rpm: f64,
    pub din: u32,
    pub link_mode: LinkMode,
    pub busy: bool,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Snapshot(Snapshot),
    Heartbeat,
    JointState {
        q: JointState,
        tool_rpm: f64,
        din: u32,
    },
    ComponentState {
        id: String,
        state: ComponentState,
    },
    ToolMounted {
        tool: Option<String>,
    },
    PoseUpdate {
        transform: Pose6D,
        residual_rmse_m: f64,
    },
    ExecutionStarted {
        index: usize,
        component_id: String,
    },
    PhaseStarted {
        index: usize,
        phase: usize,
        name: String,
        kind: PhaseKind,
    },
    ExecutionFinished {
        index: usize,
        component_id: String,
        completed: bool,
        reason: Option<String>,
    },
    LinkMode {
        mode: LinkMode,
    },
    SessionReset,
    /// This subscriber fell behind and lost `dropped` events here.
    Gap {
        dropped: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// Bus-wide sequence number. Snapshots and gap markers reuse the number
    /// of the last event before them.
    pub seq: u64,
    /// Simulated controller clock.
    pub t_us: u64,
    #[serde(flatten)]
    pub event: Event,
}

struct Queue {
    buf: VecDeque<Envelope>,
    capacity: usize,
    dropped: u64,
    last_seq: u64,
    t_us: u64,
}

type Shared = Arc<(Mutex<Queue>, Condvar)>;

struct BusState {
    seq: u64,
    snapshot: Snapshot,
    t_us: u64,
    subscribers: Vec<Shared>,
}

/// Cheap to clone; all clones publish to the same subscribers.
#[derive(Clone)]
pub struct EventBus {
    state: Arc<Mutex<BusState>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl EventBus {
    pub fn new(initial: Snapshot) -> Self {
        EventBus {
            state: Arc::new(Mutex::new(BusState {
                seq: 0,
                snapshot: initial,
                t_us: 0,
                subscribers: Vec::new(),
            })),
        }
    }

    pub fn publish(&self, t_us: u64, event: Event) {
        let mut st = lock(&self.state);
        st.seq += 1;
        st.t_us = t_us;
        let env = Envelope { seq: st.seq, t_us, event };
        // A subscriber whose handle is gone holds the only other reference.
        st.subscribers.retain(|s| Arc::strong_count(s) > 1);
        for s in &st.subscribers {
            let mut q = lock(&s.0);
            if q.buf.len() == q.capacity {
                q.buf.pop_front();
                q.dropped += 1;
            }
            q.buf.push_back(env.clone());
            s.1.notify_all();
        }
    }

    /// Update the state that late subscribers start from.
    pub fn update_snapshot(&self, f: impl FnOnce(&mut Snapshot)) {
        f(&mut lock(&self.state).snapshot);
    }

    pub fn set_scene(&self, scene: &Scene) {
        let doc = scene.document().clone();
        self.update_snapshot(|s| s.scene = doc);
    }

    pub fn snapshot(&self) -> Snapshot {
        lock(&self.state).snapshot.clone()
    }

    /// Clock of the last published event.
    pub fn snapshot_time(&self) -> u64 {
        lock(&self.state).t_us
    }

    pub fn last_seq(&self) -> u64 {
        lock(&self.state).seq
    }

    pub fn subscribe(&self) -> Subscription {
        self.subscribe_with_capacity(DEFAULT_QUEUE_CAPACITY)
    }

    /// The first event received is always a snapshot of the current state.
    pub fn subscribe_with_capacity(&self, capacity: usize) -> Subscription {
        let mut st = lock(&self.state);
        let first = Envelope {
            seq: st.seq,
            t_us: st.t_us,
            event: Event::Snapshot(st.snapshot.clone()),
        };
        let mut buf = VecDeque::with_capacity(capacity.min(1 << 16));
        buf.push_back(first);
        let shared: Shared = Arc::new((
            Mutex::new(Queue {
                buf,
                capacity: capacity.max(1),
                dropped: 0,
                last_seq: st.seq,
                t_us: st.t_us,
            }),
            Condvar::new(),
        ));
        st.subscribers.push(shared.clone());
        Subscription { shared }
    }
}

pub struct Subscription {
    shared: Shared,
}

impl Subscription {
    fn pop(q: &mut Queue) -> Option<Envelope> {
        if q.dropped > 0 {
            let dropped = std::mem::take(&mut q.dropped);
            return Some(Envelope {
                seq: q.last_seq,
                t_us: q.t_us,
                event: Event::Gap { dropped },
            });
        }
        let env = q.buf.pop_front()?;
        q.last_seq = env.seq;
        q.t_us = env.t_us;
        Some(env)
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        Self::pop(&mut lock(&self.shared.0))
    }

    /// Wait up to `timeout` for the next event.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        let (m, cv) = &*self.shared;
        let q = lock(m);
        let (mut q, _) = cv
            .wait_timeout_while(q, timeout, |q| q.buf.is_empty() && q.dropped == 0)
            .unwrap_or_else(|p| p.into_inner());
        Self::pop(&mut q)
    }

    /// Everything queued right now.
    pub fn drain(&self) -> Vec<Envelope> {
        let mut q = lock(&self.shared.0);
        std::iter::from_fn(|| Self::pop(&mut q)).collect()
    }
}
