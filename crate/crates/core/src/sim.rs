//! Deterministic discrete-event engine for the broadcast model.
//!
//! One transmission is delivered to every neighbor of the sender and counts
//! once, whatever the degree. Channels are reliable and FIFO per
//! `(sender, receiver)` pair, and every delay lies in `(0, bound]`.
//! Targeted messages are still physically broadcast; receivers filter them.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, Topology, TopologyError};

/// Simulated time in delay units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn as_f64(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

/// Samples a delay for one `(sender, receiver)` delivery.
pub type DelaySampler = Arc<dyn Fn(NodeId, NodeId, &mut ChaCha8Rng) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DelayKind {
    /// Every delivery takes exactly `bound`.
    Unit,
    /// Independent per-delivery delay, uniform in `(0, bound]`.
    UniformRandom,
    Custom(DelaySampler),
}

impl fmt::Debug for DelayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayKind::Unit => f.write_str("Unit"),
            DelayKind::UniformRandom => f.write_str("UniformRandom"),
            DelayKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DelayModel {
    pub kind: DelayKind,
    pub seed: u64,
    pub bound: f64,
}

impl DelayModel {
    pub fn unit() -> Self {
        Self {
            kind: DelayKind::Unit,
            seed: 0,
            bound: 1.0,
        }
    }

    pub fn uniform(seed: u64) -> Self {
        Self {
            kind: DelayKind::UniformRandom,
            seed,
            bound: 1.0,
        }
    }

    pub fn custom(seed: u64, bound: f64, sampler: DelaySampler) -> Self {
        Self {
            kind: DelayKind::Custom(sampler),
            seed,
            bound,
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self.kind, DelayKind::Unit)
    }
}

/// Message types routed by the engine must describe themselves for the event log.
pub trait Payload: Clone + fmt::Debug {
    fn kind(&self) -> &'static str;
    fn summary(&self) -> String;
}

/// Handlers get a context for reading the clock and queueing broadcasts.
pub struct Context<'a, M> {
    node: NodeId,
    neighbors: &'a [NodeId],
    now: SimTime,
    outbox: &'a mut Vec<M>,
}

impl<'a, M> Context<'a, M> {
    pub fn new(
        node: NodeId,
        neighbors: &'a [NodeId],
        now: SimTime,
        outbox: &'a mut Vec<M>,
    ) -> Self {
        Self {
            node,
            neighbors,
            now,
            outbox,
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn neighbors(&self) -> &'a [NodeId] {
        self.neighbors
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Queues one transmission heard by every neighbor.
    pub fn broadcast(&mut self, msg: M) {
        self.outbox.push(msg);
    }
}

/// A node that violated its protocol; the run stops with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolViolation(pub String);

/// Per-node protocol automaton driven by the engine.
pub trait Automaton {
    type Message: Payload;

    /// Called once per node at time zero, in ascending node order.
    fn on_init(&mut self, ctx: &mut Context<'_, Self::Message>) -> Result<(), ProtocolViolation>;

    fn on_receive(
        &mut self,
        ctx: &mut Context<'_, Self::Message>,
        from: NodeId,
        msg: &Self::Message,
    ) -> Result<(), ProtocolViolation>;
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("node {0} is not part of the topology")]
    UnknownNode(NodeId),
    #[error("delay {delay} on channel {sender}->{receiver} is outside (0, {bound}]")]
    InvalidDelay {
        sender: NodeId,
        receiver: NodeId,
        delay: f64,
        bound: f64,
    },
    #[error("event limit of {limit} reached at time {time}; protocol did not quiesce")]
    EventLimit { limit: u64, time: SimTime },
    #[error("protocol violation at node {node}, time {time}: {reason}")]
    Protocol {
        node: NodeId,
        time: SimTime,
        reason: String,
    },
}

/// One delivered copy of a transmission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delivery {
    pub transmission: u64,
    pub sent_at: SimTime,
    pub arrival: SimTime,
    pub seq: u64,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub kind: &'static str,
    pub summary: String,
}

impl Delivery {
    /// Tab-separated log line: arrival, sender, receiver, kind, summary.
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.arrival, self.sender, self.receiver, self.kind, self.summary
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    /// Time of the last processed delivery.
    pub final_time: SimTime,
    pub transmissions: u64,
    pub deliveries: u64,
    /// Transmissions per node, in topology node order.
    pub per_node_transmissions: Vec<u64>,
}

struct Event<M> {
    arrival: SimTime,
    seq: u64,
    receiver: usize,
    sender: usize,
    transmission: u64,
    sent_at: SimTime,
    payload: Arc<M>,
}

impl<M> PartialEq for Event<M> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<M> Eq for Event<M> {}

impl<M> PartialOrd for Event<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Event<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.arrival, self.seq).cmp(&(other.arrival, other.seq))
    }
}

pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

/// A single simulation run. Owns the automata, the queue and the channel state.
pub struct Simulation<A: Automaton> {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    neighbors: Vec<Vec<NodeId>>,
    neighbor_index: Vec<Vec<usize>>,
    nodes: Vec<A>,
    delay: DelayModel,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<Event<A::Message>>>,
    last_arrival: HashMap<(usize, usize), SimTime>,
    now: SimTime,
    seq: u64,
    transmissions: u64,
    deliveries: u64,
    per_node: Vec<u64>,
    max_events: u64,
    log: Option<Vec<Delivery>>,
}

impl<A: Automaton> Simulation<A> {
    /// Validates the topology and builds one automaton per node.
    pub fn new(
        topology: &Topology,
        delay: DelayModel,
        mut make: impl FnMut(NodeId, &[NodeId]) -> A,
    ) -> Result<Self, SimError> {
        topology.validate()?;
        let map = topology.neighbor_map();
        let ids: Vec<NodeId> = map.keys().copied().collect();
        let index: HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let neighbors: Vec<Vec<NodeId>> = map.into_values().collect();
        let neighbor_index = neighbors
            .iter()
            .map(|list| list.iter().map(|id| index[id]).collect())
            .collect();
        let nodes = ids
            .iter()
            .zip(&neighbors)
            .map(|(&id, list)| make(id, list))
            .collect();
        let n = ids.len();
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(delay.seed),
            ids,
            index,
            neighbors,
            neighbor_index,
            nodes,
            delay,
            queue: BinaryHeap::new(),
            last_arrival: HashMap::new(),
            now: SimTime::ZERO,
            seq: 0,
            transmissions: 0,
            deliveries: 0,
            per_node: vec![0; n],
            max_events: DEFAULT_MAX_EVENTS,
            log: None,
        })
    }

    pub fn with_max_events(mut self, limit: u64) -> Self {
        self.max_events = limit;
        self
    }

    /// Records every delivery for later inspection.
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn node(&self, id: NodeId) -> Option<&A> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &A)> {
        self.ids.iter().copied().zip(self.nodes.iter())
    }

    pub fn event_log(&self) -> Option<&[Delivery]> {
        self.log.as_deref()
    }

    pub fn metrics(&self) -> RunMetrics {
        RunMetrics {
            final_time: self.now,
            transmissions: self.transmissions,
            deliveries: self.deliveries,
            per_node_transmissions: self.per_node.clone(),
        }
    }

    /// Schedules one delivery per neighbor and counts a single transmission.
    pub fn broadcast(&mut self, sender: NodeId, payload: A::Message) -> Result<u64, SimError> {
        let s = *self
            .index
            .get(&sender)
            .ok_or(SimError::UnknownNode(sender))?;
        self.schedule(s, payload)?;
        Ok(1)
    }

    fn schedule(&mut self, s: usize, payload: A::Message) -> Result<(), SimError> {
        let transmission = self.transmissions;
        self.transmissions += 1;
        self.per_node[s] += 1;
        let payload = Arc::new(payload);
        for k in 0..self.neighbor_index[s].len() {
            let r = self.neighbor_index[s][k];
            let d = self.sample_delay(s, r)?;
            let mut arrival = SimTime(self.now.0 + d);
            if let Some(&prev) = self.last_arrival.get(&(s, r)) {
                if arrival <= prev {
                    arrival = SimTime(prev.0.next_up());
                }
            }
            self.last_arrival.insert((s, r), arrival);
            self.queue.push(Reverse(Event {
                arrival,
                seq: self.seq,
                receiver: r,
                sender: s,
                transmission,
                sent_at: self.now,
                payload: Arc::clone(&payload),
            }));
            self.seq += 1;
        }
        Ok(())
    }

    fn sample_delay(&mut self, s: usize, r: usize) -> Result<f64, SimError> {
        let bound = self.delay.bound;
        let d = match &self.delay.kind {
            DelayKind::Unit => bound,
            // random() is in [0, 1), so this lands in (0, bound]
            DelayKind::UniformRandom => bound * (1.0 - self.rng.random::<f64>()),
            DelayKind::Custom(f) => f(self.ids[s], self.ids[r], &mut self.rng),
        };
        if d > 0.0 && d <= bound {
            Ok(d)
        } else {
            Err(SimError::InvalidDelay {
                sender: self.ids[s],
                receiver: self.ids[r],
                delay: d,
                bound,
            })
        }
    }

    fn flush(&mut self, s: usize, outbox: &mut Vec<A::Message>) -> Result<(), SimError> {
        for msg in outbox.drain(..) {
            self.schedule(s, msg)?;
        }
        Ok(())
    }

    fn violation(&self, i: usize, v: ProtocolViolation) -> SimError {
        SimError::Protocol {
            node: self.ids[i],
            time: self.now,
            reason: v.0,
        }
    }

    /// Calls every node's init handler at time zero, then drains the queue.
    pub fn run(&mut self) -> Result<RunMetrics, SimError> {
        self.init()?;
        self.drain()
    }

    /// Calls every node's init handler at the current time, in node order.
    pub fn init(&mut self) -> Result<(), SimError> {
        let mut outbox = Vec::new();
        for i in 0..self.nodes.len() {
            let mut ctx = Context::new(self.ids[i], &self.neighbors[i], self.now, &mut outbox);
            self.nodes[i]
                .on_init(&mut ctx)
                .map_err(|v| self.violation(i, v))?;
            self.flush(i, &mut outbox)?;
        }
        Ok(())
    }

    /// Processes events in `(arrival, seq)` order until none remain.
    pub fn drain(&mut self) -> Result<RunMetrics, SimError> {
        while self.step()?.is_some() {}
        Ok(self.metrics())
    }

    /// Delivers the next event and returns its receiver, or `None` once the queue is empty.
    pub fn step(&mut self) -> Result<Option<NodeId>, SimError> {
        let Some(Reverse(ev)) = self.queue.pop() else {
            return Ok(None);
        };
        if self.deliveries >= self.max_events {
            return Err(SimError::EventLimit {
                limit: self.max_events,
                time: self.now,
            });
        }
        debug_assert!(ev.arrival >= self.now);
        self.now = ev.arrival;
        self.deliveries += 1;
        if let Some(log) = self.log.as_mut() {
            log.push(Delivery {
                transmission: ev.transmission,
                sent_at: ev.sent_at,
                arrival: ev.arrival,
                seq: ev.seq,
                sender: self.ids[ev.sender],
                receiver: self.ids[ev.receiver],
                kind: ev.payload.kind(),
                summary: ev.payload.summary(),
            });
        }
        let r = ev.receiver;
        let from = self.ids[ev.sender];
        let mut outbox = Vec::new();
        let mut ctx = Context::new(self.ids[r], &self.neighbors[r], self.now, &mut outbox);
        let result = self.nodes[r].on_receive(&mut ctx, from, &ev.payload);
        result.map_err(|v| self.violation(r, v))?;
        self.flush(r, &mut outbox)?;
        Ok(Some(self.ids[r]))
    }

    pub fn into_nodes(self) -> Vec<(NodeId, A)> {
        self.ids.into_iter().zip(self.nodes).collect()
    }
}
