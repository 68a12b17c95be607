//! Distributed leader election over broadcast channels.
//!
//! Each node belongs to a fragment identified by `(size, candidate)`. Every
//! node remembers the latest fragment id heard from each neighbor. A node is
//! *ready* once every neighbor's latest id is at least its own fragment id
//! (equal means same fragment, greater means a larger foreign fragment) and
//! all of its children in the current fragment-PIF have reported. Ids only
//! ever grow, so readiness is stable until the fragment itself changes.
//!
//! A ready member sends FEEDBACK to its parent with its subtree count and the
//! largest foreign fragment seen below it, remembering which hop leads there.
//! When the candidate becomes ready the whole fragment is a local minimum and
//! the candidate decides:
//!
//! * no foreign fragment anywhere: it is the leader and announces itself;
//! * counted size `> X * max_neighbor.size`: it rebroadcasts INFO with the new
//!   id, which starts the next fragment-PIF;
//! * otherwise it sends ACTION along the stored path. The edge node at the end
//!   takes the foreign node it heard the winning id from as parent and
//!   broadcasts INFO carrying the winning id and the old id, which the
//!   joining members adopt.
//!
//! Initialization is the same machinery: every node broadcasts `(1, id)`.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::fragment::{merge_multiset, FragmentId, MergeEvent, WorkOutcome, WorkPhase};
use crate::sim::{
    Automaton, Context, DelayModel, Payload, ProtocolViolation, RunMetrics, SimError, SimTime,
    Simulation,
};
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElectionMessage {
    Info {
        new_id: FragmentId,
        /// Id of the fragment being renamed; `None` at initialization.
        former: Option<FragmentId>,
        parent: Option<NodeId>,
        /// Final leader announcement.
        announce: bool,
    },
    Feedback {
        target: NodeId,
        accumulated: u32,
        /// Largest foreign fragment seen in the subtree, if any.
        max_neighbor: Option<FragmentId>,
    },
    Action {
        target: NodeId,
        winner: FragmentId,
        former: FragmentId,
    },
}

impl Payload for ElectionMessage {
    fn kind(&self) -> &'static str {
        match self {
            ElectionMessage::Info { .. } => "INFO",
            ElectionMessage::Feedback { .. } => "FEEDBACK",
            ElectionMessage::Action { .. } => "ACTION",
        }
    }

    fn summary(&self) -> String {
        match self {
            ElectionMessage::Info {
                new_id,
                former,
                parent,
                announce,
            } => format!(
                "new={new_id} former={} parent={} announce={announce}",
                former.map_or_else(|| "-".into(), |f| f.to_string()),
                parent.map_or_else(|| "-".into(), |p| p.to_string()),
            ),
            ElectionMessage::Feedback {
                target,
                accumulated,
                max_neighbor,
            } => format!(
                "target={target} accumulated={accumulated} max={}",
                max_neighbor.map_or_else(|| "-".into(), |f| f.to_string())
            ),
            ElectionMessage::Action {
                target,
                winner,
                former,
            } => format!("target={target} winner={winner} former={former}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Candidate,
    Member,
    Leader,
}

/// Next hop toward the edge node adjacent to the best foreign fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnHop {
    /// This node is the edge node; the foreign node it heard the id from.
    Gateway(NodeId),
    Child(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SentKind {
    Init,
    Info,
    Feedback,
    Action,
    Announce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimedWorkPhase {
    #[serde(flatten)]
    pub phase: WorkPhase,
    pub time: f64,
}

#[derive(Debug, Clone, Copy)]
struct Report {
    accumulated: u32,
    max_neighbor: Option<FragmentId>,
}

#[derive(Debug, Clone)]
pub struct ElectionNode {
    id: NodeId,
    neighbors: Vec<NodeId>,
    x: f64,
    fragment: FragmentId,
    role: Role,
    parent: Option<NodeId>,
    /// Latest fragment id heard from each neighbor, indexed like `neighbors`.
    known: Vec<Option<FragmentId>>,
    child: Vec<bool>,
    reports: Vec<Option<Report>>,
    cycle_done: bool,
    return_hop: Option<ReturnHop>,
    leader: Option<NodeId>,
    sent: Vec<(SentKind, SimTime)>,
    phases: Vec<TimedWorkPhase>,
    last_init_delivery: SimTime,
}

impl ElectionNode {
    pub fn new(id: NodeId, neighbors: &[NodeId], x: f64) -> Self {
        let mut neighbors = neighbors.to_vec();
        neighbors.sort_unstable();
        let k = neighbors.len();
        Self {
            id,
            neighbors,
            x,
            fragment: FragmentId::singleton(id),
            role: Role::Candidate,
            parent: None,
            known: vec![None; k],
            child: vec![false; k],
            reports: vec![None; k],
            cycle_done: false,
            return_hop: None,
            leader: None,
            sent: Vec::new(),
            phases: Vec::new(),
            last_init_delivery: SimTime::ZERO,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn fragment(&self) -> FragmentId {
        self.fragment
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn leader(&self) -> Option<NodeId> {
        self.leader
    }

    pub fn return_hop(&self) -> Option<ReturnHop> {
        self.return_hop
    }

    pub fn known(&self, neighbor: NodeId) -> Option<FragmentId> {
        self.slot(neighbor).and_then(|k| self.known[k])
    }

    /// Work periods run by this node as candidate.
    pub fn phases(&self) -> &[TimedWorkPhase] {
        &self.phases
    }

    pub fn sent(&self) -> &[(SentKind, SimTime)] {
        &self.sent
    }

    pub fn last_init_delivery(&self) -> SimTime {
        self.last_init_delivery
    }

    fn slot(&self, neighbor: NodeId) -> Option<usize> {
        self.neighbors.binary_search(&neighbor).ok()
    }

    fn send(
        &mut self,
        ctx: &mut Context<'_, ElectionMessage>,
        kind: SentKind,
        msg: ElectionMessage,
    ) {
        self.sent.push((kind, ctx.now()));
        ctx.broadcast(msg);
    }

    fn reset_cycle(&mut self) {
        self.child.iter_mut().for_each(|c| *c = false);
        self.reports.iter_mut().for_each(|r| *r = None);
        self.cycle_done = false;
        self.return_hop = None;
    }

    fn ready(&self) -> bool {
        self.known
            .iter()
            .zip(&self.child)
            .zip(&self.reports)
            .all(|((known, &child), report)| {
                known.is_some_and(|k| k >= self.fragment) && (!child || report.is_some())
            })
    }

    /// Subtree count and the best foreign fragment with the hop toward it.
    fn collect(&self) -> (u32, Option<(FragmentId, ReturnHop)>) {
        let mut count = 1;
        let mut best: Option<(FragmentId, ReturnHop)> = None;
        for (k, &nb) in self.neighbors.iter().enumerate() {
            if let Some(f) = self.known[k].filter(|&f| f > self.fragment) {
                if best.is_none_or(|(b, _)| f > b) {
                    best = Some((f, ReturnHop::Gateway(nb)));
                }
            }
        }
        for (k, &nb) in self.neighbors.iter().enumerate() {
            if let Some(r) = self.reports[k] {
                count += r.accumulated;
                if let Some(f) = r.max_neighbor {
                    if best.is_none_or(|(b, _)| f > b) {
                        best = Some((f, ReturnHop::Child(nb)));
                    }
                }
            }
        }
        (count, best)
    }

    fn progress(&mut self, ctx: &mut Context<'_, ElectionMessage>) {
        if self.cycle_done || self.role == Role::Leader || !self.ready() {
            return;
        }
        let (count, best) = self.collect();
        self.cycle_done = true;
        if self.role == Role::Member {
            self.return_hop = best.map(|(_, hop)| hop);
            let parent = self.parent.expect("members always have a parent");
            self.send(
                ctx,
                SentKind::Feedback,
                ElectionMessage::Feedback {
                    target: parent,
                    accumulated: count,
                    max_neighbor: best.map(|(f, _)| f),
                },
            );
            return;
        }
        self.decide(ctx, count, best);
    }

    fn decide(
        &mut self,
        ctx: &mut Context<'_, ElectionMessage>,
        count: u32,
        best: Option<(FragmentId, ReturnHop)>,
    ) {
        let (id, entry) = (self.id, self.fragment);
        let record = |outcome| WorkPhase {
            candidate: id,
            entry,
            new_size: count,
            outcome,
        };
        match best {
            None => {
                let phase = record(WorkOutcome::Leader);
                self.phases.push(TimedWorkPhase {
                    phase,
                    time: ctx.now().as_f64(),
                });
                self.role = Role::Leader;
                self.leader = Some(self.id);
                self.send(
                    ctx,
                    SentKind::Announce,
                    ElectionMessage::Info {
                        new_id: entry,
                        former: None,
                        parent: None,
                        announce: true,
                    },
                );
            }
            Some((max, _)) if count as f64 > self.x * max.size as f64 => {
                let phase = record(WorkOutcome::Stay);
                self.phases.push(TimedWorkPhase {
                    phase,
                    time: ctx.now().as_f64(),
                });
                self.fragment = FragmentId {
                    size: count,
                    identity: self.id,
                };
                self.reset_cycle();
                self.send(
                    ctx,
                    SentKind::Info,
                    ElectionMessage::Info {
                        new_id: self.fragment,
                        former: Some(entry),
                        parent: None,
                        announce: false,
                    },
                );
            }
            Some((max, hop)) => {
                let phase = record(WorkOutcome::Join { joined: max });
                self.phases.push(TimedWorkPhase {
                    phase,
                    time: ctx.now().as_f64(),
                });
                self.role = Role::Member;
                self.return_hop = Some(hop);
                self.follow_path(ctx, max, entry);
            }
        }
    }

    /// Forwards ACTION one hop, or starts the join when this is the edge node.
    fn follow_path(
        &mut self,
        ctx: &mut Context<'_, ElectionMessage>,
        winner: FragmentId,
        former: FragmentId,
    ) {
        match self.return_hop {
            Some(ReturnHop::Child(next)) => self.send(
                ctx,
                SentKind::Action,
                ElectionMessage::Action {
                    target: next,
                    winner,
                    former,
                },
            ),
            Some(ReturnHop::Gateway(gateway)) => {
                self.fragment = winner;
                self.parent = Some(gateway);
                self.reset_cycle();
                self.send(
                    ctx,
                    SentKind::Info,
                    ElectionMessage::Info {
                        new_id: winner,
                        former: Some(former),
                        parent: Some(gateway),
                        announce: false,
                    },
                );
                self.progress(ctx);
            }
            None => unreachable!("callers check for a stored path"),
        }
    }

    fn on_info(
        &mut self,
        ctx: &mut Context<'_, ElectionMessage>,
        from: NodeId,
        new_id: FragmentId,
        former: Option<FragmentId>,
        parent: Option<NodeId>,
    ) -> Result<(), ProtocolViolation> {
        let k = self
            .slot(from)
            .ok_or_else(|| ProtocolViolation(format!("INFO from non-neighbor {from}")))?;
        if former.is_none() {
            self.last_init_delivery = ctx.now();
        }
        if let Some(prev) = self.known[k] {
            if new_id < prev {
                return Err(ProtocolViolation(format!(
                    "fragment id of {from} went back from {prev} to {new_id}"
                )));
            }
        }
        self.known[k] = Some(new_id);

        if former == Some(self.fragment) && new_id > self.fragment {
            // my fragment was renamed: adopt, take the sender as parent, pass it on
            if self.role == Role::Candidate {
                return Err(ProtocolViolation(
                    "candidate renamed by another node".into(),
                ));
            }
            self.fragment = new_id;
            self.parent = Some(from);
            self.reset_cycle();
            self.send(
                ctx,
                SentKind::Info,
                ElectionMessage::Info {
                    new_id,
                    former,
                    parent: Some(from),
                    announce: false,
                },
            );
        } else if new_id == self.fragment && parent == Some(self.id) {
            self.child[k] = true;
        }
        self.progress(ctx);
        Ok(())
    }

    fn on_feedback(
        &mut self,
        ctx: &mut Context<'_, ElectionMessage>,
        from: NodeId,
        accumulated: u32,
        max_neighbor: Option<FragmentId>,
    ) -> Result<(), ProtocolViolation> {
        let k = self
            .slot(from)
            .filter(|&k| self.child[k])
            .ok_or_else(|| ProtocolViolation(format!("FEEDBACK from {from}, not a child")))?;
        if self.reports[k].is_some() {
            return Err(ProtocolViolation(format!("second FEEDBACK from {from}")));
        }
        self.reports[k] = Some(Report {
            accumulated,
            max_neighbor,
        });
        self.progress(ctx);
        Ok(())
    }

    fn on_action(
        &mut self,
        ctx: &mut Context<'_, ElectionMessage>,
        winner: FragmentId,
        former: FragmentId,
    ) -> Result<(), ProtocolViolation> {
        if self.return_hop.is_none() {
            return Err(ProtocolViolation(
                "ACTION without a stored return path".into(),
            ));
        }
        if former != self.fragment {
            return Err(ProtocolViolation(format!(
                "ACTION for fragment {former} reached a node of {}",
                self.fragment
            )));
        }
        self.follow_path(ctx, winner, former);
        Ok(())
    }
}

impl Automaton for ElectionNode {
    type Message = ElectionMessage;

    fn on_init(&mut self, ctx: &mut Context<'_, ElectionMessage>) -> Result<(), ProtocolViolation> {
        self.send(
            ctx,
            SentKind::Init,
            ElectionMessage::Info {
                new_id: self.fragment,
                former: None,
                parent: None,
                announce: false,
            },
        );
        self.progress(ctx);
        Ok(())
    }

    fn on_receive(
        &mut self,
        ctx: &mut Context<'_, ElectionMessage>,
        from: NodeId,
        msg: &ElectionMessage,
    ) -> Result<(), ProtocolViolation> {
        match *msg {
            ElectionMessage::Info {
                new_id,
                announce: true,
                ..
            } => {
                if self.leader.is_none() {
                    self.leader = Some(new_id.identity);
                    self.send(ctx, SentKind::Announce, msg.clone());
                }
                Ok(())
            }
            ElectionMessage::Info {
                new_id,
                former,
                parent,
                ..
            } => self.on_info(ctx, from, new_id, former, parent),
            ElectionMessage::Feedback {
                target,
                accumulated,
                max_neighbor,
            } if target == self.id => self.on_feedback(ctx, from, accumulated, max_neighbor),
            ElectionMessage::Action {
                target,
                winner,
                former,
            } if target == self.id => self.on_action(ctx, winner, former),
            // addressed to someone else
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ElectionError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("growth factor must be a finite number > 1, got {0}")]
    GrowthFactor(f64),
    #[error("expected exactly one leader, found {0}")]
    LeaderCount(usize),
    #[error("invariant broken at t={time}: {reason}")]
    Invariant { time: f64, reason: String },
    #[error("node {node} believes the leader is {believed:?}, not {leader}")]
    Disagreement {
        node: NodeId,
        believed: Option<NodeId>,
        leader: NodeId,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ElectionOutcome {
    pub leader: NodeId,
    /// Last delivery of an initialization INFO.
    pub init_time: f64,
    /// Leader decision time minus `init_time`.
    pub time_excl_init: f64,
    pub decision_time: f64,
    /// All transmissions, initialization and announcement included.
    pub transmissions: u64,
    pub work_phases: Vec<TimedWorkPhase>,
    pub merges: Vec<MergeEvent>,
    #[serde(skip)]
    pub metrics: RunMetrics,
    #[serde(skip)]
    pub nodes: Vec<ElectionNode>,
}

impl ElectionOutcome {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn phases(&self) -> Vec<WorkPhase> {
        self.work_phases.iter().map(|p| p.phase).collect()
    }

    /// Transmissions after every node's initialization INFO.
    pub fn post_init_transmissions(&self) -> u64 {
        self.transmissions - self.nodes.len() as u64
    }

    /// Time-ordered merge trace, one `t,(size,id),(size,id)` line per join.
    pub fn trace_lines(&self) -> Vec<String> {
        self.work_phases
            .iter()
            .filter_map(|p| {
                p.phase
                    .merge()
                    .map(|m| format!("{:.6},{},{}", p.time, m.joiner, m.joined))
            })
            .collect()
    }
}

/// Validates the growth factor and wraps each node for the engine.
pub fn election_simulation(
    topology: &Topology,
    x: f64,
    delay: DelayModel,
) -> Result<Simulation<ElectionNode>, ElectionError> {
    if !(x.is_finite() && x > 1.0) {
        return Err(ElectionError::GrowthFactor(x));
    }
    Ok(Simulation::new(topology, delay, |id, nb| {
        ElectionNode::new(id, nb, x)
    })?)
}

/// Summarizes a drained election run, checking that exactly one leader is known everywhere.
pub fn finish_election(
    sim: Simulation<ElectionNode>,
    metrics: RunMetrics,
) -> Result<ElectionOutcome, ElectionError> {
    let nodes: Vec<ElectionNode> = sim.into_nodes().into_iter().map(|(_, n)| n).collect();
    let leaders: Vec<&ElectionNode> = nodes.iter().filter(|n| n.role == Role::Leader).collect();
    if leaders.len() != 1 {
        return Err(ElectionError::LeaderCount(leaders.len()));
    }
    let leader = leaders[0].id;
    if let Some(n) = nodes.iter().find(|n| n.leader != Some(leader)) {
        return Err(ElectionError::Disagreement {
            node: n.id,
            believed: n.leader,
            leader,
        });
    }
    let decision_time = leaders[0]
        .phases
        .last()
        .map(|p| p.time)
        .expect("leader records its final period");
    let init_time = nodes
        .iter()
        .map(|n| n.last_init_delivery)
        .max()
        .unwrap_or(SimTime::ZERO)
        .as_f64();

    let mut work_phases: Vec<TimedWorkPhase> = nodes
        .iter()
        .flat_map(|n| n.phases.iter().copied())
        .collect();
    work_phases.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.phase.candidate.cmp(&b.phase.candidate))
    });
    let merges = merge_multiset(work_phases.iter().map(|p| &p.phase));
    Ok(ElectionOutcome {
        leader,
        init_time,
        time_excl_init: decision_time - init_time,
        decision_time,
        transmissions: metrics.transmissions,
        work_phases,
        merges,
        metrics,
        nodes,
    })
}

/// Runs the election on `topology` until the queue drains.
pub fn run_election(
    topology: &Topology,
    x: f64,
    delay: DelayModel,
) -> Result<ElectionOutcome, ElectionError> {
    let mut sim = election_simulation(topology, x, delay)?;
    let metrics = sim.run()?;
    finish_election(sim, metrics)
}

/// Like [`run_election`], but inspects the global state at every decision:
/// the candidate's count equals its fragment's membership and every foreign
/// fragment adjacent to it is strictly larger, so no two adjacent fragments
/// ever work at once.
pub fn run_election_checked(
    topology: &Topology,
    x: f64,
    delay: DelayModel,
) -> Result<ElectionOutcome, ElectionError> {
    let mut sim = election_simulation(topology, x, delay)?;
    let adjacency = topology.neighbor_map();
    let mut seen: BTreeMap<NodeId, usize> = BTreeMap::new();
    sim.init()?;
    let mut touched: Vec<NodeId> = sim.node_ids().to_vec();
    loop {
        for id in touched.drain(..) {
            let node = sim.node(id).expect("engine node");
            let done = seen.entry(id).or_insert(0);
            for p in &node.phases()[*done..] {
                check_decision(&sim, &adjacency, p)?;
            }
            *done = node.phases().len();
        }
        match sim.step()? {
            Some(id) => touched.push(id),
            None => break,
        }
    }
    let metrics = sim.metrics();
    finish_election(sim, metrics)
}

fn check_decision(
    sim: &Simulation<ElectionNode>,
    adjacency: &BTreeMap<NodeId, Vec<NodeId>>,
    p: &TimedWorkPhase,
) -> Result<(), ElectionError> {
    let entry = p.phase.entry;
    let in_fragment =
        |v: NodeId| v == p.phase.candidate || sim.node(v).is_some_and(|n| n.fragment == entry);
    let broken = |reason: String| ElectionError::Invariant {
        time: p.time,
        reason,
    };
    let members: Vec<NodeId> = adjacency
        .keys()
        .copied()
        .filter(|&v| in_fragment(v))
        .collect();
    if members.len() != p.phase.new_size as usize {
        return Err(broken(format!(
            "{} counted {} members of {entry}, found {}",
            p.phase.candidate,
            p.phase.new_size,
            members.len()
        )));
    }
    for &u in &members {
        for &v in &adjacency[&u] {
            let f = sim.node(v).expect("engine node").fragment;
            if !in_fragment(v) && f <= entry {
                return Err(broken(format!("{entry} worked next to {f} (edge {u}-{v})")));
            }
        }
    }
    Ok(())
}

/// Checks that each node's transmissions after initialization split into
/// periods of the form `FEEDBACK? ACTION? INFO`, with one trailing period
/// that may end in the leader announcement instead.
pub fn periods_well_formed(sent: &[(SentKind, SimTime)]) -> bool {
    let mut kinds = sent.iter().map(|&(k, _)| k);
    if kinds.next() != Some(SentKind::Init) {
        return false;
    }
    // 0: start of period, 1: after FEEDBACK, 2: after ACTION, 3: announced
    let mut stage = 0;
    for k in kinds {
        stage = match (stage, k) {
            (0, SentKind::Feedback) => 1,
            (0 | 1, SentKind::Action) => 2,
            (0..=2, SentKind::Info) => 0,
            (0..=2, SentKind::Announce) => 3,
            _ => return false,
        };
    }
    true
}

/// Per-node leader beliefs, handy for displays.
pub fn leader_beliefs(outcome: &ElectionOutcome) -> BTreeMap<NodeId, Option<NodeId>> {
    outcome.nodes.iter().map(|n| (n.id, n.leader)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deliver(node: &mut ElectionNode, from: u32, msg: ElectionMessage) -> Vec<ElectionMessage> {
        let neighbors = node.neighbors.clone();
        let mut out = Vec::new();
        let mut ctx = Context::new(node.id, &neighbors, SimTime(1.0), &mut out);
        node.on_receive(&mut ctx, NodeId(from), &msg).unwrap();
        out
    }

    fn init(node: &mut ElectionNode) -> Vec<ElectionMessage> {
        let neighbors = node.neighbors.clone();
        let mut out = Vec::new();
        let mut ctx = Context::new(node.id, &neighbors, SimTime::ZERO, &mut out);
        node.on_init(&mut ctx).unwrap();
        out
    }

    fn info(size: u32, identity: u32) -> ElectionMessage {
        ElectionMessage::Info {
            new_id: FragmentId::new(size, identity),
            former: None,
            parent: None,
            announce: false,
        }
    }

    fn nodes(ids: &[u32]) -> Vec<NodeId> {
        ids.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn isolated_node_leads_immediately() {
        let t = Topology::with_edges(1, &[]).unwrap();
        let out = run_election(&t, 3.0, DelayModel::unit()).unwrap();
        assert_eq!(out.leader, NodeId(1));
        assert_eq!(out.time_excl_init, 0.0);
        // init INFO and announcement, neither heard by anyone
        assert_eq!(out.transmissions, 2);
    }

    #[test]
    fn pair_elects_larger_identity() {
        let t = Topology::with_edges(2, &[(1, 2)]).unwrap();
        let out = run_election(&t, 3.0, DelayModel::unit()).unwrap();
        assert_eq!(out.leader, NodeId(2));
        assert_eq!(
            out.merges,
            vec![MergeEvent {
                joiner: FragmentId::new(1, 1),
                joiner_size: 1,
                joined: FragmentId::new(1, 2),
            }]
        );
        let last = out.work_phases.last().unwrap().phase;
        assert_eq!(last.outcome, WorkOutcome::Leader);
        assert_eq!(last.new_size, 2);
    }

    #[test]
    fn triangle_has_one_local_minimum_after_init() {
        let mut started = 0;
        for id in 1..=3 {
            let others: Vec<u32> = (1..=3).filter(|&o| o != id).collect();
            let mut node = ElectionNode::new(NodeId(id), &nodes(&others), 3.0);
            init(&mut node);
            for &o in &others {
                deliver(&mut node, o, info(1, o));
            }
            if !node.phases().is_empty() {
                started += 1;
                assert_eq!(id, 1);
            }
        }
        assert_eq!(started, 1);
    }

    #[test]
    fn duplicate_info_from_fragment_is_flag_only() {
        // node 3 in fragment (1,9) hears the rename from two members
        let mut node = ElectionNode::new(NodeId(3), &nodes(&[1, 2]), 3.0);
        node.fragment = FragmentId::new(1, 9);
        node.role = Role::Member;
        node.parent = Some(NodeId(1));
        let rename = |parent| ElectionMessage::Info {
            new_id: FragmentId::new(5, 9),
            former: Some(FragmentId::new(1, 9)),
            parent: Some(NodeId(parent)),
            announce: false,
        };
        assert_eq!(deliver(&mut node, 1, rename(9)).len(), 1);
        // the second one only completes the neighborhood: straight to FEEDBACK
        let out = deliver(&mut node, 2, rename(1));
        assert!(matches!(
            out[..],
            [ElectionMessage::Feedback {
                target: NodeId(1),
                accumulated: 1,
                ..
            }]
        ));
        assert_eq!(node.fragment(), FragmentId::new(5, 9));
        assert_eq!(node.parent(), Some(NodeId(1)));
    }

    #[test]
    fn best_foreign_fragment_uses_lexicographic_order() {
        let mut node = ElectionNode::new(NodeId(1), &nodes(&[2, 3]), 3.0);
        node.fragment = FragmentId::new(1, 1);
        node.role = Role::Member;
        node.parent = Some(NodeId(4));
        deliver(&mut node, 2, info(3, 7));
        let out = deliver(&mut node, 3, info(3, 9));
        assert_eq!(
            out,
            vec![ElectionMessage::Feedback {
                target: NodeId(4),
                accumulated: 1,
                max_neighbor: Some(FragmentId::new(3, 9)),
            }]
        );
        assert_eq!(node.return_hop(), Some(ReturnHop::Gateway(NodeId(3))));

        let mut node = ElectionNode::new(NodeId(1), &nodes(&[2, 3]), 3.0);
        node.role = Role::Member;
        node.parent = Some(NodeId(4));
        deliver(&mut node, 2, info(4, 2));
        let out = deliver(&mut node, 3, info(3, 9));
        assert!(matches!(
            out[0],
            ElectionMessage::Feedback {
                max_neighbor: Some(f),
                ..
            } if f == FragmentId::new(4, 2)
        ));
    }

    fn member_with_children(reports: &[(u32, u32, FragmentId)], own: FragmentId) -> ElectionNode {
        // neighbors: children 2,3 plus parent 1 and a foreign node 9
        let mut node = ElectionNode::new(NodeId(5), &nodes(&[1, 2, 3, 9]), 3.0);
        node.fragment = FragmentId::new(1, 1);
        node.role = Role::Member;
        node.parent = Some(NodeId(1));
        for nb in [1, 2, 3] {
            let k = node.slot(NodeId(nb)).unwrap();
            node.known[k] = Some(node.fragment);
        }
        let k = node.slot(NodeId(9)).unwrap();
        node.known[k] = Some(own);
        for &(child, _, _) in reports {
            let k = node.slot(NodeId(child)).unwrap();
            node.child[k] = true;
        }
        node
    }

    #[test]
    fn feedback_accumulates_children() {
        let mut node = member_with_children(
            &[(2, 2, FragmentId::new(2, 9)), (3, 3, FragmentId::new(2, 9))],
            FragmentId::new(2, 9),
        );
        let fb = |acc| ElectionMessage::Feedback {
            target: NodeId(5),
            accumulated: acc,
            max_neighbor: None,
        };
        assert!(deliver(&mut node, 2, fb(2)).is_empty());
        let out = deliver(&mut node, 3, fb(3));
        assert!(matches!(
            out[0],
            ElectionMessage::Feedback {
                accumulated: 6,
                target: NodeId(1),
                ..
            }
        ));
    }

    #[test]
    fn return_path_follows_maximal_report() {
        let mut node = member_with_children(
            &[(2, 0, FragmentId::new(0, 0)), (3, 0, FragmentId::new(0, 0))],
            FragmentId::new(2, 9),
        );
        let fb = |max| ElectionMessage::Feedback {
            target: NodeId(5),
            accumulated: 1,
            max_neighbor: Some(max),
        };
        deliver(&mut node, 2, fb(FragmentId::new(5, 4)));
        let out = deliver(&mut node, 3, fb(FragmentId::new(5, 6)));
        assert!(matches!(
            out[0],
            ElectionMessage::Feedback { max_neighbor: Some(f), .. } if f == FragmentId::new(5, 6)
        ));
        assert_eq!(node.return_hop(), Some(ReturnHop::Child(NodeId(3))));
    }

    fn candidate_deciding(
        count_children: u32,
        max: FragmentId,
    ) -> (ElectionNode, Vec<ElectionMessage>) {
        // candidate 5 with one child 2 reporting `count_children` and the max neighbor
        let mut node = ElectionNode::new(NodeId(5), &nodes(&[2]), 3.0);
        node.fragment = FragmentId::new(1, 5);
        let k = node.slot(NodeId(2)).unwrap();
        node.known[k] = Some(node.fragment);
        node.child[k] = true;
        let out = deliver(
            &mut node,
            2,
            ElectionMessage::Feedback {
                target: NodeId(5),
                accumulated: count_children,
                max_neighbor: Some(max),
            },
        );
        (node, out)
    }

    #[test]
    fn candidate_stays_active_above_threshold() {
        let (node, out) = candidate_deciding(6, FragmentId::new(2, 8));
        assert_eq!(node.phases()[0].phase.outcome, WorkOutcome::Stay);
        assert_eq!(node.fragment(), FragmentId::new(7, 5));
        assert_eq!(
            out,
            vec![ElectionMessage::Info {
                new_id: FragmentId::new(7, 5),
                former: Some(FragmentId::new(1, 5)),
                parent: None,
                announce: false,
            }]
        );
    }

    #[test]
    fn candidate_joins_at_threshold() {
        let (node, out) = candidate_deciding(5, FragmentId::new(2, 8));
        assert_eq!(
            node.phases()[0].phase.outcome,
            WorkOutcome::Join {
                joined: FragmentId::new(2, 8)
            }
        );
        assert_eq!(node.role(), Role::Member);
        assert!(matches!(
            out[0],
            ElectionMessage::Action {
                target: NodeId(2),
                ..
            }
        ));
    }

    #[test]
    fn candidate_without_foreign_fragments_leads() {
        let mut node = ElectionNode::new(NodeId(5), &nodes(&[2]), 3.0);
        let k = node.slot(NodeId(2)).unwrap();
        node.known[k] = Some(node.fragment);
        node.child[k] = true;
        let out = deliver(
            &mut node,
            2,
            ElectionMessage::Feedback {
                target: NodeId(5),
                accumulated: 1,
                max_neighbor: None,
            },
        );
        assert_eq!(node.role(), Role::Leader);
        assert!(matches!(
            out[0],
            ElectionMessage::Info { announce: true, .. }
        ));
    }

    #[test]
    fn action_without_path_is_a_violation() {
        let mut node = ElectionNode::new(NodeId(2), &nodes(&[1]), 3.0);
        let neighbors = node.neighbors.clone();
        let mut out = Vec::new();
        let mut ctx = Context::new(node.id, &neighbors, SimTime::ZERO, &mut out);
        let msg = ElectionMessage::Action {
            target: NodeId(2),
            winner: FragmentId::new(1, 3),
            former: FragmentId::new(1, 2),
        };
        assert!(node.on_receive(&mut ctx, NodeId(1), &msg).is_err());
    }

    #[test]
    fn edge_candidate_joins_without_forwarding() {
        let t = Topology::with_edges(2, &[(1, 2)]).unwrap();
        let out = run_election(&t, 3.0, DelayModel::unit()).unwrap();
        let sent = out.nodes[0].sent();
        assert!(sent.iter().all(|(k, _)| *k != SentKind::Action));
    }

    #[test]
    fn string_matches_oracle_and_period_pattern() {
        let t = Topology::path(&[1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let out = run_election(&t, 3.0, DelayModel::unit()).unwrap();
        let oracle = crate::oracle::oracle_run(&t, 3.0).unwrap();
        assert_eq!(out.leader, oracle.leader);
        assert_eq!(out.merges, merge_multiset(&oracle.work_phases));
        for n in &out.nodes {
            assert!(periods_well_formed(n.sent()), "node {}", n.id);
        }
    }

    #[test]
    fn two_hop_path_sends_two_actions_then_info() {
        // fragment (1,4) = {4,1,2} joins (1,5) through edge node 2
        let t = Topology::path(&[4, 1, 2, 3, 5]).unwrap();
        let out = run_election(&t, 3.0, DelayModel::unit()).unwrap();
        let actions: Vec<(NodeId, f64)> = out
            .nodes
            .iter()
            .flat_map(|n| {
                n.sent()
                    .iter()
                    .filter(|(k, _)| *k == SentKind::Action)
                    .map(move |(_, t)| (n.id(), t.as_f64()))
            })
            .collect();
        assert_eq!(actions.len(), 2);
        let mut senders: Vec<NodeId> = actions.iter().map(|a| a.0).collect();
        senders.sort();
        assert_eq!(senders, nodes(&[1, 4]));
        let last_action = actions.iter().map(|a| a.1).fold(0.0, f64::max);
        let edge = &out.nodes[1];
        assert_eq!(edge.id(), NodeId(2));
        assert!(edge
            .sent()
            .iter()
            .any(|(k, t)| *k == SentKind::Info && t.as_f64() > last_action));
    }

    #[test]
    fn rejects_growth_factor_at_most_one() {
        let t = Topology::complete(3);
        assert!(matches!(
            run_election(&t, 1.0, DelayModel::unit()),
            Err(ElectionError::GrowthFactor(_))
        ));
    }

    #[test]
    fn period_pattern_checker() {
        let t = SimTime::ZERO;
        use SentKind::*;
        assert!(periods_well_formed(&[
            (Init, t),
            (Feedback, t),
            (Action, t),
            (Info, t),
            (Feedback, t),
            (Announce, t)
        ]));
        assert!(!periods_well_formed(&[
            (Init, t),
            (Action, t),
            (Feedback, t)
        ]));
        assert!(!periods_well_formed(&[
            (Init, t),
            (Feedback, t),
            (Feedback, t)
        ]));
        assert!(!periods_well_formed(&[(Info, t)]));
    }
}
