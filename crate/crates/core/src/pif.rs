//! Propagation of information with feedback over a broadcast network.
//!
//! The source broadcasts once. Every other node adopts the first sender it
//! hears as its parent and rebroadcasts once. A node sends one feedback to
//! its parent after hearing every neighbor: a child's rebroadcast does not
//! count at its parent, only the child's feedback does. The source terminates
//! once it has heard every neighbor in the same sense.
//!
//! Several sources may start independently; state is kept per source.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::sim::{
    Automaton, Context, DelayModel, Payload, ProtocolViolation, RunMetrics, SimError, SimTime,
    Simulation,
};
use crate::topology::{NodeId, Topology};

/// `MSG(target, l, parent)` plus the source it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PifMessage {
    pub source: NodeId,
    /// `None` for the propagation broadcast, the parent for feedback.
    pub target: Option<NodeId>,
    pub sender: NodeId,
    pub parent: Option<NodeId>,
}

impl Payload for PifMessage {
    fn kind(&self) -> &'static str {
        if self.target.is_some() {
            "FEEDBACK"
        } else {
            "MSG"
        }
    }

    fn summary(&self) -> String {
        let opt = |v: Option<NodeId>| v.map_or_else(|| "0".to_owned(), |id| id.to_string());
        format!(
            "source={} target={} l={} parent={}",
            self.source,
            opt(self.target),
            self.sender,
            opt(self.parent)
        )
    }
}

/// Per-source propagation state of one node.
#[derive(Debug, Clone, Default)]
pub struct PifSession {
    pub is_source: bool,
    pub parent: Option<NodeId>,
    /// The `N(l)` flags.
    pub heard: BTreeSet<NodeId>,
    pub broadcasts: u32,
    pub feedbacks: u32,
    pub terminated_at: Option<SimTime>,
}

#[derive(Debug, Clone)]
pub struct PifNode {
    id: NodeId,
    neighbors: Vec<NodeId>,
    starts: bool,
    sessions: BTreeMap<NodeId, PifSession>,
}

impl PifNode {
    pub fn new(id: NodeId, neighbors: &[NodeId], starts: bool) -> Self {
        Self {
            id,
            neighbors: neighbors.to_vec(),
            starts,
            sessions: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn session(&self, source: NodeId) -> Option<&PifSession> {
        self.sessions.get(&source)
    }

    pub fn transmissions(&self) -> u32 {
        self.sessions
            .values()
            .map(|s| s.broadcasts + s.feedbacks)
            .sum()
    }

    /// Handles `START`. Returns false when this node already started.
    pub fn start(&mut self, ctx: &mut Context<'_, PifMessage>) -> bool {
        if self.sessions.contains_key(&self.id) {
            return false;
        }
        self.sessions.insert(
            self.id,
            PifSession {
                is_source: true,
                broadcasts: 1,
                ..Default::default()
            },
        );
        ctx.broadcast(PifMessage {
            source: self.id,
            target: None,
            sender: self.id,
            parent: None,
        });
        self.check_complete(self.id, ctx);
        true
    }

    pub fn receive(&mut self, ctx: &mut Context<'_, PifMessage>, msg: &PifMessage) {
        if msg.target.is_some_and(|t| t != self.id) {
            return;
        }
        // a child's own broadcast: wait for its feedback instead
        if msg.parent == Some(self.id) && msg.target != Some(self.id) {
            return;
        }
        let id = self.id;
        let session = self.sessions.entry(msg.source).or_default();
        session.heard.insert(msg.sender);
        if !session.is_source && session.broadcasts == 0 {
            session.parent = Some(msg.sender);
            session.broadcasts = 1;
            ctx.broadcast(PifMessage {
                source: msg.source,
                target: None,
                sender: id,
                parent: Some(msg.sender),
            });
        }
        self.check_complete(msg.source, ctx);
    }

    fn check_complete(&mut self, source: NodeId, ctx: &mut Context<'_, PifMessage>) {
        let id = self.id;
        let Some(session) = self.sessions.get_mut(&source) else {
            return;
        };
        if session.heard.len() < self.neighbors.len() {
            return;
        }
        if session.is_source {
            session.terminated_at.get_or_insert(ctx.now());
        } else if session.feedbacks == 0 {
            session.feedbacks = 1;
            ctx.broadcast(PifMessage {
                source,
                target: session.parent,
                sender: id,
                parent: session.parent,
            });
        }
    }
}

impl Automaton for PifNode {
    type Message = PifMessage;

    fn on_init(&mut self, ctx: &mut Context<'_, PifMessage>) -> Result<(), ProtocolViolation> {
        if self.starts {
            self.start(ctx);
        }
        Ok(())
    }

    fn on_receive(
        &mut self,
        ctx: &mut Context<'_, PifMessage>,
        _from: NodeId,
        msg: &PifMessage,
    ) -> Result<(), ProtocolViolation> {
        self.receive(ctx, msg);
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PifError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("source {0} is not part of the topology")]
    UnknownSource(NodeId),
    #[error("propagation from {0} has not terminated")]
    NotTerminated(NodeId),
    #[error("node {node} never joined the propagation from {origin}")]
    Unreached { node: NodeId, origin: NodeId },
}

/// `(child, parent)` pairs of the tree spanned by a terminated propagation.
pub fn pif_extract_tree<'a>(
    nodes: impl IntoIterator<Item = &'a PifNode>,
    source: NodeId,
) -> Result<Vec<(NodeId, NodeId)>, PifError> {
    let mut tree = Vec::new();
    let mut found = false;
    let mut unreached = None;
    for node in nodes {
        match node.session(source) {
            Some(s) if s.is_source => {
                if s.terminated_at.is_none() {
                    return Err(PifError::NotTerminated(source));
                }
                found = true;
            }
            Some(PifSession {
                parent: Some(p), ..
            }) => tree.push((node.id, *p)),
            _ => unreached = unreached.or(Some(node.id)),
        }
    }
    if !found {
        return Err(PifError::NotTerminated(source));
    }
    if let Some(node) = unreached {
        return Err(PifError::Unreached {
            node,
            origin: source,
        });
    }
    tree.sort_unstable();
    Ok(tree)
}

#[derive(Debug, Clone, Serialize)]
pub struct PifOutcome {
    /// Time at which the source heard its last feedback.
    pub time: f64,
    pub transmissions: u64,
    pub tree: Vec<[u32; 2]>,
    #[serde(skip)]
    pub metrics: RunMetrics,
    #[serde(skip)]
    pub nodes: Vec<PifNode>,
}

/// Runs a single-source propagation to quiescence.
pub fn run_pif(
    topology: &Topology,
    source: NodeId,
    delay: DelayModel,
) -> Result<PifOutcome, PifError> {
    if !topology.nodes().contains(&source) {
        return Err(PifError::UnknownSource(source));
    }
    let mut sim = Simulation::new(topology, delay, |id, nb| PifNode::new(id, nb, id == source))?;
    let metrics = sim.run()?;
    let nodes: Vec<PifNode> = sim.into_nodes().into_iter().map(|(_, n)| n).collect();
    let tree = pif_extract_tree(&nodes, source)?;
    let time = nodes
        .iter()
        .find_map(|n| n.session(source).filter(|s| s.is_source))
        .and_then(|s| s.terminated_at)
        .ok_or(PifError::NotTerminated(source))?;
    Ok(PifOutcome {
        time: time.as_f64(),
        transmissions: metrics.transmissions,
        tree: tree.iter().map(|&(c, p)| [c.0, p.0]).collect(),
        metrics,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx_run<R>(
        node: &mut PifNode,
        neighbors: &[NodeId],
        f: impl FnOnce(&mut PifNode, &mut Context<'_, PifMessage>) -> R,
    ) -> (R, Vec<PifMessage>) {
        let mut out = Vec::new();
        let mut ctx = Context::new(node.id, neighbors, SimTime::ZERO, &mut out);
        let r = f(node, &mut ctx);
        (r, out)
    }

    #[test]
    fn single_node_terminates_with_empty_tree() {
        let t = Topology::with_edges(1, &[]).unwrap();
        let out = run_pif(&t, NodeId(1), DelayModel::unit()).unwrap();
        assert_eq!(out.time, 0.0);
        assert!(out.tree.is_empty());
        assert_eq!(out.transmissions, 1);
    }

    #[test]
    fn two_nodes_use_three_transmissions() {
        // source broadcast, b's broadcast, b's feedback
        let t = Topology::with_edges(2, &[(1, 2)]).unwrap();
        let out = run_pif(&t, NodeId(1), DelayModel::unit()).unwrap();
        assert_eq!(out.transmissions, 3);
        assert_eq!(out.tree, vec![[2, 1]]);
        assert!(out.time > 2.0 && out.time < 2.0 + 1e-9);
    }

    #[test]
    fn restart_is_ignored() {
        let nb = [NodeId(2)];
        let mut node = PifNode::new(NodeId(1), &nb, true);
        let (first, out1) = ctx_run(&mut node, &nb, |n, c| n.start(c));
        let (second, out2) = ctx_run(&mut node, &nb, |n, c| n.start(c));
        assert!(first && !second);
        assert_eq!(out1.len(), 1);
        assert!(out2.is_empty());
    }

    #[test]
    fn leaf_sends_one_feedback_then_nothing() {
        let nb = [NodeId(1)];
        let mut leaf = PifNode::new(NodeId(2), &nb, false);
        let msg = PifMessage {
            source: NodeId(1),
            target: None,
            sender: NodeId(1),
            parent: None,
        };
        let (_, out) = ctx_run(&mut leaf, &nb, |n, c| n.receive(c, &msg));
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].target, Some(NodeId(1)));
        let (_, again) = ctx_run(&mut leaf, &nb, |n, c| n.receive(c, &msg));
        assert!(again.is_empty());
        assert_eq!(leaf.transmissions(), 2);
    }

    #[test]
    fn string_of_three() {
        let t = Topology::path(&[1, 2, 3]).unwrap();
        let out = run_pif(&t, NodeId(1), DelayModel::unit()).unwrap();
        assert_eq!(out.tree, vec![[2, 1], [3, 2]]);
        assert!(out.time <= 6.0);
        assert!(out.transmissions <= 6);
    }

    #[test]
    fn complete_graph_tree_is_a_star() {
        let t = Topology::complete(4);
        let out = run_pif(&t, NodeId(1), DelayModel::unit()).unwrap();
        assert_eq!(out.tree, vec![[2, 1], [3, 1], [4, 1]]);
    }

    #[test]
    fn feedback_for_someone_else_is_ignored() {
        let nb = [NodeId(1), NodeId(3)];
        let mut node = PifNode::new(NodeId(2), &nb, false);
        let foreign = PifMessage {
            source: NodeId(1),
            target: Some(NodeId(1)),
            sender: NodeId(3),
            parent: Some(NodeId(1)),
        };
        let (_, out) = ctx_run(&mut node, &nb, |n, c| n.receive(c, &foreign));
        assert!(out.is_empty());
        assert!(node.session(NodeId(1)).is_none());
    }

    #[test]
    fn tree_before_termination_is_an_error() {
        let nb = [NodeId(2)];
        let mut node = PifNode::new(NodeId(1), &nb, true);
        ctx_run(&mut node, &nb, |n, c| n.start(c));
        assert!(matches!(
            pif_extract_tree([&node], NodeId(1)),
            Err(PifError::NotTerminated(_))
        ));
    }

    #[test]
    fn concurrent_sources_are_independent() {
        let t = Topology::path(&[1, 2, 3, 4]).unwrap();
        let mut sim = Simulation::new(&t, DelayModel::uniform(4), |id, nb| {
            PifNode::new(id, nb, id == NodeId(1) || id == NodeId(4))
        })
        .unwrap();
        let m = sim.run().unwrap();
        let nodes: Vec<PifNode> = sim.into_nodes().into_iter().map(|(_, n)| n).collect();
        assert_eq!(pif_extract_tree(&nodes, NodeId(1)).unwrap().len(), 3);
        assert_eq!(pif_extract_tree(&nodes, NodeId(4)).unwrap().len(), 3);
        assert_eq!(m.transmissions, 2 * (2 * 4 - 1));
    }
}
