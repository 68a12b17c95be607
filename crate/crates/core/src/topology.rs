//! Graph model for broadcast networks and the random topology generator.
//!
//! A topology is an undirected, connected graph whose edges mean "these two
//! nodes hear each other's transmissions". Generated topologies start from a
//! simple base shape with randomly permuted labels and then receive a fixed
//! fraction of the remaining possible edges, sampled without replacement.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identity of a node. Identities are distinct within one topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseShape {
    String,
    Ring,
    BinaryTree,
    Complete,
}

impl BaseShape {
    pub const ALL: [BaseShape; 4] = [
        BaseShape::String,
        BaseShape::Ring,
        BaseShape::BinaryTree,
        BaseShape::Complete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaseShape::String => "string",
            BaseShape::Ring => "ring",
            BaseShape::BinaryTree => "binary_tree",
            BaseShape::Complete => "complete",
        }
    }

    /// Edges of the shape over positions `0..n`.
    fn position_edges(self, n: usize) -> Vec<(usize, usize)> {
        match self {
            BaseShape::String => (1..n).map(|i| (i - 1, i)).collect(),
            BaseShape::Ring => {
                let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
                if n >= 3 {
                    edges.push((0, n - 1));
                }
                edges
            }
            // heap layout: position i hangs below (i - 1) / 2
            BaseShape::BinaryTree => (1..n).map(|i| ((i - 1) / 2, i)).collect(),
            BaseShape::Complete => (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .collect(),
        }
    }
}

impl fmt::Display for BaseShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaseShape {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "string" => Ok(BaseShape::String),
            "ring" => Ok(BaseShape::Ring),
            "binary_tree" => Ok(BaseShape::BinaryTree),
            "complete" => Ok(BaseShape::Complete),
            other => Err(TopologyError::UnknownShape(other.to_owned())),
        }
    }
}

/// How a topology was produced. Hand-written topologies carry none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyMeta {
    pub base_shape: BaseShape,
    pub connectivity: f64,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("topology must contain at least one node")]
    Empty,
    #[error("connectivity {0} is outside [0, 1]")]
    Connectivity(f64),
    #[error("unknown base shape `{0}`")]
    UnknownShape(String),
    #[error("node id {0} appears more than once")]
    DuplicateNode(NodeId),
    #[error("edge ({0}, {0}) is a self-loop")]
    SelfLoop(NodeId),
    #[error("edge ({0}, {1}) is listed more than once")]
    DuplicateEdge(NodeId, NodeId),
    #[error("edge ({0}, {1}) references a node that is not in the graph")]
    UnknownEndpoint(NodeId, NodeId),
    #[error("graph is disconnected: node {0} is unreachable from node {1}")]
    Disconnected(NodeId, NodeId),
    #[error("malformed topology file: {0}")]
    Format(String),
}

/// An undirected broadcast graph.
///
/// Fields are kept raw so that [`Topology::validate`] can report exactly
/// which invariant a hand-built graph violates. Everything that consumes a
/// topology validates it first.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    meta: Option<TopologyMeta>,
}

impl Topology {
    /// Builds a topology without checking it.
    pub fn from_parts(
        nodes: Vec<NodeId>,
        edges: Vec<(NodeId, NodeId)>,
        meta: Option<TopologyMeta>,
    ) -> Self {
        Self { nodes, edges, meta }
    }

    /// Builds and validates a topology over nodes `1..=n`.
    pub fn with_edges(n: u32, edges: &[(u32, u32)]) -> Result<Self, TopologyError> {
        let t = Self::from_parts(
            (1..=n).map(NodeId).collect(),
            edges.iter().map(|&(u, v)| (NodeId(u), NodeId(v))).collect(),
            None,
        );
        t.validate()?;
        Ok(t.normalized())
    }

    pub fn complete(n: u32) -> Self {
        let edges: Vec<_> = (1..=n)
            .flat_map(|u| (u + 1..=n).map(move |v| (u, v)))
            .collect();
        Self::with_edges(n, &edges).expect("complete graph is valid")
    }

    /// A path `ids[0] - ids[1] - ... - ids[k-1]`, nodes must be a permutation of `1..=k`.
    pub fn path(ids: &[u32]) -> Result<Self, TopologyError> {
        let edges: Vec<_> = ids.windows(2).map(|w| (w[0], w[1])).collect();
        Self::with_edges(ids.len() as u32, &edges)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn meta(&self) -> Option<&TopologyMeta> {
        self.meta.as_ref()
    }

    pub fn max_id(&self) -> Option<NodeId> {
        self.nodes.iter().copied().max()
    }

    /// Checks distinct ids, no self-loops or duplicate edges, and connectivity.
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut ids = BTreeSet::new();
        for &id in &self.nodes {
            if !ids.insert(id) {
                return Err(TopologyError::DuplicateNode(id));
            }
        }
        let mut seen = BTreeSet::new();
        for &(u, v) in &self.edges {
            if u == v {
                return Err(TopologyError::SelfLoop(u));
            }
            if !ids.contains(&u) || !ids.contains(&v) {
                return Err(TopologyError::UnknownEndpoint(u, v));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(TopologyError::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        let adjacency = self.neighbor_map();
        let root = self.nodes[0];
        let mut reached = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[&u] {
                if reached.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        if let Some(&missing) = self.nodes.iter().find(|id| !reached.contains(id)) {
            return Err(TopologyError::Disconnected(missing, root));
        }
        Ok(())
    }

    /// Sorted neighbor lists keyed by node.
    pub fn neighbor_map(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut map: BTreeMap<NodeId, Vec<NodeId>> =
            self.nodes.iter().map(|&id| (id, Vec::new())).collect();
        for &(u, v) in &self.edges {
            if let Some(list) = map.get_mut(&u) {
                list.push(v);
            }
            if let Some(list) = map.get_mut(&v) {
                list.push(u);
            }
        }
        for list in map.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        map
    }

    /// Breadth-first hop distances from `source`.
    pub fn bfs_distances(&self, source: NodeId) -> BTreeMap<NodeId, usize> {
        let adjacency = self.neighbor_map();
        let mut dist = BTreeMap::from([(source, 0usize)]);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            for &v in adjacency.get(&u).into_iter().flatten() {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Orders nodes ascending and edges as `(min, max)` pairs sorted lexicographically.
    fn normalized(mut self) -> Self {
        self.nodes.sort_unstable();
        for e in &mut self.edges {
            *e = (e.0.min(e.1), e.0.max(e.1));
        }
        self.edges.sort_unstable();
        self
    }

    pub fn to_json(&self) -> String {
        let file = TopologyFile {
            n: self.nodes.len() as u32,
            edges: self.edges.iter().map(|&(u, v)| [u.0, v.0]).collect(),
            base_shape: self.meta.map(|m| m.base_shape),
            connectivity: self.meta.map(|m| m.connectivity),
            seed: self.meta.map(|m| m.seed),
        };
        serde_json::to_string(&file).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile =
            serde_json::from_str(text).map_err(|e| TopologyError::Format(e.to_string()))?;
        let meta = match (file.base_shape, file.connectivity, file.seed) {
            (Some(base_shape), Some(connectivity), Some(seed)) => Some(TopologyMeta {
                base_shape,
                connectivity,
                seed,
            }),
            _ => None,
        };
        let t = Self::from_parts(
            (1..=file.n).map(NodeId).collect(),
            file.edges
                .into_iter()
                .map(|[u, v]| (NodeId(u), NodeId(v)))
                .collect(),
            meta,
        );
        t.validate()?;
        Ok(t.normalized())
    }
}

/// On-disk form: nodes are implicitly `1..=n`, edges are `[u, v]` with `u < v`.
#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    n: u32,
    edges: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_shape: Option<BaseShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    connectivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

/// Number of extra edges added for connectivity `c` on top of `base` edges.
pub fn extra_edge_quota(n: usize, base: usize, c: f64) -> usize {
    let possible = n * n.saturating_sub(1) / 2 - base;
    // round half up
    (c * possible as f64 + 0.5).floor() as usize
}

/// Generates a random connected topology over nodes `1..=n`.
pub fn generate(
    n: usize,
    shape: BaseShape,
    connectivity: f64,
    seed: u64,
) -> Result<Topology, TopologyError> {
    if n == 0 {
        return Err(TopologyError::Empty);
    }
    if !(0.0..=1.0).contains(&connectivity) {
        return Err(TopologyError::Connectivity(connectivity));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u32> = (1..=n as u32).collect();
    labels.shuffle(&mut rng);

    let mut present = vec![false; n * n];
    let mut edges = Vec::new();
    for (a, b) in shape.position_edges(n) {
        let (u, v) = (labels[a] as usize - 1, labels[b] as usize - 1);
        present[u * n + v] = true;
        present[v * n + u] = true;
        edges.push((u, v));
    }

    let absent: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|&(u, v)| !present[u * n + v])
        .collect();
    let quota = extra_edge_quota(n, edges.len(), connectivity).min(absent.len());
    for i in index::sample(&mut rng, absent.len(), quota) {
        edges.push(absent[i]);
    }

    let t = Topology::from_parts(
        (1..=n as u32).map(NodeId).collect(),
        edges
            .into_iter()
            .map(|(u, v)| (NodeId(u as u32 + 1), NodeId(v as u32 + 1)))
            .collect(),
        Some(TopologyMeta {
            base_shape: shape,
            connectivity,
            seed,
        }),
    )
    .normalized();
    debug_assert!(t.validate().is_ok());
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn single_node_has_no_edges() {
        let t = generate(1, BaseShape::String, 0.0, 3).unwrap();
        assert_eq!(t.n(), 1);
        assert!(t.edges().is_empty());
        t.validate().unwrap();
    }

    #[test]
    fn full_connectivity_gives_complete_graph() {
        let t = generate(4, BaseShape::String, 1.0, 11).unwrap();
        assert_eq!(t.edges().len(), 6);
        assert_eq!(t, Topology::complete(4).with_meta(t.meta));
    }

    #[test]
    fn half_connectivity_edge_count() {
        // 4 base edges, 10 possible, round(0.5 * 6) = 3 extras
        let t = generate(5, BaseShape::String, 0.5, 7).unwrap();
        assert_eq!(t.edges().len(), 7);
        t.validate().unwrap();
    }

    #[test]
    fn rejects_empty_and_bad_connectivity() {
        assert_eq!(
            generate(0, BaseShape::Ring, 0.0, 1).unwrap_err(),
            TopologyError::Empty
        );
        assert!(matches!(
            generate(3, BaseShape::Ring, 1.5, 1),
            Err(TopologyError::Connectivity(_))
        ));
    }

    #[test]
    fn quota_rounds_half_up() {
        // 3 possible extras on a 4-path: 0.5 * 3 = 1.5 -> 2
        assert_eq!(extra_edge_quota(4, 3, 0.5), 2);
        assert_eq!(extra_edge_quota(4, 3, 0.0), 0);
        assert_eq!(extra_edge_quota(1, 0, 1.0), 0);
    }

    #[test]
    fn binary_tree_is_heap_shaped() {
        let t = generate(7, BaseShape::BinaryTree, 0.0, 5).unwrap();
        assert_eq!(t.edges().len(), 6);
        let mut degrees: Vec<usize> = t.neighbor_map().values().map(Vec::len).collect();
        degrees.sort_unstable();
        assert_eq!(degrees, vec![1, 1, 1, 1, 2, 3, 3]);
    }

    #[test]
    fn ring_closes_the_string() {
        let t = generate(6, BaseShape::Ring, 0.0, 9).unwrap();
        assert!(t.neighbor_map().values().all(|n| n.len() == 2));
        assert_eq!(
            generate(2, BaseShape::Ring, 0.0, 9).unwrap().edges().len(),
            1
        );
    }

    #[test]
    fn validate_accepts_triangle() {
        Topology::complete(3).validate().unwrap();
    }

    #[test]
    fn validate_reports_each_violation() {
        let disconnected = Topology::from_parts(ids(&[1, 2]), vec![], None);
        assert!(matches!(
            disconnected.validate(),
            Err(TopologyError::Disconnected(..))
        ));

        let looped = Topology::from_parts(ids(&[1]), vec![(NodeId(1), NodeId(1))], None);
        assert_eq!(looped.validate(), Err(TopologyError::SelfLoop(NodeId(1))));

        let dup = Topology::from_parts(ids(&[1, 1]), vec![], None);
        assert_eq!(dup.validate(), Err(TopologyError::DuplicateNode(NodeId(1))));

        let twice = Topology::from_parts(
            ids(&[1, 2]),
            vec![(NodeId(1), NodeId(2)), (NodeId(2), NodeId(1))],
            None,
        );
        assert_eq!(
            twice.validate(),
            Err(TopologyError::DuplicateEdge(NodeId(1), NodeId(2)))
        );

        let dangling = Topology::from_parts(ids(&[1]), vec![(NodeId(1), NodeId(5))], None);
        assert!(matches!(
            dangling.validate(),
            Err(TopologyError::UnknownEndpoint(..))
        ));
        assert_eq!(
            Topology::from_parts(vec![], vec![], None).validate(),
            Err(TopologyError::Empty)
        );
    }

    #[test]
    fn json_layout_is_stable() {
        let t = generate(4, BaseShape::String, 0.0, 2).unwrap();
        let text = t.to_json();
        assert!(text.starts_with("{\"n\":4,\"edges\":[["));
        assert!(text.ends_with(",\"base_shape\":\"string\",\"connectivity\":0.0,\"seed\":2}"));
        assert_eq!(Topology::from_json(&text).unwrap(), t);

        let hand = Topology::from_json(r#"{"n":3,"edges":[[2,3],[1,2]]}"#).unwrap();
        assert_eq!(hand.to_json(), r#"{"n":3,"edges":[[1,2],[2,3]]}"#);
        assert!(Topology::from_json(r#"{"n":3,"edges":[[1,2]]}"#).is_err());
    }

    #[test]
    fn bfs_on_path() {
        let t = Topology::path(&[3, 1, 2]).unwrap();
        let d = t.bfs_distances(NodeId(3));
        assert_eq!(d[&NodeId(2)], 2);
    }

    impl Topology {
        fn with_meta(mut self, meta: Option<TopologyMeta>) -> Self {
            self.meta = meta;
            self
        }
    }
}
