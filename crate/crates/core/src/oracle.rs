//! Fragment-level election run in synchronous rounds.
//!
//! Every round, each live fragment whose id is smaller than all of its
//! neighbors' ids works: it either stays active with its counted size, joins
//! its maximal neighbor, or becomes leader when it has no external edges.
//! Working fragments are never adjacent and a join target is never working,
//! so the decisions of one round are independent of each other.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::fragment::{FragmentId, WorkOutcome, WorkPhase};
use crate::topology::{NodeId, Topology, TopologyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentState {
    Wait,
    Work,
    Leader,
    Ceased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub id: FragmentId,
    pub members: BTreeSet<NodeId>,
    pub state: FragmentState,
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("growth factor must be a finite number > 1, got {0}")]
    GrowthFactor(f64),
    #[error("node {0} is not owned by exactly one live fragment")]
    Partition(NodeId),
    #[error("fragment {0} does not contain its candidate")]
    Candidate(FragmentId),
    #[error("two live fragments share id {0}")]
    DuplicateId(FragmentId),
    #[error("no leader after {0} rounds")]
    NoProgress(usize),
}

/// Live and ceased fragments over a fixed graph.
#[derive(Debug, Clone)]
pub struct FragmentGraph {
    adjacency: Arc<BTreeMap<NodeId, Vec<NodeId>>>,
    fragments: Vec<Fragment>,
    owner: BTreeMap<NodeId, usize>,
}

/// Fragments that worked in one round and what they decided.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepReport {
    pub working: Vec<FragmentId>,
    pub phases: Vec<WorkPhase>,
}

impl FragmentGraph {
    /// Every node as its own fragment of size 1, all waiting.
    pub fn singletons(topology: &Topology) -> Result<Self, OracleError> {
        topology.validate()?;
        let adjacency = Arc::new(topology.neighbor_map());
        let fragments: Vec<Fragment> = adjacency
            .keys()
            .map(|&id| Fragment {
                id: FragmentId::singleton(id),
                members: BTreeSet::from([id]),
                state: FragmentState::Wait,
            })
            .collect();
        let owner = adjacency
            .keys()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
        Ok(Self {
            adjacency,
            fragments,
            owner,
        })
    }

    pub fn fragments(&self) -> impl Iterator<Item = &Fragment> {
        self.fragments.iter()
    }

    pub fn live(&self) -> impl Iterator<Item = &Fragment> {
        self.fragments
            .iter()
            .filter(|f| f.state != FragmentState::Ceased)
    }

    pub fn fragment_of(&self, node: NodeId) -> Option<&Fragment> {
        self.owner.get(&node).map(|&i| &self.fragments[i])
    }

    pub fn leader(&self) -> Option<NodeId> {
        self.live()
            .find(|f| f.state == FragmentState::Leader)
            .map(|f| f.id.identity)
    }

    fn neighbor_indices(&self, i: usize) -> BTreeSet<usize> {
        self.fragments[i]
            .members
            .iter()
            .flat_map(|u| &self.adjacency[u])
            .map(|v| self.owner[v])
            .filter(|&j| j != i)
            .collect()
    }

    /// Ids of the live fragments adjacent to `id`.
    pub fn neighbors_of(&self, id: FragmentId) -> Vec<FragmentId> {
        let Some(i) = self.index_of(id) else {
            return Vec::new();
        };
        self.neighbor_indices(i)
            .into_iter()
            .map(|j| self.fragments[j].id)
            .collect()
    }

    fn index_of(&self, id: FragmentId) -> Option<usize> {
        self.fragments
            .iter()
            .position(|f| f.id == id && f.state != FragmentState::Ceased)
    }

    /// Member sets partition the nodes, candidates belong to their fragments,
    /// and live ids are distinct.
    pub fn validate(&self) -> Result<(), OracleError> {
        let mut ids = BTreeSet::new();
        let mut covered = BTreeMap::new();
        for (i, f) in self.fragments.iter().enumerate() {
            if f.state == FragmentState::Ceased {
                continue;
            }
            if !ids.insert(f.id) {
                return Err(OracleError::DuplicateId(f.id));
            }
            if !f.members.contains(&f.id.identity) {
                return Err(OracleError::Candidate(f.id));
            }
            for &m in &f.members {
                if covered.insert(m, i).is_some() || self.owner.get(&m) != Some(&i) {
                    return Err(OracleError::Partition(m));
                }
            }
        }
        if let Some(&missing) = self.adjacency.keys().find(|id| !covered.contains_key(id)) {
            return Err(OracleError::Partition(missing));
        }
        Ok(())
    }

    /// One synchronous round. A graph that already has a leader is returned unchanged.
    pub fn step(&self, x: f64) -> Result<(FragmentGraph, StepReport), OracleError> {
        if !(x.is_finite() && x > 1.0) {
            return Err(OracleError::GrowthFactor(x));
        }
        self.validate()?;
        let mut next = self.clone();
        let mut report = StepReport::default();
        if self.leader().is_some() {
            return Ok((next, report));
        }

        let mut decisions = Vec::new();
        for (i, f) in self.fragments.iter().enumerate() {
            if f.state == FragmentState::Ceased {
                continue;
            }
            let neighbors = self.neighbor_indices(i);
            if neighbors.iter().any(|&j| self.fragments[j].id < f.id) {
                continue;
            }
            let new_size = f.members.len() as u32;
            let outcome = match neighbors.iter().max_by_key(|&&j| self.fragments[j].id) {
                None => WorkOutcome::Leader,
                Some(&j) if new_size as f64 > x * self.fragments[j].id.size as f64 => {
                    WorkOutcome::Stay
                }
                Some(&j) => WorkOutcome::Join {
                    joined: self.fragments[j].id,
                },
            };
            decisions.push((i, new_size, outcome));
        }
        decisions.sort_by_key(|&(i, ..)| self.fragments[i].id);

        for &(i, new_size, outcome) in &decisions {
            let entry = self.fragments[i].id;
            report.working.push(entry);
            report.phases.push(WorkPhase {
                candidate: entry.identity,
                entry,
                new_size,
                outcome,
            });
            match outcome {
                WorkOutcome::Leader => next.fragments[i].state = FragmentState::Leader,
                WorkOutcome::Stay => {
                    next.fragments[i].id = FragmentId {
                        size: new_size,
                        identity: entry.identity,
                    };
                    next.fragments[i].state = FragmentState::Wait;
                }
                WorkOutcome::Join { joined } => {
                    let j = next
                        .index_of(joined)
                        .expect("join target is live and not working");
                    let members = std::mem::take(&mut next.fragments[i].members);
                    for &m in &members {
                        next.owner.insert(m, j);
                    }
                    next.fragments[j].members.extend(members);
                    next.fragments[i].state = FragmentState::Ceased;
                }
            }
        }
        Ok((next, report))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleOutcome {
    pub leader: NodeId,
    /// Work periods in round order, ascending fragment id within a round.
    pub work_phases: Vec<WorkPhase>,
    #[serde(skip)]
    pub rounds: Vec<StepReport>,
}

impl OracleOutcome {
    pub fn work_counts(&self) -> BTreeMap<NodeId, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.work_phases {
            *counts.entry(p.candidate).or_insert(0) += 1;
        }
        counts
    }
}

/// Iterates rounds from singletons until a leader exists.
pub fn oracle_run(topology: &Topology, x: f64) -> Result<OracleOutcome, OracleError> {
    let mut graph = FragmentGraph::singletons(topology)?;
    let mut rounds = Vec::new();
    // at least one fragment works per round, each candidate O(log n) times
    let limit = 64 * topology.n() + 16;
    while graph.leader().is_none() {
        if rounds.len() >= limit {
            return Err(OracleError::NoProgress(limit));
        }
        let (next, report) = graph.step(x)?;
        graph = next;
        rounds.push(report);
    }
    Ok(OracleOutcome {
        leader: graph.leader().expect("loop exits on leader"),
        work_phases: rounds
            .iter()
            .flat_map(|r| r.phases.iter().copied())
            .collect(),
        rounds,
    })
}
