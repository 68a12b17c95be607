//! Fragment identities and the work-phase records shared by the distributed
//! protocol and the fragment-level oracle.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::topology::NodeId;

/// `(size, identity)` of a fragment, ordered lexicographically: larger size
/// wins, equal sizes fall back to the candidate identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FragmentId {
    pub size: u32,
    pub identity: NodeId,
}

impl FragmentId {
    pub fn new(size: u32, identity: u32) -> Self {
        Self {
            size,
            identity: NodeId(identity),
        }
    }

    pub fn singleton(node: NodeId) -> Self {
        Self {
            size: 1,
            identity: node,
        }
    }
}

impl fmt::Display for FragmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.size, self.identity)
    }
}

/// What a fragment decided at the end of one work period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum WorkOutcome {
    /// Stayed active with id `(new_size, candidate)`.
    Stay,
    /// Joined its maximal neighbor.
    Join {
        joined: FragmentId,
    },
    Leader,
}

/// One work period of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WorkPhase {
    pub candidate: NodeId,
    /// Fragment id when the period started.
    pub entry: FragmentId,
    /// Members counted during the period.
    pub new_size: u32,
    #[serde(flatten)]
    pub outcome: WorkOutcome,
}

/// A joining fragment absorbed by its maximal neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MergeEvent {
    pub joiner: FragmentId,
    pub joiner_size: u32,
    pub joined: FragmentId,
}

impl WorkPhase {
    pub fn merge(&self) -> Option<MergeEvent> {
        match self.outcome {
            WorkOutcome::Join { joined } => Some(MergeEvent {
                joiner: self.entry,
                joiner_size: self.new_size,
                joined,
            }),
            _ => None,
        }
    }
}

/// Merge events of a trace, sorted so that two traces compare as multisets.
pub fn merge_multiset<'a>(phases: impl IntoIterator<Item = &'a WorkPhase>) -> Vec<MergeEvent> {
    let mut merges: Vec<MergeEvent> = phases.into_iter().filter_map(WorkPhase::merge).collect();
    merges.sort_unstable();
    merges
}

/// Work phases sorted into a multiset.
pub fn phase_multiset<'a>(phases: impl IntoIterator<Item = &'a WorkPhase>) -> Vec<WorkPhase> {
    let mut all: Vec<WorkPhase> = phases.into_iter().copied().collect();
    all.sort_unstable();
    all
}

#[derive(Debug, Clone, PartialEq)]
pub enum GrowthViolation {
    /// Two consecutive stay-active periods grew by less than `x^2`.
    SlowGrowth {
        candidate: NodeId,
        entry: FragmentId,
        next_new_size: u32,
    },
    TooManyPeriods {
        candidate: NodeId,
        periods: usize,
        limit: usize,
    },
}

/// Upper bound on the work periods of one candidate: `ceil(log_x n) + 1`.
pub fn period_limit(x: f64, n: usize) -> usize {
    // smallest k with x^k >= n, without float log rounding
    let mut k = 0;
    let mut reach = 1.0;
    while reach < n as f64 {
        reach *= x;
        k += 1;
    }
    k + 1
}

/// Checks the per-lineage growth properties of a trace.
///
/// `phases` must be in execution order per candidate. For every pair of
/// consecutive periods that both stayed active, the second count must be at
/// least `x^2` times the entry size of the first.
pub fn check_growth(phases: &[WorkPhase], x: f64, n: usize) -> Result<(), GrowthViolation> {
    let mut lineages: BTreeMap<NodeId, Vec<&WorkPhase>> = BTreeMap::new();
    for p in phases {
        lineages.entry(p.candidate).or_default().push(p);
    }
    let limit = period_limit(x, n);
    for (&candidate, list) in &lineages {
        if list.len() > limit {
            return Err(GrowthViolation::TooManyPeriods {
                candidate,
                periods: list.len(),
                limit,
            });
        }
        for pair in list.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.outcome == WorkOutcome::Stay
                && b.outcome == WorkOutcome::Stay
                && (b.new_size as f64) < x * x * a.entry.size as f64
            {
                return Err(GrowthViolation::SlowGrowth {
                    candidate,
                    entry: a.entry,
                    next_new_size: b.new_size,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_size_then_identity() {
        assert!(FragmentId::new(3, 9) > FragmentId::new(3, 7));
        assert!(FragmentId::new(4, 2) > FragmentId::new(3, 9));
        assert_eq!(
            [FragmentId::new(3, 7), FragmentId::new(3, 9)]
                .into_iter()
                .max(),
            Some(FragmentId::new(3, 9))
        );
    }

    #[test]
    fn period_limit_values() {
        assert_eq!(period_limit(3.0, 1), 1);
        assert_eq!(period_limit(3.0, 8), 3);
        assert_eq!(period_limit(2.0, 64), 7);
    }

    fn stay(c: u32, entry: FragmentId, new_size: u32) -> WorkPhase {
        WorkPhase {
            candidate: NodeId(c),
            entry,
            new_size,
            outcome: WorkOutcome::Stay,
        }
    }

    #[test]
    fn growth_check_flags_slow_lineage() {
        let ok = [
            stay(5, FragmentId::new(1, 5), 4),
            stay(5, FragmentId::new(4, 5), 9),
        ];
        check_growth(&ok, 3.0, 64).unwrap();
        let slow = [
            stay(5, FragmentId::new(2, 5), 7),
            stay(5, FragmentId::new(7, 5), 17),
        ];
        assert!(matches!(
            check_growth(&slow, 3.0, 64),
            Err(GrowthViolation::SlowGrowth { .. })
        ));
    }

    #[test]
    fn phase_serializes_flat() {
        let p = WorkPhase {
            candidate: NodeId(2),
            entry: FragmentId::new(1, 2),
            new_size: 1,
            outcome: WorkOutcome::Join {
                joined: FragmentId::new(1, 3),
            },
        };
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"candidate":2,"entry":{"size":1,"identity":2},"new_size":1,"outcome":"join","joined":{"size":1,"identity":3}}"#
        );
        assert_eq!(p.merge().unwrap().joined, FragmentId::new(1, 3));
    }
}
