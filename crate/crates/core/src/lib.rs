//! Leader election on broadcast networks, with the PIF wave it is built on,
//! a discrete-event simulator, a fragment-level oracle and experiment tooling.

pub mod bounds;
pub mod election;
pub mod experiment;
pub mod fragment;
pub mod oracle;
pub mod pif;
pub mod sim;
pub mod topology;

pub use election::{run_election, ElectionError, ElectionOutcome};
pub use experiment::{check_bounds, run_experiment, ExperimentConfig};
pub use fragment::{FragmentId, MergeEvent, WorkOutcome, WorkPhase};
pub use oracle::{oracle_run, OracleOutcome};
pub use pif::{run_pif, PifOutcome};
pub use sim::{DelayModel, SimTime, Simulation};
pub use topology::{generate, BaseShape, NodeId, Topology};
