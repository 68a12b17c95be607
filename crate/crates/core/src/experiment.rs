//! Batch runs over generated topologies: per-run records, per-configuration
//! maxima, bound margins, and CSV output.

use std::fs;
use std::io;
use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{message_bound, time_bound, BoundError};
use crate::election::{run_election, ElectionError, ElectionOutcome};
use crate::sim::DelayModel;
use crate::topology::{generate, BaseShape, NodeId, TopologyError};

pub const DEFAULT_CONNECTIVITY: [f64; 7] = [0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayChoice {
    #[default]
    Unit,
    Random,
}

impl DelayChoice {
    pub fn model(self, seed: u64) -> DelayModel {
        match self {
            DelayChoice::Unit => DelayModel::unit(),
            DelayChoice::Random => DelayModel::uniform(seed),
        }
    }
}

impl std::str::FromStr for DelayChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit" => Ok(DelayChoice::Unit),
            "random" => Ok(DelayChoice::Random),
            other => Err(format!(
                "unknown delay model {other:?}, expected unit or random"
            )),
        }
    }
}

fn default_connectivity() -> Vec<f64> {
    DEFAULT_CONNECTIVITY.to_vec()
}

fn default_x() -> f64 {
    3.0
}

fn default_replications() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub base_shape: BaseShape,
    #[serde(default = "default_connectivity")]
    pub connectivity: Vec<f64>,
    #[serde(default = "default_x")]
    pub x: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub delay: DelayChoice,
}

impl ExperimentConfig {
    pub fn new(n: usize, base_shape: BaseShape) -> Self {
        Self {
            n,
            base_shape,
            connectivity: default_connectivity(),
            x: default_x(),
            replications: default_replications(),
            seed: 0,
            delay: DelayChoice::Unit,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.connectivity.is_empty() {
            return bad("connectivity list is empty".into());
        }
        if let Some(c) = self.connectivity.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return bad(format!("connectivity {c} outside [0, 1]"));
        }
        if !(self.x.is_finite() && self.x > 1.0) {
            return bad(format!("x must be a finite number > 1, got {}", self.x));
        }
        Ok(())
    }

    /// Topology seed of one replication, derived from the config seed.
    pub fn replication_seed(&self, connectivity_index: usize, replication: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((connectivity_index as u64) << 32) | replication as u64);
        rng.next_u64()
    }
}

/// Parses either a single config object or an array of them.
pub fn parse_configs(text: &str) -> Result<Vec<ExperimentConfig>, ExperimentError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<ExperimentConfig>),
        One(ExperimentConfig),
    }
    let configs = match serde_json::from_str(text)? {
        OneOrMany::Many(list) => list,
        OneOrMany::One(one) => vec![one],
    };
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Election(#[from] ElectionError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub time_bound: f64,
    /// `time_bound - time_excl_init`; negative means violated.
    pub time_margin: f64,
    pub message_bound: f64,
    /// `message_bound + n - (transmissions - n)`; negative means violated.
    pub message_margin: f64,
    pub time_ok: bool,
    pub message_ok: bool,
}

impl BoundReport {
    pub fn ok(&self) -> bool {
        self.time_ok && self.message_ok
    }
}

/// Compares one run against the time and message bounds. The message side
/// allows `n` transmissions on top of the formula for the leader announcement.
pub fn check_bounds(
    outcome: &ElectionOutcome,
    x: f64,
    n: usize,
) -> Result<BoundReport, BoundError> {
    let tb = time_bound(x, n)?;
    let mb = message_bound(x, n)?;
    let time_margin = tb - outcome.time_excl_init;
    let message_margin = mb + n as f64 - outcome.post_init_transmissions() as f64;
    Ok(BoundReport {
        time_bound: tb,
        time_margin,
        message_bound: mb,
        message_margin,
        time_ok: time_margin >= 0.0,
        message_ok: message_margin >= 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub base_shape: BaseShape,
    pub n: usize,
    pub connectivity: f64,
    pub replication: usize,
    pub seed: u64,
    pub leader: NodeId,
    pub leader_is_max_id: bool,
    pub init_time: f64,
    pub time_excl_init: f64,
    pub transmissions: u64,
    #[serde(skip)]
    pub bounds: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub base_shape: BaseShape,
    pub n: usize,
    pub connectivity: f64,
    pub x: f64,
    pub replications: usize,
    pub max_time: f64,
    pub mean_time: f64,
    pub max_transmissions: u64,
    pub leader_is_max_id_fraction: f64,
    pub bound_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

fn run_one(
    cfg: &ExperimentConfig,
    ci: usize,
    replication: usize,
) -> Result<RunRecord, ExperimentError> {
    let connectivity = cfg.connectivity[ci];
    let seed = cfg.replication_seed(ci, replication);
    let topology = generate(cfg.n, cfg.base_shape, connectivity, seed)?;
    let outcome = run_election(&topology, cfg.x, cfg.delay.model(seed))?;
    let bounds = check_bounds(&outcome, cfg.x, cfg.n)?;
    Ok(RunRecord {
        base_shape: cfg.base_shape,
        n: cfg.n,
        connectivity,
        replication,
        seed,
        leader: outcome.leader,
        leader_is_max_id: Some(outcome.leader) == topology.max_id(),
        init_time: outcome.init_time,
        time_excl_init: outcome.time_excl_init,
        transmissions: outcome.transmissions,
        bounds,
    })
}

#[cfg(feature = "parallel")]
fn run_all(
    cfg: &ExperimentConfig,
    jobs: &[(usize, usize)],
) -> Result<Vec<RunRecord>, ExperimentError> {
    use rayon::prelude::*;
    jobs.par_iter()
        .map(|&(ci, r)| run_one(cfg, ci, r))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(
    cfg: &ExperimentConfig,
    jobs: &[(usize, usize)],
) -> Result<Vec<RunRecord>, ExperimentError> {
    jobs.iter().map(|&(ci, r)| run_one(cfg, ci, r)).collect()
}

/// Runs every replication of every connectivity value of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.connectivity.len())
        .flat_map(|ci| (0..cfg.replications).map(move |r| (ci, r)))
        .collect();
    let runs = run_all(cfg, &jobs)?;
    let summary = runs
        .chunks(cfg.replications)
        .map(|chunk| summarize(cfg, chunk))
        .collect();
    Ok(ExperimentResult {
        config: cfg.clone(),
        runs,
        summary,
    })
}

fn summarize(cfg: &ExperimentConfig, runs: &[RunRecord]) -> SummaryRow {
    let count = runs.len() as f64;
    SummaryRow {
        base_shape: cfg.base_shape,
        n: cfg.n,
        connectivity: runs[0].connectivity,
        x: cfg.x,
        replications: runs.len(),
        max_time: runs.iter().map(|r| r.time_excl_init).fold(0.0, f64::max),
        mean_time: runs.iter().map(|r| r.time_excl_init).sum::<f64>() / count,
        max_transmissions: runs.iter().map(|r| r.transmissions).max().unwrap_or(0),
        leader_is_max_id_fraction: runs.iter().filter(|r| r.leader_is_max_id).count() as f64
            / count,
        bound_violations: runs.iter().filter(|r| !r.bounds.ok()).count(),
    }
}

#[derive(Serialize)]
struct BoundRow {
    base_shape: BaseShape,
    n: usize,
    connectivity: f64,
    replication: usize,
    seed: u64,
    time_bound: f64,
    time_margin: f64,
    message_bound: f64,
    message_margin: f64,
    time_ok: bool,
    message_ok: bool,
}

pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot max time and max transmissions against connectivity from summary.csv."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
series = defaultdict(list)
with open(out / "summary.csv") as f:
    for row in csv.DictReader(f):
        key = (row["base_shape"], row["n"], row["x"])
        series[key].append(
            (float(row["connectivity"]), float(row["max_time"]), int(row["max_transmissions"]))
        )

for column, label, name in ((1, "max time (excl. init)", "time.png"), (2, "max transmissions", "transmissions.png")):
    fig, ax = plt.subplots()
    for (shape, n, x), points in sorted(series.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[column] for p in points], marker="o", label=f"{shape} n={n} X={x}")
    ax.set_xlabel("connectivity C")
    ax.set_ylabel(label)
    ax.legend()
    fig.savefig(out / name, dpi=120)
"#;

/// Writes `results.csv`, `summary.csv`, `bounds.csv` and `plot.py` into `dir`.
pub fn write_outputs(dir: &Path, results: &[ExperimentResult]) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut runs = csv::Writer::from_path(dir.join("results.csv"))?;
    let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
    let mut bounds = csv::Writer::from_path(dir.join("bounds.csv"))?;
    for result in results {
        for r in &result.runs {
            runs.serialize(r)?;
            bounds.serialize(BoundRow {
                base_shape: r.base_shape,
                n: r.n,
                connectivity: r.connectivity,
                replication: r.replication,
                seed: r.seed,
                time_bound: r.bounds.time_bound,
                time_margin: r.bounds.time_margin,
                message_bound: r.bounds.message_bound,
                message_margin: r.bounds.message_margin,
                time_ok: r.bounds.time_ok,
                message_ok: r.bounds.message_ok,
            })?;
        }
        for s in &result.summary {
            summary.serialize(s)?;
        }
    }
    runs.flush()?;
    summary.flush()?;
    bounds.flush()?;
    fs::write(dir.join("plot.py"), PLOT_SCRIPT)?;
    Ok(())
}
