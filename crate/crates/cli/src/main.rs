use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use pifelect::experiment::{parse_configs, run_experiment, write_outputs, DelayChoice};
use pifelect::{generate, oracle_run, run_election, run_pif, BaseShape, NodeId, Topology};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "pifelect",
    version,
    about = "Simulate PIF and leader election on broadcast networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random connected topology and print it as JSON.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "string")]
        shape: BaseShape,
        #[arg(long, default_value_t = 0.0)]
        connectivity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one propagation of information with feedback.
    Pif {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        source: u32,
        #[arg(long, default_value = "unit")]
        delay: DelayChoice,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the distributed leader election.
    Elect {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        x: f64,
        #[arg(long, default_value = "unit")]
        delay: DelayChoice,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write one `t,(size,id),(size,id)` line per merge.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the fragment-level rounds without message passing.
    Oracle {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        x: f64,
    },
    /// Run a batch described by a JSON config and write CSV tables.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<Topology> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Topology::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            n,
            shape,
            connectivity,
            seed,
            out,
        } => {
            let json = generate(n, shape, connectivity, seed)?.to_json();
            match out {
                Some(path) => fs::write(&path, json + "\n")
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
        }
        Command::Pif {
            topology,
            source,
            delay,
            seed,
        } => {
            let out = run_pif(&load(&topology)?, NodeId(source), delay.model(seed))?;
            println!("{}", serde_json::to_string(&out)?);
        }
        Command::Elect {
            topology,
            x,
            delay,
            seed,
            trace,
        } => {
            let out = run_election(&load(&topology)?, x, delay.model(seed))?;
            if let Some(path) = trace {
                let mut text = out.trace_lines().join("\n");
                if !text.is_empty() {
                    text.push('\n');
                }
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            println!(
                "{}",
                json!({
                    "leader": out.leader,
                    "time_excl_init": out.time_excl_init,
                    "init_time": out.init_time,
                    "transmissions": out.transmissions,
                    "work_phases": out.work_phases,
                    "merges": out.merges,
                })
            );
        }
        Command::Oracle { topology, x } => {
            let out = oracle_run(&load(&topology)?, x)?;
            let merges = pifelect::fragment::merge_multiset(&out.work_phases);
            println!(
                "{}",
                json!({
                    "leader": out.leader,
                    "work_phases": out.work_phases,
                    "merges": merges,
                })
            );
        }
        Command::Experiment { config, out } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let results = parse_configs(&text)?
                .iter()
                .map(run_experiment)
                .collect::<Result<Vec<_>, _>>()?;
            write_outputs(&out, &results)?;
            for row in results.iter().flat_map(|r| &r.summary) {
                eprintln!(
                    "{} n={} C={}: max time {:.3}, max transmissions {}, max-id leader {:.2}",
                    row.base_shape,
                    row.n,
                    row.connectivity,
                    row.max_time,
                    row.max_transmissions,
                    row.leader_is_max_id_fraction
                );
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
