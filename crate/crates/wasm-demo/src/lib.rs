//! Browser bindings for the simulator. Every export takes plain values and
//! returns a JSON string; errors surface as JavaScript exceptions.

use std::collections::BTreeMap;

use pifelect::oracle::FragmentGraph;
use pifelect::{
    generate, run_election, run_pif, BaseShape, DelayModel, FragmentId, NodeId, Topology,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn delay(random: bool, seed: u64) -> DelayModel {
    if random {
        DelayModel::uniform(seed)
    } else {
        DelayModel::unit()
    }
}

pub fn generate_json(
    n: usize,
    shape: &str,
    connectivity: f64,
    seed: u64,
) -> Result<String, String> {
    let shape: BaseShape = shape.parse().map_err(|e| format!("{e}"))?;
    if n == 0 || n > 200 {
        return Err("n must be between 1 and 200".into());
    }
    Ok(generate(n, shape, connectivity, seed)
        .map_err(|e| e.to_string())?
        .to_json())
}

pub fn pif_json(topology: &str, source: u32, random: bool, seed: u64) -> Result<String, String> {
    let t = Topology::from_json(topology).map_err(|e| e.to_string())?;
    let out = run_pif(&t, NodeId(source), delay(random, seed)).map_err(|e| e.to_string())?;
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Fragment membership after each synchronous round, for colouring nodes.
#[derive(Serialize)]
struct Round {
    /// candidate identity of each node's fragment, keyed by node
    owner: BTreeMap<NodeId, NodeId>,
    working: Vec<FragmentId>,
}

#[derive(Serialize)]
struct ElectionView {
    leader: NodeId,
    init_time: f64,
    time_excl_init: f64,
    transmissions: u64,
    time_bound: f64,
    message_bound: f64,
    merge_trace: Vec<String>,
    rounds: Vec<Round>,
}

fn owners(g: &FragmentGraph) -> BTreeMap<NodeId, NodeId> {
    g.fragments()
        .flat_map(|f| f.members.iter().map(move |&m| (m, f.id.identity)))
        .collect()
}

pub fn elect_json(topology: &str, x: f64, random: bool, seed: u64) -> Result<String, String> {
    let t = Topology::from_json(topology).map_err(|e| e.to_string())?;
    let out = run_election(&t, x, delay(random, seed)).map_err(|e| e.to_string())?;
    let mut g = FragmentGraph::singletons(&t).map_err(|e| e.to_string())?;
    let mut rounds = vec![Round {
        owner: owners(&g),
        working: Vec::new(),
    }];
    while g.leader().is_none() {
        let (next, report) = g.step(x).map_err(|e| e.to_string())?;
        g = next;
        rounds.push(Round {
            owner: owners(&g),
            working: report.working,
        });
    }
    let view = ElectionView {
        leader: out.leader,
        init_time: out.init_time,
        time_excl_init: out.time_excl_init,
        transmissions: out.transmissions,
        time_bound: pifelect::bounds::time_bound(x, t.n()).map_err(|e| e.to_string())?,
        message_bound: pifelect::bounds::message_bound(x, t.n()).map_err(|e| e.to_string())?,
        merge_trace: out.trace_lines(),
        rounds,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = generateTopology)]
pub fn generate_topology(
    n: usize,
    shape: &str,
    connectivity: f64,
    seed: u32,
) -> Result<String, JsError> {
    generate_json(n, shape, connectivity, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = runPif)]
pub fn pif(topology: &str, source: u32, random: bool, seed: u32) -> Result<String, JsError> {
    pif_json(topology, source, random, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = runElection)]
pub fn elect(topology: &str, x: f64, random: bool, seed: u32) -> Result<String, JsError> {
    elect_json(topology, x, random, seed as u64).map_err(|e| JsError::new(&e))
}
