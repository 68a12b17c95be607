use pifelect::experiment::{check_bounds, parse_configs, run_experiment, write_outputs};
use pifelect::fragment::merge_multiset;
use pifelect::*;

#[test]
fn pif_on_three_node_string() {
    let t = Topology::path(&[1, 2, 3]).unwrap();
    let out = run_pif(&t, NodeId(1), DelayModel::unit()).unwrap();
    assert!(out.time <= 6.0);
    assert!(out.transmissions <= 6);
    assert_eq!(out.tree, vec![[2, 1], [3, 2]]);
}

#[test]
fn pif_from_every_source_of_a_ring() {
    let t = generate(12, BaseShape::Ring, 0.0, 5).unwrap();
    for &s in t.nodes() {
        let out = run_pif(&t, s, DelayModel::uniform(s.0 as u64)).unwrap();
        assert_eq!(out.transmissions, 23);
        assert_eq!(out.tree.len(), 11);
    }
}

#[test]
fn complete_graph_elects_maximum_in_id_order() {
    let t = Topology::complete(8);
    let out = run_election(&t, 3.0, DelayModel::unit()).unwrap();
    assert_eq!(out.leader, NodeId(8));
    let joiners: Vec<u32> = out.merges.iter().map(|m| m.joiner.identity.0).collect();
    assert_eq!(joiners, (1..8).collect::<Vec<_>>());
    // joins happen one after another, smallest identity first
    let times: Vec<f64> = out
        .work_phases
        .iter()
        .filter(|p| p.phase.merge().is_some())
        .map(|p| p.time)
        .collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    let report = check_bounds(&out, 3.0, 8).unwrap();
    assert!(report.time_ok);
}

#[test]
fn topology_file_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let t = generate(20, BaseShape::BinaryTree, 0.2, 99).unwrap();
    std::fs::write(&path, t.to_json()).unwrap();
    let back = Topology::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, t);
    let a = run_election(&t, 3.0, DelayModel::uniform(1)).unwrap();
    let b = run_election(&back, 3.0, DelayModel::uniform(1)).unwrap();
    assert_eq!(a.trace_lines(), b.trace_lines());
    assert_eq!(a.transmissions, b.transmissions);
}

#[test]
fn election_trace_and_oracle_agree_on_shapes() {
    for shape in BaseShape::ALL {
        for c in [0.0, 0.25, 1.0] {
            let t = generate(30, shape, c, 7).unwrap();
            let oracle = oracle_run(&t, 2.0).unwrap();
            let out = run_election(&t, 2.0, DelayModel::uniform(3)).unwrap();
            assert_eq!(out.leader, oracle.leader, "{shape} C={c}");
            assert_eq!(out.merges, merge_multiset(&oracle.work_phases));
            assert_eq!(out.trace_lines().len(), out.merges.len());
        }
    }
}

#[test]
fn experiment_writes_all_outputs() {
    let cfgs = parse_configs(
        r#"[{"n": 10, "base_shape": "string", "connectivity": [0, 0.5], "replications": 4, "seed": 3},
            {"n": 10, "base_shape": "binary_tree", "connectivity": [0.3], "replications": 2}]"#,
    )
    .unwrap();
    let results: Vec<_> = cfgs.iter().map(|c| run_experiment(c).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &results).unwrap();
    let results_csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results_csv.lines().count(), 1 + 8 + 2);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3);
    let bounds = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert!(bounds.lines().next().unwrap().contains("time_margin"));
    assert!(dir.path().join("plot.py").exists());
}
