mod common;

use byoc_core::codegen::{to_bytes, PayloadFormat};
use byoc_core::fixtures::{chain, detection, quant_demo, random_inputs, tiny_cnn};
use byoc_core::interp::{outputs_bitwise_eq, run};
use byoc_core::ir::Graph;
use byoc_core::partition::Fallback;
use byoc_core::passes::count_graph_macs;
use byoc_core::pipeline::compile;
use byoc_core::sim::builtin_backends;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn sizes(regions: &[byoc_core::partition::Region]) -> Vec<usize> {
    regions.iter().map(|r| r.nodes.len()).collect()
}

fn assert_equivalent(g: &Graph, cfg: &str, runs: u64) {
    let out = build(g, &options(cfg));
    let mut s = session(out.compiled);
    for seed in 0..runs {
        let inputs = random_inputs(g, &mut ChaCha8Rng::seed_from_u64(seed));
        let got = s.run(&inputs).unwrap();
        let want = run(g, &inputs).unwrap();
        assert!(outputs_bitwise_eq(&got, &want), "seed {seed}");
    }
}

#[test]
fn refsim_matches_interpreter_bitwise() {
    for g in [chain(2, 3).unwrap(), tiny_cnn(), detection(), quant_demo()] {
        assert_equivalent(&g, REFSIM_CFG, 10);
    }
}

#[test]
fn c_plan_matches_interpreter_bitwise() {
    for g in [chain(2, 3).unwrap(), tiny_cnn(), detection()] {
        assert_equivalent(&g, CLIB_CFG, 5);
    }
}

#[test]
fn host_only_compile_has_no_accels() {
    let out = build(&tiny_cnn(), &options(HOST_CFG));
    assert!(out.compiled.accels.is_empty());
    assert_eq!(out.summary.offload.offloaded_nodes, 0);
    assert_eq!(out.summary.offload.node_percent, 0.0);
    assert_equivalent(&tiny_cnn(), HOST_CFG, 3);
}

#[test]
fn chain_regions_before_and_after_split() {
    let g = chain(2, 3).unwrap();
    assert_eq!(g.nodes.len(), 9 + 1 + 3 + 3);
    let out = build(&g, &options(REFSIM_CFG));
    assert_eq!(sizes(&out.formed), [9, 4]);
    assert_eq!(sizes(&out.regions), [9, 4]);
    let out = build(&g, &options_with(REFSIM_CFG, Some(6), Fallback::CalcMacGtZero));
    assert_eq!(sizes(&out.formed), [9, 4]);
    assert_eq!(sizes(&out.split), [6, 3, 4]);
    assert_eq!(out.compiled.accels.len(), 3);
    assert_eq!(out.summary.formed_regions, 2);
    assert_eq!(out.summary.split_regions, 3);
    let summary: Vec<(usize, usize)> = out.summary.regions.iter().map(|r| (r.nodes, r.primitive_nodes)).collect();
    assert_eq!(summary, [(6, 6), (3, 3), (4, 6)]);
}

#[test]
fn tiny_cnn_offloads_everything() {
    let g = tiny_cnn();
    let out = build(&g, &options(REFSIM_CFG));
    let r = &out.summary.offload;
    assert_eq!((r.offloaded_nodes, r.total_nodes), (12, 12));
    assert_eq!(r.total_macs, oracle::brute_macs(&g));
    assert_eq!(r.offloaded_macs, r.total_macs);
    assert_eq!((r.node_percent, r.mac_percent), (100.0, 100.0));
    assert_eq!(out.summary.regions.len(), 1);
    assert_eq!(out.summary.regions[0].macs, r.total_macs);
}

#[test]
fn detection_offloads_all_macs_but_not_all_nodes() {
    let g = detection();
    let out = build(&g, &options(REFSIM_CFG));
    let r = &out.summary.offload;
    // The backbone is two conv/bias/relu blocks plus the 1x1 head.
    assert_eq!((r.offloaded_nodes, r.total_nodes), (7, 15));
    assert!((r.node_percent - 700.0 / 15.0).abs() < 1e-9);
    assert_eq!(r.total_macs, oracle::brute_macs(&g));
    assert_eq!(r.mac_percent, 100.0);
}

#[test]
fn nms_subgraph_has_no_macs() {
    let g = detection();
    let typed = byoc_core::ir::infer_types(&g).unwrap();
    let nms = typed.nodes.iter().position(|n| n.op == "nms").unwrap();
    let tail = Graph {
        nodes: typed.nodes[nms..].to_vec(),
        ..typed.clone()
    };
    let macs: u64 = tail
        .nodes
        .iter()
        .map(|n| byoc_core::passes::node_macs(&typed, n).unwrap())
        .sum();
    assert_eq!(macs, 0);
    assert_eq!(count_graph_macs(&typed).unwrap(), oracle::brute_macs(&g));
}

#[test]
fn fallback_demotes_zero_mac_regions() {
    let g = detection();
    let none = build(&g, &options_with(REFSIM_CFG, None, Fallback::None));
    assert!(none.compiled.accels.len() >= 3, "{:?}", sizes(&none.regions));
    let calc = build(&g, &options_with(REFSIM_CFG, None, Fallback::CalcMacGtZero));
    assert_eq!(calc.compiled.accels.len(), 1);
    let min = build(&g, &options_with(REFSIM_CFG, None, Fallback::MinNodes(4)));
    assert_eq!(min.compiled.accels.len(), 1);
}

#[test]
fn compile_is_deterministic() {
    for g in [chain(2, 3).unwrap(), detection()] {
        let a = build(&g, &options(CLIB_CFG));
        let b = build(&g, &options(CLIB_CFG));
        assert_eq!(to_bytes(&a.compiled), to_bytes(&b.compiled));
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
    }
}

#[test]
fn summary_lists_each_region() {
    let out = build(&chain(2, 3).unwrap(), &options(REFSIM_CFG));
    let v = serde_json::to_value(&out.summary).unwrap();
    let regions = v["regions"].as_array().unwrap();
    assert_eq!(regions.len(), 2);
    assert_eq!(regions[0]["target"], "refsim");
    assert_eq!(regions[0]["format"], PayloadFormat::JsonGraph.as_str());
    assert!(v["offload"]["node_percent"].is_number());
}

#[test]
fn mixed_targets_run_close_to_float() {
    let g = tiny_cnn();
    let mut o = options(MIXED_CFG);
    o.quantize = true;
    let out = build(&g, &o);
    let targets: Vec<&str> = out.compiled.accels.iter().map(|a| a.target.as_str()).collect();
    assert!(targets.contains(&"fixsim") && targets.contains(&"refsim"), "{targets:?}");
    let inputs = random_inputs(&g, &mut ChaCha8Rng::seed_from_u64(3));
    let got = session(out.compiled).run(&inputs).unwrap();
    let want = run(&g, &inputs).unwrap();
    let err = got[0]
        .as_f32()
        .unwrap()
        .iter()
        .zip(want[0].as_f32().unwrap())
        .map(|(a, b)| (a - b).abs())
        .fold(0f32, f32::max);
    assert!(err < 0.05, "softmax outputs differ by {err}");
}

#[test]
fn quantizing_backend_needs_the_flag() {
    let err = compile(&quant_demo(), &options(FIXSIM_CFG), &builtin_backends()).unwrap_err();
    assert!(err.to_string().starts_with("accel_passes failed"), "{err}");
}

#[test]
fn stage_errors_name_the_stage() {
    let mut g = tiny_cnn();
    g.nodes[0].inputs[0].node = "ghost".into();
    let err = compile(&g, &options(REFSIM_CFG), &builtin_backends()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.starts_with("validate failed") && msg.contains("ghost"), "{msg}");
}
