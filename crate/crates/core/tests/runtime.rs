mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use byoc_core::codegen::{AccelSubModule, EntrySource};
use byoc_core::fixtures::{chain, detection, quant_demo, random_inputs, tiny_cnn};
use byoc_core::interp::{outputs_bitwise_eq, run};
use byoc_core::ir::{ConstantTensor, Tensor};
use byoc_core::partition::Fallback;
use byoc_core::runtime::{AccelEngine, EngineFactory, EngineOutput, EngineRegistry, InferenceSession, SessionOptions};
use byoc_core::sim::builtin_engines;
use byoc_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn inputs_for(g: &byoc_core::ir::Graph, seed: u64) -> byoc_core::interp::Inputs {
    random_inputs(g, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn load(cm: byoc_core::codegen::CompiledModule, options: SessionOptions) -> InferenceSession {
    InferenceSession::load(cm, &builtin_engines(Duration::ZERO), options).unwrap()
}

#[test]
fn load_is_lazy_and_sizes_entries_by_plan() {
    let out = build(&tiny_cnn(), &options(REFSIM_CFG));
    let n = out.compiled.metadata.entries.len();
    let s = session(out.compiled);
    assert_eq!(s.init_count(), 0);
    assert_eq!(s.num_entries(), n);
}

#[test]
fn host_constants_occupy_their_entries_before_run() {
    let out = build(&tiny_cnn(), &options(HOST_CFG));
    let meta = out.compiled.metadata.clone();
    let s = session(out.compiled);
    let mut seen = 0;
    for e in &meta.entries {
        match &e.source {
            EntrySource::Constant(name) => {
                let c = meta.constants.iter().find(|c| &c.name == name).unwrap();
                assert!(s.entry(e.id).unwrap().bitwise_eq(&c.value), "{name}");
                seen += 1;
            }
            _ => assert!(s.entry(e.id).is_none()),
        }
    }
    assert_eq!(seen, 6);
}

#[test]
fn missing_engine_factory_is_named() {
    let mut cm = build(&tiny_cnn(), &options(REFSIM_CFG)).compiled;
    cm.accels[0].target = "tpuX".into();
    let err = InferenceSession::load(cm, &builtin_engines(Duration::ZERO), SessionOptions::default())
        .err()
        .unwrap();
    assert!(err.to_string().contains("tpuX"), "{err}");
}

#[test]
fn bad_inputs_fail_before_execution() {
    let g = tiny_cnn();
    let mut s = session(build(&g, &options(REFSIM_CFG)).compiled);
    let wrong = single("x", Tensor::from_f32(vec![1, 3, 4, 4], vec![0.0; 48]).unwrap());
    assert!(matches!(s.run(&wrong), Err(Error::Input(_))));
    let err = s.run(&single("y", Tensor::zeros(&g.inputs[0].ttype))).unwrap_err();
    assert!(err.to_string().contains("x: "), "{err}");
    assert_eq!(s.init_count(), 0);
    assert!(s.profile_report().is_err());
}

#[test]
fn four_regions_initialize_four_engines_once() {
    let g = chain(2, 3).unwrap();
    let out = build(&g, &options_with(REFSIM_CFG, Some(4), Fallback::CalcMacGtZero));
    assert_eq!(out.compiled.accels.len(), 4);
    let mut s = session(out.compiled);
    for seed in 0..10 {
        let inputs = inputs_for(&g, seed);
        assert!(outputs_bitwise_eq(&s.run(&inputs).unwrap(), &run(&g, &inputs).unwrap()));
        assert_eq!(s.init_count(), 4);
    }
    let report = s.profile_report().unwrap();
    assert_eq!(report.kernels.len(), 4);
    for k in &report.kernels {
        assert!(k.engine_init_ns > 0, "{}", k.name);
        let p = k.percent();
        assert!((p.sum() - 100.0).abs() <= 0.1, "{}: {p:?}", k.name);
    }
    assert!((report.aggregate_percent.sum() - 100.0).abs() <= 0.1);
}

#[test]
fn eager_init_builds_every_engine_at_load() {
    let out = build(&chain(2, 3).unwrap(), &options(REFSIM_CFG));
    let s = load(
        out.compiled,
        SessionOptions {
            eager_init: true,
            ..SessionOptions::default()
        },
    );
    assert_eq!(s.init_count(), 2);
}

#[test]
fn init_delay_stays_out_of_recurring_time() {
    let mut o = options(FIXSIM_CFG);
    o.quantize = true;
    let g = quant_demo();
    let delay = Duration::from_millis(40);
    let registry = builtin_engines(delay);
    let mut s = InferenceSession::load(build(&g, &o).compiled, &registry, SessionOptions::default()).unwrap();
    s.run(&inputs_for(&g, 0)).unwrap();
    s.run(&inputs_for(&g, 1)).unwrap();
    let r = s.profile_report().unwrap();
    let k = &r.kernels[0];
    assert!(k.engine_init_ns >= delay.as_nanos() as u64);
    assert!(k.recurring_ns() < k.engine_init_ns, "{k:?}");
    assert!((k.percent().sum() - 100.0).abs() <= 0.1);
}

#[test]
fn categories_account_for_call_time() {
    let g = tiny_cnn();
    let mut s = load(
        build(&g, &options(REFSIM_CFG)).compiled,
        SessionOptions {
            eager_init: true,
            transfer_ns_per_byte: 50,
            ..SessionOptions::default()
        },
    );
    let inputs = inputs_for(&g, 0);
    let start = Instant::now();
    s.run(&inputs).unwrap();
    let wall = start.elapsed().as_nanos() as u64;
    let k = s.profile_report().unwrap().kernels[0].clone();
    let parts = k.recurring_ns();
    assert!(parts <= wall, "{parts} > {wall}");
    assert!(parts * 2 >= wall, "categories {parts} ns of {wall} ns wall");
    // 768 input bytes and 40 output bytes at 50 ns each.
    assert!(k.transfer_ns >= 808 * 50);
}

#[test]
fn poisoned_entries_do_not_change_results() {
    for g in [chain(2, 3).unwrap(), detection()] {
        let cm = build(&g, &options(REFSIM_CFG)).compiled;
        let mut plain = session(cm.clone());
        let mut poisoned = load(
            cm,
            SessionOptions {
                poison_entries: true,
                ..SessionOptions::default()
            },
        );
        for seed in 0..3 {
            let inputs = inputs_for(&g, seed);
            assert!(outputs_bitwise_eq(&plain.run(&inputs).unwrap(), &poisoned.run(&inputs).unwrap()));
        }
    }
}

#[test]
fn sessions_are_deterministic() {
    let g = detection();
    let cm = build(&g, &options(CLIB_CFG)).compiled;
    let inputs = inputs_for(&g, 9);
    let a = session(cm.clone()).run(&inputs).unwrap();
    let mut s = session(cm);
    let b = s.run(&inputs).unwrap();
    let c = s.run(&inputs).unwrap();
    assert!(outputs_bitwise_eq(&a, &b) && outputs_bitwise_eq(&b, &c));
}

struct Broken;

impl AccelEngine for Broken {
    fn run(&self, _: &[Tensor]) -> byoc_core::Result<EngineOutput> {
        Err(Error::Runtime("device lost".into()))
    }
}

impl EngineFactory for Broken {
    fn target(&self) -> &str {
        "refsim"
    }

    fn create(&self, _: &AccelSubModule, _: &[ConstantTensor]) -> byoc_core::Result<Box<dyn AccelEngine>> {
        Ok(Box::new(Broken))
    }
}

#[test]
fn engine_failures_carry_the_function_name() {
    let g = tiny_cnn();
    let cm = build(&g, &options(REFSIM_CFG)).compiled;
    let name = cm.accels[0].fn_name.clone();
    let mut registry = EngineRegistry::new();
    registry.register(Arc::new(Broken));
    let mut s = InferenceSession::load(cm, &registry, SessionOptions::default()).unwrap();
    match s.run(&inputs_for(&g, 0)) {
        Err(Error::Engine { fn_name, .. }) => assert_eq!(fn_name, name),
        other => panic!("{other:?}"),
    }
}

#[test]
fn profile_json_has_the_documented_shape() {
    let g = detection();
    let mut s = session(build(&g, &options(REFSIM_CFG)).compiled);
    s.run(&inputs_for(&g, 0)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&s.profile_report().unwrap().to_json().unwrap()).unwrap();
    let k = &v["kernels"][0];
    for key in ["transfer_ns", "invocation_ns", "execution_ns", "engine_init_ns"] {
        assert!(k[key].is_u64(), "{key}");
    }
    assert!(k["name"].is_string());
    let agg = &v["aggregate_percent"];
    let sum: f64 = ["transfer", "invocation", "execution"].iter().map(|c| agg[c].as_f64().unwrap()).sum();
    assert!((sum - 100.0).abs() <= 0.1);
    assert_eq!(v.as_object().unwrap().len(), 2);
}
