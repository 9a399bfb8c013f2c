#![allow(dead_code)]

use std::time::Duration;

use byoc_core::codegen::CompiledModule;
use byoc_core::interp::Inputs;
use byoc_core::ir::{Graph, Tensor};
use byoc_core::partition::{parse_target_config, Fallback};
use byoc_core::patterns::PatternTable;
use byoc_core::pipeline::{compile, CompileOptions, CompileOutput};
use byoc_core::runtime::{InferenceSession, SessionOptions};
use byoc_core::sim::{builtin_backends, builtin_engines};

pub const REFSIM_CFG: &str = include_str!("../../../../configs/refsim.json");
pub const CLIB_CFG: &str = include_str!("../../../../configs/clib.json");
pub const FIXSIM_CFG: &str = include_str!("../../../../configs/fixsim.json");
pub const MIXED_CFG: &str = include_str!("../../../../configs/mixed.json");
pub const HOST_CFG: &str = include_str!("../../../../configs/host_only.json");
pub const PATTERNS: &str = include_str!("../../../../configs/patterns.json");

pub fn options(targets: &str) -> CompileOptions {
    let (registry, partition) = parse_target_config(targets).unwrap();
    CompileOptions {
        registry,
        partition,
        patterns: PatternTable::from_json(PATTERNS).unwrap(),
        ..CompileOptions::default()
    }
}

pub fn options_with(targets: &str, max_nodes: Option<usize>, fallback: Fallback) -> CompileOptions {
    let mut o = options(targets);
    o.partition.max_nodes = max_nodes;
    o.partition.fallback = fallback;
    o
}

pub fn build(graph: &Graph, opts: &CompileOptions) -> CompileOutput {
    compile(graph, opts, &builtin_backends()).unwrap()
}

pub fn session(cm: CompiledModule) -> InferenceSession {
    InferenceSession::load(cm, &builtin_engines(Duration::ZERO), SessionOptions::default()).unwrap()
}

pub fn single(name: &str, t: Tensor) -> Inputs {
    [(name.to_string(), t)].into_iter().collect()
}

pub mod oracle {
    //! Independent reference checks used by property and acceptance tests.

    use std::collections::{BTreeSet, HashMap};

    use byoc_core::ir::Graph;
    use byoc_core::partition::Region;

    /// Multiply count of every conv2d and dense node, found by walking the
    /// loop nest of a direct implementation and counting inner iterations.
    pub fn brute_macs(g: &Graph) -> u64 {
        let typed = byoc_core::ir::infer_types(g).expect("fixture infers");
        let shape = |r: &byoc_core::ir::NodeRef| typed.value_type(r).unwrap().shape;
        let mut total = 0u64;
        for n in &typed.nodes {
            let out = &n.out_types[0].shape;
            match n.op.as_str() {
                "conv2d" => {
                    let w = shape(&n.inputs[1]);
                    let (co, ci, kh, kw) = (w[0], w[1], w[2], w[3]);
                    for _b in 0..out[0] {
                        for _o in 0..co {
                            for _y in 0..out[2] {
                                for _x in 0..out[3] {
                                    for _c in 0..ci {
                                        for _i in 0..kh {
                                            for _j in 0..kw {
                                                total += 1;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                "dense" => {
                    let x = shape(&n.inputs[0]);
                    let w = shape(&n.inputs[1]);
                    for _b in 0..x[0] {
                        for _o in 0..w[0] {
                            for _k in 0..w[1] {
                                total += 1;
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        total
    }

    /// Output expressions of `g` with node ids erased: two graphs with equal
    /// expressions compute the same dataflow up to renaming.
    pub fn canonical(g: &Graph) -> Vec<String> {
        use byoc_core::ir::{NodeRef, Source};
        fn expr(g: &Graph, r: &NodeRef, memo: &mut HashMap<String, String>) -> String {
            let key = r.to_string();
            if let Some(e) = memo.get(&key) {
                return e.clone();
            }
            let e = match g.resolve(&r.node) {
                Some(Source::Input(i)) => format!("param{i}"),
                Some(Source::Constant(i)) => {
                    let c = &g.constants[i];
                    format!("const<{}>{:?}", c.value.ttype(), c.value.content_key())
                }
                Some(Source::Node(i)) => {
                    let n = &g.nodes[i];
                    let args: Vec<String> = n.inputs.iter().map(|a| expr(g, a, memo)).collect();
                    format!("{}.{}{:?}({})", n.op, r.index, n.attrs, args.join(","))
                }
                None => format!("missing<{key}>"),
            };
            memo.insert(key, e.clone());
            e
        }
        let mut memo = HashMap::new();
        g.outputs.iter().map(|r| expr(g, r, &mut memo)).collect()
    }

    /// Producer → consumer edges between node indices.
    pub fn edges(g: &Graph) -> Vec<(usize, usize)> {
        let idx: HashMap<&str, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut e = Vec::new();
        for (c, n) in g.nodes.iter().enumerate() {
            for r in &n.inputs {
                if let Some(&p) = idx.get(r.node.as_str()) {
                    e.push((p, c));
                }
            }
        }
        e
    }

    /// Group of every node: region index for members, a fresh group for
    /// each other node.
    fn groups(g: &Graph, regions: &[BTreeSet<String>]) -> Vec<usize> {
        let mut next = regions.len();
        g.nodes
            .iter()
            .map(|n| match regions.iter().position(|r| r.contains(&n.id)) {
                Some(k) => k,
                None => {
                    next += 1;
                    next - 1
                }
            })
            .collect()
    }

    /// Depth-first cycle search on the graph with each region contracted.
    pub fn contracted_acyclic(g: &Graph, regions: &[BTreeSet<String>]) -> bool {
        let grp = groups(g, regions);
        let n = grp.iter().copied().max().map_or(0, |m| m + 1);
        let mut adj = vec![BTreeSet::new(); n];
        for (p, c) in edges(g) {
            if grp[p] != grp[c] {
                adj[grp[p]].insert(grp[c]);
            }
        }
        // 0 unvisited, 1 on stack, 2 done
        let mut state = vec![0u8; n];
        fn visit(v: usize, adj: &[BTreeSet<usize>], state: &mut [u8]) -> bool {
            state[v] = 1;
            for &w in &adj[v] {
                if state[w] == 1 || (state[w] == 0 && !visit(w, adj, state)) {
                    return false;
                }
            }
            state[v] = 2;
            true
        }
        (0..n).all(|v| state[v] != 0 || visit(v, &adj, &mut state))
    }

    /// Weak connectivity of `set` using only edges inside it.
    pub fn connected(g: &Graph, set: &BTreeSet<String>) -> bool {
        let ids: Vec<usize> = (0..g.nodes.len()).filter(|&i| set.contains(&g.nodes[i].id)).collect();
        let Some(&start) = ids.first() else { return true };
        let inner: Vec<(usize, usize)> = edges(g)
            .into_iter()
            .filter(|(p, c)| ids.contains(p) && ids.contains(c))
            .collect();
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(p, c) in &inner {
                let w = if p == v { c } else if c == v { p } else { continue };
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.len() == ids.len()
    }

    /// A set of two or more same-target regions whose union is connected
    /// and could be contracted without creating a cycle, if one exists.
    pub fn mergeable_subset(g: &Graph, regions: &[Region]) -> Option<Vec<usize>> {
        let targets: BTreeSet<&str> = regions.iter().map(|r| r.target.as_str()).collect();
        for t in targets {
            let ks: Vec<usize> = (0..regions.len()).filter(|&k| regions[k].target == t).collect();
            if ks.len() < 2 || ks.len() > 16 {
                continue;
            }
            for mask in 1u32..(1 << ks.len()) {
                if mask.count_ones() < 2 {
                    continue;
                }
                let chosen: Vec<usize> = (0..ks.len()).filter(|b| mask & (1 << b) != 0).map(|b| ks[b]).collect();
                let union: BTreeSet<String> = chosen.iter().flat_map(|&k| regions[k].nodes.iter().cloned()).collect();
                if !connected(g, &union) {
                    continue;
                }
                let mut sets: Vec<BTreeSet<String>> = (0..regions.len())
                    .filter(|k| !chosen.contains(k))
                    .map(|k| regions[k].nodes.clone())
                    .collect();
                sets.push(union);
                if contracted_acyclic(g, &sets) {
                    return Some(chosen);
                }
            }
        }
        None
    }
}

pub mod props {
    //! Randomized checks shared by the property tests and the acceptance run.
    //! Each case is a pure function of its seed.

    use std::collections::BTreeSet;

    use byoc_core::fixtures::{random_dag, random_inputs};
    use byoc_core::interp::{outputs_bitwise_eq, run, run_module};
    use byoc_core::ir::{Graph, Module};
    use byoc_core::partition::{contracted_is_acyclic, cost_split, form_regions, Assignment, Region, HOST};
    use byoc_core::passes::{common_subexpr_elim, constant_fold, dead_code_elim};
    use byoc_core::patterns::{conv2d_pattern, group_patterns, PatternTable};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::oracle;

    type Check = Result<(), String>;

    const OPS: [&str; 7] = ["conv2d", "relu", "add", "bias_add", "max_pool2d", "avg_pool2d", "softmax"];

    /// Two accelerators with random support sets; everything else stays on host.
    pub fn random_assignment(m: &Module, seed: u64) -> Assignment {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<&str> = OPS.into_iter().filter(|_| rng.gen_bool(0.6)).collect();
        let b: Vec<&str> = OPS.into_iter().filter(|_| rng.gen_bool(0.4)).collect();
        m.main
            .nodes
            .iter()
            .map(|n| {
                let t = if a.contains(&n.op.as_str()) && rng.gen_bool(0.8) {
                    "a"
                } else if b.contains(&n.op.as_str()) {
                    "b"
                } else {
                    HOST
                };
                (n.id.clone(), t.to_string())
            })
            .collect()
    }

    pub fn check_partition(m: &Module, assignment: &Assignment, regions: &[Region]) -> Check {
        let mut covered = BTreeSet::new();
        for r in regions {
            if r.nodes.is_empty() {
                return Err(format!("region {} is empty", r.id));
            }
            for n in &r.nodes {
                if !covered.insert(n.clone()) {
                    return Err(format!("node {n} in two regions"));
                }
                if assignment.get(n) != Some(&r.target) {
                    return Err(format!("node {n} placed in a {} region", r.target));
                }
            }
            if !oracle::connected(&m.main, &r.nodes) {
                return Err(format!("region {} is not connected", r.id));
            }
        }
        let sets: Vec<BTreeSet<String>> = regions.iter().map(|r| r.nodes.clone()).collect();
        if !oracle::contracted_acyclic(&m.main, &sets) {
            return Err("contracted graph has a cycle".into());
        }
        if !contracted_is_acyclic(&m.main, regions) {
            return Err("library cycle check disagrees with the oracle".into());
        }
        Ok(())
    }

    pub fn acyclicity_case(seed: u64) -> Check {
        let m = Module::new(random_dag(seed, 30));
        let a = random_assignment(&m, seed ^ 0x9e37);
        let formed = form_regions(&m, &a).map_err(|e| e.to_string())?;
        check_partition(&m, &a, &formed)?;
        let covered: usize = formed.iter().map(|r| r.nodes.len()).sum();
        let offloaded = a.values().filter(|t| t.as_str() != HOST).count();
        if covered != offloaded {
            return Err(format!("{covered} nodes in regions, {offloaded} assigned"));
        }
        for max in [1, 2, 5] {
            let split = cost_split(&m.main, &formed, Some(max)).map_err(|e| e.to_string())?;
            if split.iter().any(|r| r.nodes.len() > max) {
                return Err(format!("split region exceeds {max} nodes"));
            }
            check_partition(&m, &a, &split)?;
        }
        Ok(())
    }

    pub fn maximality_case(seed: u64) -> Check {
        let m = Module::new(random_dag(seed, 8));
        let a = random_assignment(&m, seed.rotate_left(17));
        let formed = form_regions(&m, &a).map_err(|e| e.to_string())?;
        match oracle::mergeable_subset(&m.main, &formed) {
            None => Ok(()),
            Some(ks) => Err(format!("regions {ks:?} could still merge")),
        }
    }

    fn same(label: &str, a: &Graph, b: &Graph, inputs: &byoc_core::interp::Inputs) -> Check {
        let x = run(a, inputs).map_err(|e| e.to_string())?;
        let y = run(b, inputs).map_err(|e| e.to_string())?;
        if outputs_bitwise_eq(&x, &y) {
            Ok(())
        } else {
            Err(format!("{label} changed the outputs"))
        }
    }

    pub fn pass_case(seed: u64) -> Check {
        let g = random_dag(seed, 20);
        let inputs = random_inputs(&g, &mut ChaCha8Rng::seed_from_u64(!seed));
        let err = |e: byoc_core::Error| e.to_string();
        let folded = constant_fold(&g).map_err(err)?;
        same("constant_fold", &g, &folded, &inputs)?;
        let cse = common_subexpr_elim(&g).map_err(err)?;
        same("cse", &g, &cse, &inputs)?;
        let dce = dead_code_elim(&g);
        same("dce", &g, &dce, &inputs)?;
        if common_subexpr_elim(&cse).map_err(err)? != cse {
            return Err("cse is not idempotent".into());
        }
        if dead_code_elim(&dce) != dce {
            return Err("dce is not idempotent".into());
        }
        let all = dead_code_elim(&common_subexpr_elim(&folded).map_err(err)?);
        same("fold+cse+dce", &g, &all, &inputs)
    }

    pub fn grouping_case(seed: u64) -> Check {
        let g = random_dag(seed, 20);
        let table = PatternTable::new(vec![conv2d_pattern()]).map_err(|e| e.to_string())?;
        let grouped = group_patterns(&Module::new(g.clone()), &table).map_err(|e| e.to_string())?;
        let inputs = random_inputs(&g, &mut ChaCha8Rng::seed_from_u64(seed));
        let want = run(&g, &inputs).map_err(|e| e.to_string())?;
        let got = run_module(&grouped, &inputs).map_err(|e| e.to_string())?;
        if outputs_bitwise_eq(&want, &got) {
            Ok(())
        } else {
            Err("grouped module changed the outputs".into())
        }
    }
}

pub mod int8 {
    //! Direct int8 reference for a single padded 3x3 convolution and the
    //! worst-case error of the affine scheme on it.

    /// Affine parameters from an observed range, same rounding as the
    /// calibration rule: `S = (hi - lo) / 255`, `Z = round(-128 - lo / S)`,
    /// over the range widened to contain zero.
    #[derive(Clone, Copy, Debug)]
    pub struct Affine {
        pub s: f32,
        pub z: i64,
    }

    pub fn affine(lo: f32, hi: f32) -> Affine {
        let (lo, hi) = (lo.min(0.0), hi.max(0.0));
        let s = (hi as f64 - lo as f64) / 255.0;
        let z = (-128.0 - lo as f64 / s).round_ties_even().clamp(-128.0, 127.0);
        Affine { s: s as f32, z: z as i64 }
    }

    pub fn range(v: &[f32]) -> (f32, f32) {
        v.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
    }

    pub fn quantize(x: f32, a: Affine) -> i64 {
        ((x as f64 / a.s as f64).round_ties_even() as i64 + a.z).clamp(-128, 127)
    }

    /// NCHW input `[1, c, h, w]`, OIHW weight `[o, c, 3, 3]`, stride 1, pad 1.
    pub struct Conv<'a> {
        pub x: &'a [f32],
        pub w: &'a [f32],
        pub c: usize,
        pub h: usize,
        pub wd: usize,
        pub o: usize,
    }

    impl Conv<'_> {
        /// Visit every in-bounds tap of output `(o, y, x)`.
        fn taps(&self, o: usize, y: usize, x: usize, mut f: impl FnMut(f32, f32)) {
            for c in 0..self.c {
                for i in 0..3 {
                    for j in 0..3 {
                        let (yy, xx) = (y as i64 + i as i64 - 1, x as i64 + j as i64 - 1);
                        if yy < 0 || xx < 0 || yy >= self.h as i64 || xx >= self.wd as i64 {
                            continue;
                        }
                        let xv = self.x[(c * self.h + yy as usize) * self.wd + xx as usize];
                        let wv = self.w[((o * self.c + c) * 3 + i) * 3 + j];
                        f(xv, wv);
                    }
                }
            }
        }

        fn outputs(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
            (0..self.o).flat_map(move |o| (0..self.h).flat_map(move |y| (0..self.wd).map(move |x| (o, y, x))))
        }

        /// Per-output bound: input and weight rounding through every tap,
        /// output rounding, and up to half a step lost to range clamping.
        pub fn bound(&self, sx: f32, sw: f32, sout: f32) -> Vec<f64> {
            let (sx, sw, sout) = (sx as f64, sw as f64, sout as f64);
            self.outputs()
                .map(|(o, y, x)| {
                    let mut b = 0.0;
                    let mut mag = 0.0;
                    self.taps(o, y, x, |xv, wv| {
                        let (xv, wv) = (xv.abs() as f64, wv.abs() as f64);
                        b += wv * sx / 2.0 + xv * sw / 2.0 + sx * sw / 4.0;
                        mag += xv * wv;
                    });
                    b + sout + 1e-6 * (mag + 1.0)
                })
                .collect()
        }

        /// Integer evaluation with the given boundary parameters.
        pub fn simulate(&self, ax: Affine, aw: Affine, aout: Affine) -> Vec<f64> {
            self.outputs()
                .map(|(o, y, x)| {
                    let mut acc = 0i64;
                    self.taps(o, y, x, |xv, wv| {
                        acc += (quantize(xv, ax) - ax.z) * (quantize(wv, aw) - aw.z);
                    });
                    let real = acc as f64 * ax.s as f64 * aw.s as f64;
                    let q = ((real / aout.s as f64).round() as i64 + aout.z).clamp(-128, 127);
                    (q - aout.z) as f64 * aout.s as f64
                })
                .collect()
        }
    }
}
