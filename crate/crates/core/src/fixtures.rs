//! Built-in model fixtures and random graph generators.
//!
//! All weights come from a fixed-seed generator, so every fixture is
//! reproducible bit for bit.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::interp::Inputs;
use crate::ir::{AttrValue, ConstantTensor, Graph, GraphNode, InputDecl, NodeRef, Tensor, TensorType};

const WEIGHT_SEED: u64 = 0x5eed_b10c;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixtureKind {
    Chain { n: usize, k: usize },
    TinyCnn,
    Detection,
    QuantDemo,
}

impl FixtureKind {
    pub fn build(self) -> Result<Graph> {
        match self {
            FixtureKind::Chain { n, k } => chain(n, k),
            FixtureKind::TinyCnn => Ok(tiny_cnn()),
            FixtureKind::Detection => Ok(detection()),
            FixtureKind::QuantDemo => Ok(quant_demo()),
        }
    }
}

impl FromStr for FixtureKind {
    type Err = Error;

    /// `chain` (N=2, K=3), `tiny_cnn`, `detection`, `quant_demo`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "chain" => FixtureKind::Chain { n: 2, k: 3 },
            "tiny_cnn" => FixtureKind::TinyCnn,
            "detection" => FixtureKind::Detection,
            "quant_demo" => FixtureKind::QuantDemo,
            other => {
                return Err(Error::Config(format!(
                    "unknown fixture `{other}` (expected chain, tiny_cnn, detection, quant_demo)"
                )))
            }
        })
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixtureKind::Chain { n, k } => write!(f, "chain(n={n},k={k})"),
            FixtureKind::TinyCnn => f.write_str("tiny_cnn"),
            FixtureKind::Detection => f.write_str("detection"),
            FixtureKind::QuantDemo => f.write_str("quant_demo"),
        }
    }
}

/// Sequential node ids (`n00`, `n01`, ...) so lexicographic and creation
/// order agree.
struct Builder {
    g: Graph,
    rng: ChaCha8Rng,
    width: usize,
    next: usize,
}

impl Builder {
    fn new(total_nodes: usize) -> Self {
        Builder {
            g: Graph::default(),
            rng: ChaCha8Rng::seed_from_u64(WEIGHT_SEED),
            width: total_nodes.saturating_sub(1).to_string().len().max(2),
            next: 0,
        }
    }

    fn input(&mut self, name: &str, shape: &[usize]) -> NodeRef {
        self.g.inputs.push(InputDecl {
            name: name.into(),
            ttype: TensorType::f32(shape.to_vec()),
        });
        NodeRef::first(name)
    }

    fn constant(&mut self, name: &str, shape: &[usize], range: f32) -> NodeRef {
        let len = shape.iter().product();
        let data = (0..len).map(|_| self.rng.gen_range(-range..=range)).collect();
        let t = Tensor::from_f32(shape.to_vec(), data).expect("length matches");
        self.g.constants.push(ConstantTensor::new(name, t));
        NodeRef::first(name)
    }

    fn node(&mut self, op: &str, inputs: Vec<NodeRef>, attrs: &[(&str, AttrValue)]) -> NodeRef {
        let id = format!("n{:0w$}", self.next, w = self.width);
        self.next += 1;
        let mut n = GraphNode::new(id.clone(), op, inputs);
        for (k, v) in attrs {
            n.attrs.insert(k.to_string(), v.clone());
        }
        self.g.nodes.push(n);
        NodeRef::first(id)
    }

    fn conv(&mut self, x: NodeRef, w: NodeRef, pad: i64) -> NodeRef {
        self.node("conv2d", vec![x, w], &[("padding", AttrValue::Ints(vec![pad, pad]))])
    }

    fn finish(mut self, out: NodeRef) -> Graph {
        self.g.outputs = vec![out];
        self.g
    }
}

/// `n` residual blocks `conv → bias_add → add(block input) → relu` and a
/// final conv (4n+1 operators), one `host_only_postproc`, `k` operators
/// alternating `relu` / `add(constant)`, and a closing
/// `conv → bias_add → relu` sequence.
pub fn chain(n: usize, k: usize) -> Result<Graph> {
    if n == 0 {
        return Err(Error::Config("chain needs n >= 1".into()));
    }
    let shape = [1, 4, 8, 8];
    let mut b = Builder::new(4 * n + 1 + 1 + k + 3);
    let mut x = b.input("x", &shape);
    for i in 0..n {
        let w = b.constant(&format!("w{i}"), &[4, 4, 3, 3], 0.3);
        let bias = b.constant(&format!("bias{i}"), &[4], 0.1);
        let c = b.conv(x.clone(), w, 1);
        let ba = b.node("bias_add", vec![c, bias], &[]);
        let s = b.node("add", vec![ba, x], &[]);
        x = b.node("relu", vec![s], &[]);
    }
    let w = b.constant("w_last", &[4, 4, 3, 3], 0.3);
    x = b.conv(x, w, 1);
    x = b.node("host_only_postproc", vec![x], &[]);
    for j in 0..k {
        x = if j % 2 == 0 {
            b.node("relu", vec![x], &[])
        } else {
            let c = b.constant(&format!("shift{j}"), &shape, 0.5);
            b.node("add", vec![x, c], &[])
        };
    }
    let w = b.constant("w_tail", &[4, 4, 3, 3], 0.3);
    let bias = b.constant("bias_tail", &[4], 0.1);
    let c = b.conv(x, w, 1);
    let ba = b.node("bias_add", vec![c, bias], &[]);
    let r = b.node("relu", vec![ba], &[]);
    Ok(b.finish(r))
}

/// Two `conv → bias_add → relu → max_pool2d` blocks, then
/// `reshape → dense → bias_add → softmax`.
pub fn tiny_cnn() -> Graph {
    let mut b = Builder::new(12);
    let mut x = b.input("x", &[1, 3, 8, 8]);
    for (i, cin) in [3usize, 8].into_iter().enumerate() {
        let w = b.constant(&format!("w{i}"), &[8, cin, 3, 3], 0.3);
        let bias = b.constant(&format!("bias{i}"), &[8], 0.1);
        let c = b.conv(x, w, 1);
        let ba = b.node("bias_add", vec![c, bias], &[]);
        let r = b.node("relu", vec![ba], &[]);
        x = b.node("max_pool2d", vec![r], &[("pool_size", AttrValue::Ints(vec![2, 2]))]);
    }
    let flat = b.node("reshape", vec![x], &[("newshape", AttrValue::Ints(vec![1, 32]))]);
    let w = b.constant("w_fc", &[10, 32], 0.3);
    let bias = b.constant("bias_fc", &[10], 0.1);
    let d = b.node("dense", vec![flat, w], &[]);
    let ba = b.node("bias_add", vec![d, bias], &[]);
    let s = b.node("softmax", vec![ba], &[]);
    b.finish(s)
}

/// Convolutional backbone with a 1x1 head producing 64 boxes
/// `[cx, cy, w, h, score]`, followed by host-only post-processing, NMS and
/// box-shaping operators that carry no MACs.
pub fn detection() -> Graph {
    let mut b = Builder::new(15);
    let mut x = b.input("x", &[1, 3, 8, 8]);
    for (i, cin) in [3usize, 8].into_iter().enumerate() {
        let w = b.constant(&format!("w{i}"), &[8, cin, 3, 3], 0.3);
        let bias = b.constant(&format!("bias{i}"), &[8], 0.1);
        let c = b.conv(x, w, 1);
        let ba = b.node("bias_add", vec![c, bias], &[]);
        x = b.node("relu", vec![ba], &[]);
    }
    let w = b.constant("w_head", &[5, 8, 1, 1], 0.3);
    let head = b.conv(x, w, 0);
    let post = b.node("host_only_postproc", vec![head], &[]);
    let r = b.node("relu", vec![post], &[]);
    let rows = b.node("reshape", vec![r], &[("newshape", AttrValue::Ints(vec![5, 64]))]);
    let boxes = b.node("transpose", vec![rows], &[("axes", AttrValue::Ints(vec![1, 0]))]);
    let kept = b.node("nms", vec![boxes], &[("iou_threshold", AttrValue::Real(0.5))]);
    let flat = b.node("reshape", vec![kept], &[("newshape", AttrValue::Ints(vec![1, 320]))]);
    let s = b.node("softmax", vec![flat], &[]);
    let out = b.node("reshape", vec![s], &[("newshape", AttrValue::Ints(vec![64, 5]))]);
    b.finish(out)
}

/// A single padded conv2d, the quantization reference case.
pub fn quant_demo() -> Graph {
    let mut b = Builder::new(1);
    let x = b.input("x", &[1, 3, 6, 6]);
    let w = b.constant("w", &[4, 3, 3, 3], 0.5);
    let c = b.conv(x, w, 1);
    b.finish(c)
}

/// Uniform `[-1, 1]` values for every graph input.
pub fn random_inputs(graph: &Graph, rng: &mut impl Rng) -> Inputs {
    graph
        .inputs
        .iter()
        .map(|d| {
            let data = (0..d.ttype.numel()).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
            (d.name.clone(), Tensor::from_f32(d.ttype.shape.clone(), data).unwrap())
        })
        .collect()
}

/// Random well-typed DAG over `(1,2,4,4)` activations with at most
/// `max_nodes` operators. It mixes constant-only subexpressions, duplicated
/// nodes, dead branches and `conv → bias_add → relu` sequences so that
/// every generic pass and the conv pattern have something to act on. Node
/// ids are `v00`, `v01`, ... but nodes are listed in shuffled order.
pub fn random_dag(seed: u64, max_nodes: usize) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [1usize, 2, 4, 4];
    let mut g = Graph::default();
    let n_inputs = rng.gen_range(1..=2);
    let mut acts: Vec<NodeRef> = Vec::new();
    for i in 0..n_inputs {
        let name = format!("x{i}");
        g.inputs.push(InputDecl {
            name: name.clone(),
            ttype: TensorType::f32(shape.to_vec()),
        });
        acts.push(NodeRef::first(name));
    }
    let tensor = |rng: &mut ChaCha8Rng, s: &[usize]| {
        let len: usize = s.iter().product();
        Tensor::from_f32(s.to_vec(), (0..len).map(|_| rng.gen_range(-1.0f32..=1.0)).collect()).unwrap()
    };
    let mut const_acts: Vec<NodeRef> = Vec::new();
    for i in 0..rng.gen_range(1..=2) {
        let t = tensor(&mut rng, &shape);
        g.constants.push(ConstantTensor::new(format!("k{i}"), t.clone()));
        const_acts.push(NodeRef::first(format!("k{i}")));
        if rng.gen_bool(0.5) {
            // Same contents under another name.
            g.constants.push(ConstantTensor::new(format!("k{i}_dup"), t));
            const_acts.push(NodeRef::first(format!("k{i}_dup")));
        }
    }
    g.constants.push(ConstantTensor::new("wc", tensor(&mut rng, &[2, 2, 3, 3])));
    g.constants.push(ConstantTensor::new("bc", tensor(&mut rng, &[2])));

    let target = rng.gen_range(1..=max_nodes.max(1));
    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut next_id = 0usize;
    let mut fresh = || {
        let id = format!("v{next_id:02}");
        next_id += 1;
        id
    };
    let pad = |n: GraphNode| n.with_attr("padding", AttrValue::Ints(vec![1, 1]));
    while nodes.len() < target {
        let pick = |rng: &mut ChaCha8Rng, acts: &[NodeRef], consts: &[NodeRef]| {
            if !consts.is_empty() && rng.gen_bool(0.2) {
                consts.choose(rng).unwrap().clone()
            } else {
                acts.choose(rng).unwrap().clone()
            }
        };
        let roll = rng.gen_range(0..100);
        if roll < 12 && !nodes.is_empty() {
            let mut dup = nodes.choose(&mut rng).unwrap().clone();
            dup.id = fresh();
            acts.push(NodeRef::first(dup.id.clone()));
            nodes.push(dup);
            continue;
        }
        if roll < 27 && nodes.len() + 3 <= target {
            let src = pick(&mut rng, &acts, &[]);
            let c = pad(GraphNode::new(fresh(), "conv2d", vec![src, NodeRef::first("wc")]));
            let mut last = NodeRef::first(c.id.clone());
            nodes.push(c);
            if rng.gen_bool(0.6) {
                let b = GraphNode::new(fresh(), "bias_add", vec![last, NodeRef::first("bc")]);
                last = NodeRef::first(b.id.clone());
                nodes.push(b);
            }
            let r = GraphNode::new(fresh(), "relu", vec![last]);
            acts.push(NodeRef::first(r.id.clone()));
            nodes.push(r);
            continue;
        }
        let node = match rng.gen_range(0..7) {
            0 => GraphNode::new(fresh(), "relu", vec![pick(&mut rng, &acts, &const_acts)]),
            1 => GraphNode::new(
                fresh(),
                "add",
                vec![pick(&mut rng, &acts, &const_acts), pick(&mut rng, &acts, &const_acts)],
            ),
            2 => pad(GraphNode::new(
                fresh(),
                "conv2d",
                vec![pick(&mut rng, &acts, &const_acts), NodeRef::first("wc")],
            )),
            3 => GraphNode::new(
                fresh(),
                "bias_add",
                vec![pick(&mut rng, &acts, &const_acts), NodeRef::first("bc")],
            ),
            4 => GraphNode::new(fresh(), "max_pool2d", vec![pick(&mut rng, &acts, &const_acts)])
                .with_attr("pool_size", AttrValue::Ints(vec![3, 3]))
                .with_attr("strides", AttrValue::Ints(vec![1, 1]))
                .with_attr("padding", AttrValue::Ints(vec![1, 1])),
            5 => GraphNode::new(fresh(), "avg_pool2d", vec![pick(&mut rng, &acts, &const_acts)])
                .with_attr("pool_size", AttrValue::Ints(vec![3, 3]))
                .with_attr("strides", AttrValue::Ints(vec![1, 1]))
                .with_attr("padding", AttrValue::Ints(vec![1, 1])),
            _ => GraphNode::new(fresh(), "softmax", vec![pick(&mut rng, &acts, &const_acts)]),
        };
        // Constant-only operands feed folding; keep them in the pool too.
        let all_const = node
            .inputs
            .iter()
            .all(|r| g.constants.iter().any(|c| c.name == r.node));
        if all_const {
            const_acts.push(NodeRef::first(node.id.clone()));
        } else {
            acts.push(NodeRef::first(node.id.clone()));
        }
        nodes.push(node);
    }

    let mut outputs: Vec<NodeRef> = nodes
        .iter()
        .filter(|_| rng.gen_bool(0.3))
        .map(|n| NodeRef::first(n.id.clone()))
        .collect();
    let last = NodeRef::first(nodes.last().unwrap().id.clone());
    if !outputs.contains(&last) {
        outputs.push(last);
    }
    nodes.shuffle(&mut rng);
    g.nodes = nodes;
    g.outputs = outputs;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{infer_types, validate_graph};
    use crate::passes::count_graph_macs;

    #[test]
    fn fixtures_validate_and_infer() {
        for kind in [
            FixtureKind::Chain { n: 2, k: 3 },
            FixtureKind::TinyCnn,
            FixtureKind::Detection,
            FixtureKind::QuantDemo,
        ] {
            let g = kind.build().unwrap();
            assert_eq!(validate_graph(&g), Ok(()), "{kind}");
            infer_types(&g).unwrap();
        }
    }

    #[test]
    fn chain_shape() {
        let g = chain(2, 3).unwrap();
        assert_eq!(g.nodes.len(), 9 + 1 + 3 + 3);
        assert_eq!(g.nodes[9].op, "host_only_postproc");
    }

    #[test]
    fn detection_post_processing_has_no_macs() {
        let g = infer_types(&detection()).unwrap();
        let mut post = g.clone();
        post.nodes.retain(|n| !n.op.starts_with("conv"));
        assert_eq!(count_graph_macs(&post).unwrap(), 0);
        assert!(g.nodes.iter().any(|n| n.op == "nms"));
    }

    #[test]
    fn random_dags_are_valid() {
        for seed in 0..200 {
            let g = random_dag(seed, 20);
            assert_eq!(validate_graph(&g), Ok(()), "seed {seed}");
            infer_types(&g).unwrap();
        }
    }
}
