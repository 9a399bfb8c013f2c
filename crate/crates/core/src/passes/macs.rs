use crate::error::{Error, Result};
use crate::ir::{Functions, Graph, GraphNode, CALL_OP};
use crate::ops;

/// Multiply-accumulate count of one primitive node. Only `conv2d` and
/// `dense` contribute; types must be inferred.
pub fn node_macs(graph: &Graph, node: &GraphNode) -> Result<u64> {
    if !ops::has_macs(&node.op) {
        return Ok(0);
    }
    let missing = || Error::ty(&node.id, "MAC counting needs inferred shapes");
    let out = node.out_types.first().ok_or_else(missing)?;
    let weight = node
        .inputs
        .get(1)
        .and_then(|r| graph.value_type(r))
        .ok_or_else(missing)?;
    let prod = |s: &[usize]| s.iter().map(|&d| d as u64).product::<u64>();
    Ok(match node.op.as_str() {
        // N*Cout*Hout*Wout is the output element count in either layout.
        "conv2d" => prod(&out.shape) * prod(&weight.shape[1..]),
        _ => prod(&out.shape) * weight.shape[1] as u64,
    })
}

/// Total MACs in `graph`, descending into called functions.
pub fn count_macs(graph: &Graph, functions: &Functions) -> Result<u64> {
    let mut total = 0u64;
    for n in &graph.nodes {
        total += if n.op == CALL_OP {
            let callee = n.callee().unwrap_or_default();
            let f = functions
                .get(callee)
                .ok_or_else(|| Error::ty(&n.id, format!("unknown function `{callee}`")))?;
            count_macs(&f.body, functions)?
        } else {
            node_macs(graph, n)?
        };
    }
    Ok(total)
}

pub fn count_graph_macs(graph: &Graph) -> Result<u64> {
    count_macs(graph, &Functions::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{infer_types, AttrValue, ConstantTensor, GraphNode, InputDecl, NodeRef, Tensor, TensorType};

    fn single(op: &str, x: &[usize], w: &[usize], attrs: &[(&str, AttrValue)]) -> Graph {
        let mut node = GraphNode::new("n", op, vec![NodeRef::first("x"), NodeRef::first("w")]);
        for (k, v) in attrs {
            node.attrs.insert(k.to_string(), v.clone());
        }
        let g = Graph {
            inputs: vec![InputDecl {
                name: "x".into(),
                ttype: TensorType::f32(x.to_vec()),
            }],
            constants: vec![ConstantTensor::new(
                "w",
                Tensor::zeros(&TensorType::f32(w.to_vec())),
            )],
            nodes: vec![node],
            outputs: vec![NodeRef::first("n")],
        };
        infer_types(&g).unwrap()
    }

    /// Counts multiply steps by literally walking the loop nest of a
    /// padded stride-1 convolution.
    fn brute_conv_macs(x: [usize; 4], w: [usize; 4], pad: usize) -> u64 {
        let (oh, ow) = (x[2] + 2 * pad - w[2] + 1, x[3] + 2 * pad - w[3] + 1);
        let mut count = 0;
        for _n in 0..x[0] {
            for _co in 0..w[0] {
                for _y in 0..oh {
                    for _x in 0..ow {
                        for _ci in 0..w[1] {
                            for _ky in 0..w[2] {
                                for _kx in 0..w[3] {
                                    count += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn conv_macs() {
        let g = single(
            "conv2d",
            &[1, 3, 8, 8],
            &[4, 3, 3, 3],
            &[("padding", AttrValue::Ints(vec![1, 1]))],
        );
        let expected = brute_conv_macs([1, 3, 8, 8], [4, 3, 3, 3], 1);
        assert_eq!(expected, 6912);
        assert_eq!(count_graph_macs(&g).unwrap(), 6912);
    }

    #[test]
    fn dense_macs() {
        let g = single("dense", &[2, 10], &[5, 10], &[]);
        assert_eq!(count_graph_macs(&g).unwrap(), 100);
    }

    #[test]
    fn data_movement_has_no_macs() {
        let g = Graph {
            inputs: vec![InputDecl {
                name: "x".into(),
                ttype: TensorType::f32([2, 3]),
            }],
            nodes: vec![
                GraphNode::new("r", "relu", vec![NodeRef::first("x")]),
                GraphNode::new("t", "transpose", vec![NodeRef::first("r")]),
                GraphNode::new("s", "reshape", vec![NodeRef::first("t")])
                    .with_attr("newshape", AttrValue::Ints(vec![6])),
            ],
            outputs: vec![NodeRef::first("s")],
            ..Graph::default()
        };
        let g = infer_types(&g).unwrap();
        assert_eq!(count_graph_macs(&g).unwrap(), 0);
    }

    #[test]
    fn missing_types_is_error() {
        let mut g = single("dense", &[2, 10], &[5, 10], &[]);
        g.nodes[0].out_types.clear();
        assert!(count_graph_macs(&g).is_err());
    }
}
