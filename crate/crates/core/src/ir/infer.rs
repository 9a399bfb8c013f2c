use std::collections::{BTreeMap, HashMap};

use super::graph::{Graph, Module, RegionFunction, Source, CALL_OP};
use super::topo::topo_order;
use super::types::TensorType;
use crate::error::{Error, Result};
use crate::ops;

pub type Functions = BTreeMap<String, RegionFunction>;

/// Type inference for a graph without call nodes.
pub fn infer_types(graph: &Graph) -> Result<Graph> {
    infer_graph(graph, &Functions::new())
}

/// Fill every node's `out_types`. Call nodes take their result types from
/// the callee body, which must already be inferred.
pub fn infer_graph(graph: &Graph, functions: &Functions) -> Result<Graph> {
    let order = topo_order(graph)?;
    let mut g = graph.clone();
    let index: HashMap<String, usize> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect();
    for id in order {
        let i = index[&id];
        let mut in_types: Vec<TensorType> = Vec::with_capacity(g.nodes[i].inputs.len());
        for r in &g.nodes[i].inputs {
            let t = match g.resolve(&r.node) {
                None => return Err(Error::ty(&id, format!("input {r} does not resolve"))),
                Some(Source::Node(p)) => g.nodes[p].out_types.get(r.index).cloned(),
                Some(_) => g.value_type(r),
            };
            in_types.push(t.ok_or_else(|| Error::ty(&id, format!("input {r} has no such output")))?);
        }
        let node = &g.nodes[i];
        let out = if node.op == CALL_OP {
            let callee = node
                .callee()
                .ok_or_else(|| Error::ty(&id, "call without `callee`"))?;
            let f = functions
                .get(callee)
                .ok_or_else(|| Error::ty(&id, format!("unknown function `{callee}`")))?;
            let params = f.param_types();
            if params != in_types {
                return Err(Error::ShapeMismatch {
                    node: id.clone(),
                    expected: fmt_types(&params),
                    actual: fmt_types(&in_types),
                });
            }
            f.body
                .output_types()
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::ty(&id, format!("function `{callee}` is not type-inferred")))?
        } else {
            ops::infer(&id, &node.op, &node.attrs, &in_types)?
        };
        g.nodes[i].out_types = out;
    }
    for r in &g.outputs {
        if g.value_type(r).is_none() {
            return Err(Error::ty(&r.node, format!("graph output {r} does not resolve")));
        }
    }
    Ok(g)
}

/// Infer function bodies (composites first, since region bodies may call
/// them) and then the main graph.
pub fn infer_module(module: &Module) -> Result<Module> {
    let mut functions = Functions::new();
    let (composites, others): (Vec<_>, Vec<_>) = module
        .functions
        .values()
        .partition(|f| !f.body.nodes.iter().any(|n| n.op == CALL_OP));
    for f in composites.into_iter().chain(others) {
        let body = infer_graph(&f.body, &functions)?;
        functions.insert(
            f.name.clone(),
            RegionFunction {
                body,
                ..f.clone()
            },
        );
    }
    let main = infer_graph(&module.main, &functions)?;
    Ok(Module { main, functions })
}

fn fmt_types(ts: &[TensorType]) -> String {
    let parts: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
    format!("({})", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{AttrValue, ConstantTensor, GraphNode, InputDecl, NodeRef, Tensor};

    fn conv_graph() -> Graph {
        Graph {
            inputs: vec![InputDecl {
                name: "x".into(),
                ttype: TensorType::f32([1, 3, 8, 8]),
            }],
            constants: vec![ConstantTensor::new(
                "w",
                Tensor::from_f32(vec![4, 3, 3, 3], vec![0.0; 108]).unwrap(),
            )],
            nodes: vec![GraphNode::new(
                "c",
                "conv2d",
                vec![NodeRef::first("x"), NodeRef::first("w")],
            )
            .with_attr("padding", AttrValue::Ints(vec![1, 1]))],
            outputs: vec![NodeRef::first("c")],
        }
    }

    #[test]
    fn conv_shape_and_idempotence() {
        let g = infer_types(&conv_graph()).unwrap();
        assert_eq!(g.nodes[0].out_types, vec![TensorType::f32([1, 4, 8, 8])]);
        assert_eq!(infer_types(&g).unwrap(), g);
    }

    #[test]
    fn relu_keeps_shape() {
        let g = Graph {
            inputs: vec![InputDecl {
                name: "x".into(),
                ttype: TensorType::f32([2, 5]),
            }],
            nodes: vec![GraphNode::new("r", "relu", vec![NodeRef::first("x")])],
            outputs: vec![NodeRef::first("r")],
            ..Graph::default()
        };
        assert_eq!(infer_types(&g).unwrap().nodes[0].out_types[0].shape, vec![2, 5]);
    }

    #[test]
    fn add_mismatch_names_node() {
        let g = Graph {
            inputs: vec![
                InputDecl {
                    name: "a".into(),
                    ttype: TensorType::f32([2, 3]),
                },
                InputDecl {
                    name: "b".into(),
                    ttype: TensorType::f32([4, 3]),
                },
            ],
            nodes: vec![GraphNode::new(
                "sum",
                "add",
                vec![NodeRef::first("a"), NodeRef::first("b")],
            )],
            outputs: vec![NodeRef::first("sum")],
            ..Graph::default()
        };
        let err = infer_types(&g).unwrap_err().to_string();
        assert!(err.contains("sum") && err.contains("[2,3]") && err.contains("[4,3]"), "{err}");
    }
}
