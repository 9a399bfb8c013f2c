use std::collections::HashSet;

use super::fresh_name;
use crate::error::Result;
use crate::ir::{topo_order, ConstantTensor, DataType, Graph, NodeRef, Source, Tensor, CALL_OP};
use crate::kernels;

/// Replace every node whose inputs are all constants by a constant computed
/// with the host kernels. New constants are named `cf_<node id>`.
pub fn constant_fold(graph: &Graph) -> Result<Graph> {
    let mut g = graph.clone();
    let mut removed: HashSet<String> = HashSet::new();
    for id in topo_order(graph)? {
        let node = g.node(&id).unwrap();
        if node.op == CALL_OP || node.inputs.is_empty() {
            continue;
        }
        let args: Option<Vec<&Tensor>> = node
            .inputs
            .iter()
            .map(|r| match g.resolve(&r.node) {
                Some(Source::Constant(i)) if r.index == 0 => Some(&g.constants[i].value),
                _ => None,
            })
            .collect();
        let Some(args) = args else { continue };
        let mut outs = kernels::eval(&node.op, &node.attrs, &args)?;
        let value = outs.remove(0);
        if !matches!(value.dtype(), DataType::F32 | DataType::I8) {
            continue;
        }
        let name = fresh_name(&format!("cf_{id}"), |n| g.resolve(n).is_some());
        g.constants.push(ConstantTensor::new(name.clone(), value));
        g.replace_uses(&NodeRef::first(id.clone()), &NodeRef::first(name));
        removed.insert(id);
    }
    g.nodes.retain(|n| !removed.contains(&n.id));
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{GraphNode, InputDecl, TensorType};

    fn scalar(name: &str, v: f32) -> ConstantTensor {
        ConstantTensor::new(name, Tensor::from_f32(vec![1], vec![v]).unwrap())
    }

    #[test]
    fn add_of_constants() {
        let g = Graph {
            constants: vec![scalar("a", 2.0), scalar("b", 3.0)],
            nodes: vec![GraphNode::new(
                "s",
                "add",
                vec![NodeRef::first("a"), NodeRef::first("b")],
            )],
            outputs: vec![NodeRef::first("s")],
            ..Graph::default()
        };
        let f = constant_fold(&g).unwrap();
        assert!(f.nodes.is_empty());
        assert_eq!(f.outputs, vec![NodeRef::first("cf_s")]);
        assert_eq!(f.constant("cf_s").unwrap().value.as_f32().unwrap(), &[5.0]);
    }

    #[test]
    fn relu_of_constant() {
        let g = Graph {
            constants: vec![ConstantTensor::new(
                "c",
                Tensor::from_f32(vec![2], vec![-1.0, 2.0]).unwrap(),
            )],
            nodes: vec![GraphNode::new("r", "relu", vec![NodeRef::first("c")])],
            outputs: vec![NodeRef::first("r")],
            ..Graph::default()
        };
        let f = constant_fold(&g).unwrap();
        assert_eq!(f.constant("cf_r").unwrap().value.as_f32().unwrap(), &[0.0, 2.0]);
    }

    #[test]
    fn non_constant_input_untouched() {
        let g = Graph {
            inputs: vec![InputDecl {
                name: "x".into(),
                ttype: TensorType::f32([1, 1, 3, 3]),
            }],
            constants: vec![ConstantTensor::new(
                "w",
                Tensor::from_f32(vec![1, 1, 1, 1], vec![2.0]).unwrap(),
            )],
            nodes: vec![GraphNode::new(
                "c",
                "conv2d",
                vec![NodeRef::first("x"), NodeRef::first("w")],
            )],
            outputs: vec![NodeRef::first("c")],
        };
        assert_eq!(constant_fold(&g).unwrap(), g);
    }

    #[test]
    fn chained_constants_fold_transitively() {
        let g = Graph {
            constants: vec![scalar("a", -2.0), scalar("b", 3.0)],
            nodes: vec![
                GraphNode::new("s", "add", vec![NodeRef::first("a"), NodeRef::first("b")]),
                GraphNode::new("r", "relu", vec![NodeRef::first("s")]),
            ],
            outputs: vec![NodeRef::first("r")],
            ..Graph::default()
        };
        let f = constant_fold(&g).unwrap();
        assert!(f.nodes.is_empty());
        assert_eq!(f.constant("cf_r").unwrap().value.as_f32().unwrap(), &[1.0]);
    }

    #[test]
    fn kernel_errors_propagate() {
        let g = Graph {
            constants: vec![ConstantTensor::new(
                "d",
                Tensor::from_f32(vec![1, 5], vec![0.0, 0.0, -1.0, 1.0, 0.5]).unwrap(),
            )],
            nodes: vec![GraphNode::new("n", "nms", vec![NodeRef::first("d")])],
            outputs: vec![NodeRef::first("n")],
            ..Graph::default()
        };
        assert!(constant_fold(&g).is_err());
    }
}
