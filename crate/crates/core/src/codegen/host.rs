use std::collections::HashMap;

use super::{EntryInfo, EntrySource, HostSubModule, Instr, MetadataBlob, HOST_OWNER};
use crate::error::{Error, Result};
use crate::ir::{topo_order, Module, NodeRef, Source, TensorType, CALL_OP};
use crate::ops;

struct Entries {
    ids: HashMap<NodeRef, usize>,
    info: Vec<EntryInfo>,
}

impl Entries {
    fn add(&mut self, r: NodeRef, ttype: TensorType, source: EntrySource) -> usize {
        let id = self.info.len();
        self.info.push(EntryInfo { id, ttype, source });
        self.ids.insert(r, id);
        id
    }
}

/// Lower the main graph of an encapsulated, type-inferred module to a host
/// instruction plan. Graph inputs take the first entry ids; the remaining
/// ids are handed out while traversing nodes in topological order, a
/// node's not yet seen constant inputs before its outputs.
pub fn codegen_host(module: &Module) -> Result<(HostSubModule, MetadataBlob)> {
    let g = &module.main;
    let mut meta = MetadataBlob::default();
    let mut entries = Entries {
        ids: HashMap::new(),
        info: Vec::new(),
    };
    for i in &g.inputs {
        entries.add(NodeRef::first(&i.name), i.ttype.clone(), EntrySource::Input(i.name.clone()));
    }
    let constant_entry = |entries: &mut Entries, meta: &mut MetadataBlob, r: &NodeRef| -> Result<usize> {
        if let Some(&id) = entries.ids.get(r) {
            return Ok(id);
        }
        match g.resolve(&r.node) {
            Some(Source::Constant(c)) if r.index == 0 => {
                let c = &g.constants[c];
                meta.add_constant(HOST_OWNER, &c.name, &c.value);
                Ok(entries.add(r.clone(), c.ttype(), EntrySource::Constant(c.name.clone())))
            }
            _ => Err(Error::Codegen(format!("value {r} is read before it is written"))),
        }
    };

    let index = g.node_index();
    let mut plan = Vec::with_capacity(g.nodes.len());
    for id in topo_order(g)? {
        let node = &g.nodes[index[id.as_str()]];
        let inputs = node
            .inputs
            .iter()
            .map(|r| constant_entry(&mut entries, &mut meta, r))
            .collect::<Result<Vec<_>>>()?;
        if node.out_types.is_empty() {
            return Err(Error::Codegen(format!("node `{id}` is not type-inferred")));
        }
        let outputs: Vec<usize> = node
            .out_types
            .iter()
            .enumerate()
            .map(|(k, t)| entries.add(NodeRef::new(&node.id, k), t.clone(), EntrySource::Intermediate))
            .collect();
        let instr = if node.op == CALL_OP {
            let callee = node
                .callee()
                .ok_or_else(|| Error::Codegen(format!("call `{id}` without callee")))?;
            let f = module
                .functions
                .get(callee)
                .ok_or_else(|| Error::Codegen(format!("call to unknown function `{callee}`")))?;
            if f.target().is_none() {
                return Err(Error::Codegen(format!(
                    "call `{id}` to `{callee}` has no target; composites must be inlined first"
                )));
            }
            Instr::ExternCall {
                fn_name: callee.to_string(),
                inputs,
                outputs,
            }
        } else {
            if !ops::is_registered(&node.op) {
                return Err(Error::UnknownOp(node.op.clone()));
            }
            Instr::Op {
                op: node.op.clone(),
                attrs: node.attrs.clone(),
                inputs,
                outputs,
            }
        };
        plan.push(instr);
    }
    let outputs = g
        .outputs
        .iter()
        .map(|r| constant_entry(&mut entries, &mut meta, r))
        .collect::<Result<Vec<_>>>()?;
    meta.entries = entries.info;
    Ok((HostSubModule { plan, outputs }, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{infer_module, ConstantTensor, Graph, GraphNode, InputDecl, Tensor};

    fn module(g: Graph) -> Module {
        infer_module(&Module::new(g)).unwrap()
    }

    #[test]
    fn single_relu() {
        let g = Graph {
            inputs: vec![InputDecl {
                name: "x".into(),
                ttype: TensorType::f32([3]),
            }],
            nodes: vec![GraphNode::new("r", "relu", vec![NodeRef::first("x")])],
            outputs: vec![NodeRef::first("r")],
            ..Graph::default()
        };
        let (host, meta) = codegen_host(&module(g)).unwrap();
        assert_eq!(host.plan.len(), 1);
        assert_eq!(host.plan[0].inputs(), &[0]);
        assert_eq!(host.plan[0].outputs(), &[1]);
        assert_eq!(host.outputs, vec![1]);
        assert!(meta.constants.is_empty());
    }

    #[test]
    fn conv_reads_entries_zero_and_one() {
        let g = Graph {
            inputs: vec![InputDecl {
                name: "x".into(),
                ttype: TensorType::f32([1, 1, 4, 4]),
            }],
            constants: vec![ConstantTensor::new(
                "w",
                Tensor::from_f32(vec![2, 1, 1, 1], vec![1.0, 2.0]).unwrap(),
            )],
            nodes: vec![
                GraphNode::new("c", "conv2d", vec![NodeRef::first("x"), NodeRef::first("w")]),
                GraphNode::new("r", "relu", vec![NodeRef::first("c")]),
            ],
            outputs: vec![NodeRef::first("r")],
        };
        let (host, meta) = codegen_host(&module(g)).unwrap();
        assert_eq!(host.plan[0].inputs(), &[0, 1]);
        assert_eq!(host.plan[0].outputs(), &[2]);
        assert_eq!(meta.constants.len(), 1);
        assert_eq!(meta.constants[0].owners, vec![HOST_OWNER.to_string()]);
        assert_eq!(meta.entries[1].source, EntrySource::Constant("w".into()));
    }

    #[test]
    fn unknown_host_op_rejected() {
        let g = Graph {
            inputs: vec![InputDecl {
                name: "x".into(),
                ttype: TensorType::f32([3]),
            }],
            nodes: vec![GraphNode::new("r", "relu", vec![NodeRef::first("x")])],
            outputs: vec![NodeRef::first("r")],
            ..Graph::default()
        };
        let mut m = module(g);
        m.main.nodes[0].op = "mystery".into();
        assert!(matches!(codegen_host(&m), Err(Error::UnknownOp(op)) if op == "mystery"));
    }
}
