use std::collections::{HashMap, HashSet};

use crate::error::Result;
use crate::ir::{attrs_key, topo_order, Graph, NodeRef};

/// Merge structurally identical nodes (same op, attributes and resolved
/// inputs) and constants with identical contents. The first occurrence in
/// topological order survives.
pub fn common_subexpr_elim(graph: &Graph) -> Result<Graph> {
    let mut g = graph.clone();

    let mut by_content: HashMap<Vec<u8>, String> = HashMap::new();
    let mut dup_consts: HashSet<String> = HashSet::new();
    for c in &graph.constants {
        match by_content.get(&c.value.content_key()) {
            Some(first) => {
                g.replace_uses(&NodeRef::first(c.name.clone()), &NodeRef::first(first.clone()));
                dup_consts.insert(c.name.clone());
            }
            None => {
                by_content.insert(c.value.content_key(), c.name.clone());
            }
        }
    }
    g.constants.retain(|c| !dup_consts.contains(&c.name));

    let mut seen: HashMap<String, String> = HashMap::new();
    let mut dup_nodes: HashSet<String> = HashSet::new();
    for id in topo_order(&g)? {
        let node = g.node(&id).unwrap();
        let mut key = format!("{}|{}|", node.op, attrs_key(&node.attrs));
        for r in &node.inputs {
            key.push_str(&format!("{}#{},", r.node, r.index));
        }
        match seen.get(&key) {
            Some(first) => {
                let outputs = node.out_types.len().max(1);
                let first = first.clone();
                for i in 0..outputs {
                    g.replace_uses(&NodeRef::new(id.clone(), i), &NodeRef::new(first.clone(), i));
                }
                dup_nodes.insert(id);
            }
            None => {
                seen.insert(key, id);
            }
        }
    }
    g.nodes.retain(|n| !dup_nodes.contains(&n.id));
    Ok(g)
}
