use std::collections::HashSet;

use crate::ir::Graph;

/// Remove nodes that no graph output depends on, and constants no longer
/// referenced.
pub fn dead_code_elim(graph: &Graph) -> Graph {
    let index = graph.node_index();
    let mut live: HashSet<&str> = HashSet::new();
    let mut stack: Vec<&str> = graph.outputs.iter().map(|r| r.node.as_str()).collect();
    while let Some(name) = stack.pop() {
        if !live.insert(name) {
            continue;
        }
        if let Some(&i) = index.get(name) {
            stack.extend(graph.nodes[i].inputs.iter().map(|r| r.node.as_str()));
        }
    }
    let mut g = graph.clone();
    g.nodes.retain(|n| live.contains(n.id.as_str()));
    g.constants.retain(|c| live.contains(c.name.as_str()));
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{GraphNode, InputDecl, NodeRef, TensorType};

    fn input() -> Vec<InputDecl> {
        vec![InputDecl {
            name: "x".into(),
            ttype: TensorType::f32([4]),
        }]
    }

    #[test]
    fn unused_branch_removed() {
        let g = Graph {
            inputs: input(),
            nodes: vec![
                GraphNode::new("a", "relu", vec![NodeRef::first("x")]),
                GraphNode::new("dead", "relu", vec![NodeRef::first("x")]),
            ],
            outputs: vec![NodeRef::first("a")],
            ..Graph::default()
        };
        let d = dead_code_elim(&g);
        assert_eq!(d.nodes.len(), 1);
        assert_eq!(d.outputs, g.outputs);
    }

    #[test]
    fn fully_live_graph_unchanged() {
        let g = Graph {
            inputs: input(),
            nodes: vec![
                GraphNode::new("a", "relu", vec![NodeRef::first("x")]),
                GraphNode::new("b", "relu", vec![NodeRef::first("a")]),
            ],
            outputs: vec![NodeRef::first("b")],
            ..Graph::default()
        };
        assert_eq!(dead_code_elim(&g), g);
    }
}
