use std::collections::{BTreeSet, HashMap, HashSet};

use super::graph::Graph;
use crate::error::{Error, Result};

/// Deterministic topological order of node ids (Kahn's algorithm, ties
/// broken by lexicographic id).
pub fn topo_order(graph: &Graph) -> Result<Vec<String>> {
    let index = graph.node_index();
    let mut indegree: HashMap<&str, usize> = HashMap::new();
    let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
    for n in &graph.nodes {
        indegree.entry(n.id.as_str()).or_insert(0);
        let producers: HashSet<&str> = n
            .inputs
            .iter()
            .map(|r| r.node.as_str())
            .filter(|p| index.contains_key(p))
            .collect();
        for p in producers {
            *indegree.entry(n.id.as_str()).or_insert(0) += 1;
            succ.entry(p).or_default().push(n.id.as_str());
        }
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut order = Vec::with_capacity(graph.nodes.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.to_string());
        for &s in succ.get(id).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indegree.get_mut(s).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() != indegree.len() {
        let done: HashSet<&str> = order.iter().map(String::as_str).collect();
        return Err(Error::Cycle(find_cycle(graph, &done)));
    }
    Ok(order)
}

/// Walks producer edges among unfinished nodes until a node repeats.
fn find_cycle(graph: &Graph, done: &HashSet<&str>) -> Vec<String> {
    let index = graph.node_index();
    let mut remaining: Vec<&str> = graph
        .nodes
        .iter()
        .map(|n| n.id.as_str())
        .filter(|id| !done.contains(id))
        .collect();
    remaining.sort();
    // Every unfinished node has an unfinished producer, so following any of
    // them must revisit a node.
    let mut path: Vec<&str> = Vec::new();
    let mut pos: HashMap<&str, usize> = HashMap::new();
    let mut cur = remaining[0];
    loop {
        if let Some(&start) = pos.get(cur) {
            let mut cycle: Vec<String> = path[start..].iter().rev().map(|s| s.to_string()).collect();
            cycle.dedup();
            return cycle;
        }
        pos.insert(cur, path.len());
        path.push(cur);
        let node = &graph.nodes[index[cur]];
        let next = node
            .inputs
            .iter()
            .map(|r| r.node.as_str())
            .filter(|p| index.contains_key(p) && !done.contains(p))
            .min();
        match next {
            Some(p) => cur = p,
            None => return path.iter().map(|s| s.to_string()).collect(),
        }
    }
}
