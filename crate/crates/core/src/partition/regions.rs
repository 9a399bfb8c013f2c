use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use super::{Assignment, Fallback, Region, HOST};
use crate::error::Result;
use crate::ir::{topo_order, Functions, Graph, Module, CALL_OP};
use crate::passes::{count_macs, node_macs};

/// Node-level successor lists over node indices.
fn successors(g: &Graph) -> Vec<Vec<usize>> {
    let index = g.node_index();
    let mut succ = vec![Vec::new(); g.nodes.len()];
    for (i, n) in g.nodes.iter().enumerate() {
        for r in &n.inputs {
            if let Some(&p) = index.get(r.node.as_str()) {
                if !succ[p].contains(&i) {
                    succ[p].push(i);
                }
            }
        }
    }
    succ
}

struct Groups {
    parent: Vec<usize>,
}

impl Groups {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// True if some path leaves `a ∪ b` and re-enters it in the graph where
/// every current group is contracted.
fn merge_creates_cycle(
    succ: &[Vec<usize>],
    groups: &mut Groups,
    members: &HashMap<usize, Vec<usize>>,
    a: usize,
    b: usize,
) -> bool {
    let inside = |g: usize| g == a || g == b;
    let mut seen: HashSet<usize> = HashSet::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &m in members[&a].iter().chain(&members[&b]) {
        for &s in &succ[m] {
            let gs = groups.find(s);
            if !inside(gs) && seen.insert(gs) {
                queue.push_back(gs);
            }
        }
    }
    while let Some(g) = queue.pop_front() {
        for &m in &members[&g] {
            for &s in &succ[m] {
                let gs = groups.find(s);
                if inside(gs) {
                    return true;
                }
                if seen.insert(gs) {
                    queue.push_back(gs);
                }
            }
        }
    }
    false
}

/// Grow maximal same-target regions over data-dependence edges. A merge is
/// rejected when contracting the merged set would create a cycle. Regions
/// are ordered by their smallest node id and numbered from 1.
pub fn form_regions(module: &Module, assignment: &Assignment) -> Result<Vec<Region>> {
    let g = &module.main;
    let order = topo_order(g)?;
    let index = g.node_index();
    let succ = successors(g);
    let target = |i: usize| assignment.get(&g.nodes[i].id).map(String::as_str).unwrap_or(HOST);

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for id in &order {
        let c = index[id.as_str()];
        for r in &g.nodes[c].inputs {
            if let Some(&p) = index.get(r.node.as_str()) {
                if target(p) != HOST && target(p) == target(c) && !edges.contains(&(p, c)) {
                    edges.push((p, c));
                }
            }
        }
    }

    let mut groups = Groups {
        parent: (0..g.nodes.len()).collect(),
    };
    let mut members: HashMap<usize, Vec<usize>> = (0..g.nodes.len()).map(|i| (i, vec![i])).collect();
    loop {
        let mut changed = false;
        for &(p, c) in &edges {
            let (a, b) = (groups.find(p), groups.find(c));
            if a == b || merge_creates_cycle(&succ, &mut groups, &members, a, b) {
                continue;
            }
            let (keep, gone) = (a.min(b), a.max(b));
            groups.parent[gone] = keep;
            let moved = members.remove(&gone).unwrap();
            members.get_mut(&keep).unwrap().extend(moved);
            changed = true;
        }
        if !changed {
            break;
        }
    }

    let mut regions: Vec<Region> = members
        .values()
        .filter(|m| target(m[0]) != HOST)
        .map(|m| Region {
            id: 0,
            target: target(m[0]).to_string(),
            nodes: m.iter().map(|&i| g.nodes[i].id.clone()).collect(),
        })
        .collect();
    regions.sort_by(|a, b| a.nodes.first().cmp(&b.nodes.first()));
    for (k, r) in regions.iter_mut().enumerate() {
        r.id = k + 1;
    }
    Ok(regions)
}

/// Split regions larger than `max_nodes` into topological-order chunks of
/// at most that size. Chunks that are not connected are further divided
/// into their connected pieces. Regions are renumbered from 1.
pub fn cost_split(graph: &Graph, regions: &[Region], max_nodes: Option<usize>) -> Result<Vec<Region>> {
    let Some(max) = max_nodes else {
        return Ok(regions.to_vec());
    };
    let max = max.max(1);
    let position: HashMap<String, usize> = topo_order(graph)?
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    let mut out = Vec::new();
    for r in regions {
        if r.nodes.len() <= max {
            out.push(r.clone());
            continue;
        }
        let mut ordered: Vec<&String> = r.nodes.iter().collect();
        ordered.sort_by_key(|id| position[id.as_str()]);
        for chunk in ordered.chunks(max) {
            for piece in connected_pieces(graph, chunk) {
                out.push(Region {
                    id: 0,
                    target: r.target.clone(),
                    nodes: piece,
                });
            }
        }
    }
    for (k, r) in out.iter_mut().enumerate() {
        r.id = k + 1;
    }
    Ok(out)
}

/// Weakly connected components of `ids` (kept in the order of their first
/// member in `ids`).
fn connected_pieces(graph: &Graph, ids: &[&String]) -> Vec<BTreeSet<String>> {
    let set: HashSet<&str> = ids.iter().map(|s| s.as_str()).collect();
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for n in graph.nodes.iter().filter(|n| set.contains(n.id.as_str())) {
        for r in &n.inputs {
            if set.contains(r.node.as_str()) {
                adj.entry(n.id.as_str()).or_default().push(r.node.as_str());
                adj.entry(r.node.as_str()).or_default().push(n.id.as_str());
            }
        }
    }
    let mut seen: HashSet<&str> = HashSet::new();
    let mut pieces = Vec::new();
    for start in ids {
        if !seen.insert(start.as_str()) {
            continue;
        }
        let mut piece = BTreeSet::new();
        let mut stack = vec![start.as_str()];
        while let Some(x) = stack.pop() {
            piece.insert(x.to_string());
            for &y in adj.get(x).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(y) {
                    stack.push(y);
                }
            }
        }
        pieces.push(piece);
    }
    pieces
}

/// Primitive operator count and MACs of a set of main-graph nodes.
fn region_cost(module: &Module, region: &Region) -> Result<(usize, u64)> {
    let g = &module.main;
    let mut nodes = 0;
    let mut macs = 0;
    for id in &region.nodes {
        let n = g.node(id).expect("region node in graph");
        if n.op == CALL_OP {
            let f = n.callee().and_then(|c| module.functions.get(c));
            if let Some(f) = f {
                nodes += primitive_count(&f.body, &module.functions);
                macs += count_macs(&f.body, &module.functions)?;
            }
        } else {
            nodes += 1;
            macs += node_macs(g, n)?;
        }
    }
    Ok((nodes, macs))
}

pub(crate) fn primitive_count(g: &Graph, functions: &Functions) -> usize {
    g.nodes
        .iter()
        .map(|n| match n.callee().and_then(|c| functions.get(c)) {
            Some(f) if n.op == CALL_OP => primitive_count(&f.body, functions),
            _ => 1,
        })
        .sum()
}

/// Drop regions whose nodes perform no multiply-accumulates.
pub fn calc_mac_fallback(regions: &[Region], module: &Module) -> Result<Vec<Region>> {
    apply_fallback(module, regions, Fallback::CalcMacGtZero)
}

/// Remove regions rejected by `fallback`; their nodes return to the host.
pub fn apply_fallback(module: &Module, regions: &[Region], fallback: Fallback) -> Result<Vec<Region>> {
    let mut kept = Vec::new();
    for r in regions {
        let (nodes, macs) = region_cost(module, r)?;
        let keep = match fallback {
            Fallback::None => true,
            Fallback::CalcMacGtZero => macs > 0,
            Fallback::MinNodes(k) => nodes >= k,
        };
        if keep {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

/// Whether the graph with every region contracted to one vertex is acyclic.
pub fn contracted_is_acyclic(graph: &Graph, regions: &[Region]) -> bool {
    let mut owner: HashMap<&str, String> = HashMap::new();
    for r in regions {
        for id in &r.nodes {
            owner.insert(id.as_str(), format!("region {}", r.id));
        }
    }
    let vertex = |id: &str| owner.get(id).cloned().unwrap_or_else(|| format!("node {id}"));
    let mut edges: HashMap<String, BTreeSet<String>> = HashMap::new();
    let mut vertices: BTreeSet<String> = BTreeSet::new();
    let names: HashSet<&str> = graph.nodes.iter().map(|n| n.id.as_str()).collect();
    for n in &graph.nodes {
        let to = vertex(&n.id);
        vertices.insert(to.clone());
        for r in n.inputs.iter().filter(|r| names.contains(r.node.as_str())) {
            let from = vertex(&r.node);
            if from != to {
                edges.entry(from).or_default().insert(to.clone());
            }
        }
    }
    let mut indegree: HashMap<&String, usize> = vertices.iter().map(|v| (v, 0)).collect();
    for targets in edges.values() {
        for t in targets {
            *indegree.get_mut(t).unwrap() += 1;
        }
    }
    let mut ready: Vec<&String> = indegree.iter().filter(|(_, &d)| d == 0).map(|(v, _)| *v).collect();
    let mut done = 0;
    while let Some(v) = ready.pop() {
        done += 1;
        for t in edges.get(v).into_iter().flatten() {
            let d = indegree.get_mut(t).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(t);
            }
        }
    }
    done == vertices.len()
}
