use std::collections::{BTreeSet, HashMap, HashSet};

use serde::Serialize;

use super::regions::primitive_count;
use super::Region;
use crate::error::{Error, Result};
use crate::ir::{
    infer_module, AttrValue, Attrs, Functions, Graph, GraphNode, InputDecl, Module, NodeRef,
    RegionFunction, Source, CALL_OP,
};
use crate::passes::{count_macs, fresh_name, node_macs};

fn substitute(g: &mut Graph, map: &HashMap<NodeRef, NodeRef>) {
    let fix = |r: &mut NodeRef| {
        if let Some(to) = map.get(r) {
            *r = to.clone();
        }
    };
    g.nodes.iter_mut().flat_map(|n| n.inputs.iter_mut()).for_each(fix);
    g.outputs.iter_mut().for_each(fix);
}

fn is_composite(f: &RegionFunction) -> bool {
    f.target().is_none() && f.pattern_name().is_some()
}

/// Replace calls to pattern composites by their bodies. Inlined nodes are
/// tagged with `composite` (the function) and `pattern_name`.
pub fn inline_composites(graph: &Graph, functions: &Functions) -> Graph {
    let mut g = graph.clone();
    let mut nodes = Vec::with_capacity(g.nodes.len());
    let mut results: HashMap<NodeRef, NodeRef> = HashMap::new();
    let mut taken: HashSet<String> = g
        .inputs
        .iter()
        .map(|i| i.name.clone())
        .chain(g.constants.iter().map(|c| c.name.clone()))
        .chain(g.nodes.iter().map(|n| n.id.clone()))
        .collect();
    for node in std::mem::take(&mut g.nodes) {
        let f = match node.callee().and_then(|c| functions.get(c)) {
            Some(f) if node.op == CALL_OP && is_composite(f) => f,
            _ => {
                nodes.push(node);
                continue;
            }
        };
        let mut body = f.body.clone();
        let mut map: HashMap<NodeRef, NodeRef> = body
            .inputs
            .iter()
            .zip(&node.inputs)
            .map(|(d, arg)| (NodeRef::first(d.name.clone()), arg.clone()))
            .collect();
        for c in &body.constants {
            let name = fresh_name(&c.name, |n| taken.contains(n));
            taken.insert(name.clone());
            map.insert(NodeRef::first(c.name.clone()), NodeRef::first(name.clone()));
            g.constants.push(crate::ir::ConstantTensor::new(name, c.value.clone()));
        }
        for n in &body.nodes {
            let id = fresh_name(&n.id, |x| taken.contains(x));
            taken.insert(id.clone());
            for i in 0..n.out_types.len().max(1) {
                map.insert(NodeRef::new(n.id.clone(), i), NodeRef::new(id.clone(), i));
            }
        }
        substitute(&mut body, &map);
        for (n, renamed) in body.nodes.iter_mut().zip(f.body.nodes.iter().map(|n| &n.id)) {
            n.id = map[&NodeRef::first(renamed.clone())].node.clone();
            n.attrs
                .insert("composite".into(), AttrValue::Text(f.name.clone()));
            n.attrs.insert(
                "pattern_name".into(),
                AttrValue::Text(f.pattern_name().unwrap_or_default().to_string()),
            );
        }
        for (i, out) in body.outputs.iter().enumerate() {
            results.insert(NodeRef::new(node.id.clone(), i), out.clone());
        }
        nodes.extend(body.nodes);
    }
    g.nodes = nodes;
    // A composite result may itself be the result of an earlier composite.
    let resolved: HashMap<NodeRef, NodeRef> = results
        .keys()
        .map(|k| {
            let mut r = k.clone();
            while let Some(next) = results.get(&r) {
                r = next.clone();
            }
            (k.clone(), r)
        })
        .collect();
    substitute(&mut g, &resolved);
    g
}

fn all_names(g: &Graph) -> HashSet<String> {
    g.inputs
        .iter()
        .map(|i| i.name.clone())
        .chain(g.constants.iter().map(|c| c.name.clone()))
        .chain(g.nodes.iter().map(|n| n.id.clone()))
        .collect()
}

/// Turn each region into a function `F_Region<id>` labeled with its target
/// and replace the region's nodes with one call node of the same name.
/// Parameters are the region's non-constant external inputs ordered by
/// (producer, output index); results are values used outside the region,
/// ordered the same way. Constants are copied into the body and composite
/// calls are inlined everywhere, leaving only target functions.
pub fn encapsulate(module: &Module, regions: &[Region]) -> Result<Module> {
    let module = infer_module(module)?;
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for r in regions {
        for id in &r.nodes {
            if module.main.node(id).is_none() {
                return Err(Error::Invalid(vec![format!(
                    "region {} names unknown node `{id}`",
                    r.id
                )]));
            }
            if let Some(other) = seen.insert(id.as_str(), r.id) {
                return Err(Error::Overlap(format!(
                    "node `{id}` is in regions {other} and {}",
                    r.id
                )));
            }
        }
    }

    let mut main = module.main.clone();
    let mut functions: Functions = module
        .functions
        .iter()
        .filter(|(_, f)| !is_composite(f))
        .map(|(k, f)| (k.clone(), f.clone()))
        .collect();

    for region in regions {
        let set: BTreeSet<&str> = region.nodes.iter().map(String::as_str).collect();
        let members: Vec<GraphNode> = main
            .nodes
            .iter()
            .filter(|n| set.contains(n.id.as_str()))
            .cloned()
            .collect();

        let mut params: BTreeSet<NodeRef> = BTreeSet::new();
        let mut consts: BTreeSet<String> = BTreeSet::new();
        for r in members.iter().flat_map(|n| &n.inputs) {
            if set.contains(r.node.as_str()) {
                continue;
            }
            match main.resolve(&r.node) {
                Some(Source::Constant(_)) => {
                    consts.insert(r.node.clone());
                }
                _ => {
                    params.insert(r.clone());
                }
            }
        }
        let mut results: BTreeSet<NodeRef> = BTreeSet::new();
        for n in main.nodes.iter().filter(|n| !set.contains(n.id.as_str())) {
            results.extend(n.inputs.iter().filter(|r| set.contains(r.node.as_str())).cloned());
        }
        results.extend(main.outputs.iter().filter(|r| set.contains(r.node.as_str())).cloned());

        let mut body = Graph {
            constants: consts
                .iter()
                .map(|c| main.constant(c).unwrap().clone())
                .collect(),
            nodes: members.clone(),
            outputs: results.iter().cloned().collect(),
            ..Graph::default()
        };
        let mut taken = all_names(&body);
        let mut map = HashMap::new();
        for (i, p) in params.iter().enumerate() {
            let name = fresh_name(&format!("param_{i}"), |n| taken.contains(n));
            taken.insert(name.clone());
            body.inputs.push(InputDecl {
                name: name.clone(),
                ttype: main.value_type(p).expect("types inferred"),
            });
            map.insert(p.clone(), NodeRef::first(name));
        }
        substitute(&mut body, &map);
        let body = inline_composites(&body, &module.functions);

        let name = fresh_name(&format!("F_Region{}", region.id), |n| {
            functions.contains_key(n) || main.resolve(n).is_some() && !set.contains(n)
        });
        let mut attrs = Attrs::new();
        attrs.insert("target".into(), AttrValue::Text(region.target.clone()));
        let out_types = results
            .iter()
            .map(|r| main.value_type(r).expect("types inferred"))
            .collect();
        functions.insert(
            name.clone(),
            RegionFunction {
                name: name.clone(),
                body,
                attrs,
            },
        );

        let mut call = GraphNode::new(name.clone(), CALL_OP, params.iter().cloned().collect())
            .with_attr("callee", name.clone());
        call.out_types = out_types;
        let pos = main
            .nodes
            .iter()
            .position(|n| set.contains(n.id.as_str()))
            .unwrap_or(main.nodes.len());
        main.nodes.retain(|n| !set.contains(n.id.as_str()));
        main.nodes.insert(pos.min(main.nodes.len()), call);
        let remap: HashMap<NodeRef, NodeRef> = results
            .iter()
            .enumerate()
            .map(|(j, r)| (r.clone(), NodeRef::new(name.clone(), j)))
            .collect();
        substitute(&mut main, &remap);
    }

    let mut main = inline_composites(&main, &module.functions);
    let used: HashSet<&str> = main
        .nodes
        .iter()
        .flat_map(|n| &n.inputs)
        .chain(&main.outputs)
        .map(|r| r.node.as_str())
        .collect();
    let used: HashSet<String> = used.into_iter().map(String::from).collect();
    main.constants.retain(|c| used.contains(&c.name));
    infer_module(&Module { main, functions })
}

/// Share of primitive operators and MACs placed in target functions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffloadRatio {
    pub node_percent: f64,
    pub mac_percent: f64,
    pub offloaded_nodes: usize,
    pub total_nodes: usize,
    pub offloaded_macs: u64,
    pub total_macs: u64,
}

pub fn offload_ratio(module: &Module) -> Result<OffloadRatio> {
    let module = infer_module(module)?;
    let (mut on_nodes, mut on_macs, mut all_nodes, mut all_macs) = (0usize, 0u64, 0usize, 0u64);
    for n in &module.main.nodes {
        let (nodes, macs) = match n.callee().and_then(|c| module.functions.get(c)) {
            Some(f) if n.op == CALL_OP => (
                primitive_count(&f.body, &module.functions),
                count_macs(&f.body, &module.functions)?,
            ),
            _ => (1, node_macs(&module.main, n)?),
        };
        all_nodes += nodes;
        all_macs += macs;
        let offloaded = n.op == CALL_OP
            && n.callee()
                .and_then(|c| module.functions.get(c))
                .is_some_and(|f| f.target().is_some());
        if offloaded {
            on_nodes += nodes;
            on_macs += macs;
        }
    }
    let pct = |a: f64, b: f64| if b == 0.0 { 100.0 } else { 100.0 * a / b };
    Ok(OffloadRatio {
        node_percent: if all_nodes == 0 { 0.0 } else { pct(on_nodes as f64, all_nodes as f64) },
        mac_percent: pct(on_macs as f64, all_macs as f64),
        offloaded_nodes: on_nodes,
        total_nodes: all_nodes,
        offloaded_macs: on_macs,
        total_macs: all_macs,
    })
}
