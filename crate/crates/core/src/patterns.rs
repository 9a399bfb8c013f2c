//! Declarative operator patterns and composite grouping.
//!
//! Patterns are rooted at the last operator of a sequence and walk towards
//! producers. A matched sequence is replaced by a call to a composite
//! function labeled with the pattern name.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::ir::{
    infer_module, topo_order, AttrValue, Graph, GraphNode, InputDecl, Module, NodeRef,
    RegionFunction, Source, CALL_OP,
};
use crate::ops;
use crate::passes::fresh_name;

#[derive(Clone, Debug, PartialEq)]
pub enum Pattern {
    /// Matches any value and binds it as a composite input.
    Wildcard,
    Op { op: String, args: Vec<Pattern> },
    /// An `Op` pattern whose operator may be absent, in which case its
    /// first argument is matched in its place.
    Optional(Box<Pattern>),
}

impl Pattern {
    pub fn op(op: &str, args: Vec<Pattern>) -> Self {
        Pattern::Op {
            op: op.to_string(),
            args,
        }
    }

    pub fn optional(op: &str, args: Vec<Pattern>) -> Self {
        Pattern::Optional(Box::new(Pattern::op(op, args)))
    }

    fn check(&self) -> Result<()> {
        match self {
            Pattern::Wildcard => Ok(()),
            Pattern::Op { op, args } => {
                let allowed = ops::input_arity(op)
                    .ok_or_else(|| Error::Config(format!("pattern uses unknown operator `{op}`")))?;
                if !allowed.contains(&args.len()) {
                    return Err(Error::Config(format!(
                        "pattern gives `{op}` {} arguments, expected {allowed:?}",
                        args.len()
                    )));
                }
                args.iter().try_for_each(Pattern::check)
            }
            Pattern::Optional(inner) => match inner.as_ref() {
                Pattern::Op { args, .. } if !args.is_empty() => inner.check(),
                _ => Err(Error::Config(
                    "optional must wrap an operator pattern with at least one argument".into(),
                )),
            },
        }
    }

    /// Make every operator named in `names` optional.
    fn with_optional_ops(self, names: &[String]) -> Pattern {
        match self {
            Pattern::Op { op, args } => {
                let args = args.into_iter().map(|a| a.with_optional_ops(names)).collect();
                let p = Pattern::Op { op, args };
                match &p {
                    Pattern::Op { op, args } if names.contains(op) && !args.is_empty() => {
                        Pattern::Optional(Box::new(p))
                    }
                    _ => p,
                }
            }
            Pattern::Optional(inner) => {
                let inner = match *inner {
                    Pattern::Op { op, args } => Pattern::Op {
                        op,
                        args: args.into_iter().map(|a| a.with_optional_ops(names)).collect(),
                    },
                    other => other,
                };
                Pattern::Optional(Box::new(inner))
            }
            w => w,
        }
    }

    pub fn from_json(v: &Value) -> Result<Pattern> {
        let bad = || Error::Config(format!("malformed pattern: {v}"));
        let obj = v.as_object().ok_or_else(bad)?;
        if obj.get("wildcard").and_then(Value::as_bool) == Some(true) && obj.len() == 1 {
            return Ok(Pattern::Wildcard);
        }
        if let Some(inner) = obj.get("optional") {
            if obj.len() != 1 {
                return Err(bad());
            }
            return Ok(Pattern::Optional(Box::new(Pattern::from_json(inner)?)));
        }
        let op = obj.get("op").and_then(Value::as_str).ok_or_else(bad)?;
        if obj.keys().any(|k| k != "op" && k != "args") {
            return Err(bad());
        }
        let args = match obj.get("args") {
            None => Vec::new(),
            Some(a) => a
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(Pattern::from_json)
                .collect::<Result<_>>()?,
        };
        Ok(Pattern::op(op, args))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternEntry {
    pub name: String,
    pub root: Pattern,
}

/// Ordered pattern list; earlier entries win.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatternTable {
    pub entries: Vec<PatternEntry>,
}

impl PatternTable {
    pub fn new(entries: Vec<PatternEntry>) -> Result<Self> {
        let mut names = HashSet::new();
        for e in &entries {
            if e.name.is_empty() {
                return Err(Error::Config("pattern name must be nonempty".into()));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::Config(format!("duplicate pattern name `{}`", e.name)));
            }
            e.root.check()?;
        }
        Ok(PatternTable { entries })
    }

    /// `{"patterns":[{"name":str,"root":{...},"optional":[op names]}]}`
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let items = v
            .get("patterns")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Config("pattern config needs a `patterns` array".into()))?;
        let mut entries = Vec::new();
        for item in items {
            let name = item
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Config("pattern entry without `name`".into()))?;
            let root = Pattern::from_json(
                item.get("root")
                    .ok_or_else(|| Error::Config(format!("pattern `{name}` has no `root`")))?,
            )?;
            let optional: Vec<String> = match item.get("optional") {
                None => Vec::new(),
                Some(v) => v
                    .as_array()
                    .and_then(|a| a.iter().map(|s| s.as_str().map(String::from)).collect())
                    .ok_or_else(|| {
                        Error::Config(format!("`optional` of `{name}` must list operator names"))
                    })?,
            };
            entries.push(PatternEntry {
                name: name.to_string(),
                root: root.with_optional_ops(&optional),
            });
        }
        PatternTable::new(entries)
    }
}

/// `relu(optional(bias_add(conv2d(*, *), *)))`
pub fn conv2d_pattern() -> PatternEntry {
    PatternEntry {
        name: "conv2d_pattern".into(),
        root: Pattern::op(
            "relu",
            vec![Pattern::optional(
                "bias_add",
                vec![
                    Pattern::op("conv2d", vec![Pattern::Wildcard, Pattern::Wildcard]),
                    Pattern::Wildcard,
                ],
            )],
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchResult {
    /// Matched node ids, root first, then in pattern traversal order.
    pub matched: Vec<String>,
    /// Values bound by wildcards, deduplicated, in binding order.
    pub boundary_inputs: Vec<NodeRef>,
    pub root: String,
}

#[derive(Clone, Default)]
struct Partial {
    matched: Vec<String>,
    bound: Vec<NodeRef>,
}

fn candidates(
    g: &Graph,
    excluded: &HashSet<String>,
    pat: &Pattern,
    r: &NodeRef,
    mut st: Partial,
) -> Vec<Partial> {
    match pat {
        Pattern::Wildcard => {
            if !st.bound.contains(r) {
                st.bound.push(r.clone());
            }
            vec![st]
        }
        Pattern::Op { op, args } => {
            let Some(Source::Node(i)) = g.resolve(&r.node) else {
                return Vec::new();
            };
            let node = &g.nodes[i];
            if r.index != 0
                || &node.op != op
                || node.inputs.len() != args.len()
                || excluded.contains(&node.id)
                || st.matched.contains(&node.id)
            {
                return Vec::new();
            }
            st.matched.push(node.id.clone());
            let mut states = vec![st];
            for (a, input) in args.iter().zip(&node.inputs) {
                states = states
                    .into_iter()
                    .flat_map(|s| candidates(g, excluded, a, input, s))
                    .collect();
            }
            states
        }
        Pattern::Optional(inner) => {
            let mut with = candidates(g, excluded, inner, r, st.clone());
            if let Pattern::Op { args, .. } = inner.as_ref() {
                with.extend(candidates(g, excluded, &args[0], r, st));
            }
            with
        }
    }
}

fn acceptable(g: &Graph, consumers: &HashMap<String, Vec<String>>, p: &Partial) -> bool {
    let set: HashSet<&str> = p.matched.iter().map(String::as_str).collect();
    if p.bound.iter().any(|r| set.contains(r.node.as_str())) {
        return false;
    }
    p.matched[1..].iter().all(|id| {
        let internal = consumers
            .get(id)
            .is_none_or(|cs| cs.iter().all(|c| set.contains(c.as_str())));
        internal && !g.outputs.iter().any(|o| &o.node == id)
    })
}

fn match_excluding(
    g: &Graph,
    consumers: &HashMap<String, Vec<String>>,
    excluded: &HashSet<String>,
    node_id: &str,
    pattern: &Pattern,
) -> Option<MatchResult> {
    let root = NodeRef::first(node_id);
    candidates(g, excluded, pattern, &root, Partial::default())
        .into_iter()
        .find(|p| !p.matched.is_empty() && acceptable(g, consumers, p))
        .map(|p| MatchResult {
            root: p.matched[0].clone(),
            matched: p.matched,
            boundary_inputs: p.bound,
        })
}

/// Match `pattern` with its root at `node_id`. Alternatives that keep an
/// optional operator are preferred; a candidate is rejected when a matched
/// non-root node has a consumer outside the match.
pub fn match_at(graph: &Graph, node_id: &str, pattern: &Pattern) -> Option<MatchResult> {
    match_excluding(graph, &graph.consumers(), &HashSet::new(), node_id, pattern)
}

/// Replace every pattern match in the main graph by a call to a composite
/// function named `<pattern>_<k>`; the call node is `pat_<k>`.
pub fn group_patterns(module: &Module, table: &PatternTable) -> Result<Module> {
    if table.entries.is_empty() {
        return Ok(module.clone());
    }
    let typed = infer_module(module)?;
    let g = &typed.main;
    let consumers = g.consumers();
    let mut consumed: HashSet<String> = HashSet::new();
    let mut matches: Vec<(String, MatchResult)> = Vec::new();
    for id in topo_order(g)?.into_iter().rev() {
        if consumed.contains(&id) {
            continue;
        }
        for entry in &table.entries {
            if let Some(m) = match_excluding(g, &consumers, &consumed, &id, &entry.root) {
                consumed.extend(m.matched.iter().cloned());
                matches.push((entry.name.clone(), m));
                break;
            }
        }
    }

    let mut out = typed.clone();
    let taken_node = |g: &Graph, n: &str| g.resolve(n).is_some();
    for (k, (pattern, m)) in matches.into_iter().enumerate() {
        let fn_name = fresh_name(&format!("{pattern}_{k}"), |n| out.functions.contains_key(n));
        let call_id = fresh_name(&format!("pat_{k}"), |n| taken_node(&out.main, n));
        let set: BTreeSet<&str> = m.matched.iter().map(String::as_str).collect();

        let mut body = Graph::default();
        let mut renames: Vec<(NodeRef, NodeRef)> = Vec::new();
        for r in &m.boundary_inputs {
            let name = if r.index == 0 {
                r.node.clone()
            } else {
                format!("{}:{}", r.node, r.index)
            };
            body.inputs.push(InputDecl {
                name: name.clone(),
                ttype: g.value_type(r).expect("inferred"),
            });
            renames.push((r.clone(), NodeRef::first(name)));
        }
        body.nodes = g
            .nodes
            .iter()
            .filter(|n| set.contains(n.id.as_str()))
            .cloned()
            .collect();
        for (from, to) in &renames {
            if from != to {
                body.replace_uses(from, to);
            }
        }
        body.outputs = vec![NodeRef::first(m.root.clone())];

        let root_types = g.node(&m.root).unwrap().out_types.clone();
        let mut call = GraphNode::new(call_id.clone(), CALL_OP, m.boundary_inputs.clone())
            .with_attr("callee", fn_name.clone());
        call.out_types = root_types;
        let pos = out
            .main
            .nodes
            .iter()
            .position(|n| n.id == m.root)
            .expect("root present");
        out.main.nodes[pos] = call;
        out.main.nodes.retain(|n| !set.contains(n.id.as_str()));
        out.main
            .replace_uses(&NodeRef::first(m.root.clone()), &NodeRef::first(call_id));

        let mut attrs = crate::ir::Attrs::new();
        attrs.insert("pattern_name".into(), AttrValue::Text(pattern));
        out.functions.insert(
            fn_name.clone(),
            RegionFunction {
                name: fn_name,
                body,
                attrs,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ConstantTensor, Tensor, TensorType};

    fn conv_chain(with_bias: bool) -> Graph {
        let mut nodes = vec![GraphNode::new(
            "c",
            "conv2d",
            vec![NodeRef::first("x"), NodeRef::first("w")],
        )];
        let mut last = "c";
        if with_bias {
            nodes.push(GraphNode::new(
                "b",
                "bias_add",
                vec![NodeRef::first("c"), NodeRef::first("bias")],
            ));
            last = "b";
        }
        nodes.push(GraphNode::new("r", "relu", vec![NodeRef::first(last)]));
        Graph {
            inputs: vec![InputDecl {
                name: "x".into(),
                ttype: TensorType::f32([1, 2, 4, 4]),
            }],
            constants: vec![
                ConstantTensor::new("w", Tensor::from_f32(vec![2, 2, 1, 1], vec![1.0; 4]).unwrap()),
                ConstantTensor::new("bias", Tensor::from_f32(vec![2], vec![0.5; 2]).unwrap()),
            ],
            nodes,
            outputs: vec![NodeRef::first("r")],
        }
    }

    #[test]
    fn full_sequence_matches() {
        let m = match_at(&conv_chain(true), "r", &conv2d_pattern().root).unwrap();
        assert_eq!(m.matched, ["r", "b", "c"]);
        assert_eq!(m.root, "r");
        assert_eq!(
            m.boundary_inputs,
            [NodeRef::first("x"), NodeRef::first("w"), NodeRef::first("bias")]
        );
    }

    #[test]
    fn bias_is_optional() {
        let m = match_at(&conv_chain(false), "r", &conv2d_pattern().root).unwrap();
        assert_eq!(m.matched, ["r", "c"]);
    }

    #[test]
    fn escaping_bias_rejected() {
        let mut g = conv_chain(true);
        g.nodes.push(GraphNode::new("other", "relu", vec![NodeRef::first("b")]));
        g.outputs.push(NodeRef::first("other"));
        assert_eq!(match_at(&g, "r", &conv2d_pattern().root), None);
    }

    #[test]
    fn json_table_matches_builtin() {
        let text = r#"{"patterns":[{"name":"conv2d_pattern","root":{"op":"relu","args":[
            {"optional":{"op":"bias_add","args":[
                {"op":"conv2d","args":[{"wildcard":true},{"wildcard":true}]},
                {"wildcard":true}]}}]}}]}"#;
        let t = PatternTable::from_json(text).unwrap();
        assert_eq!(t.entries, vec![conv2d_pattern()]);
        let flat = r#"{"patterns":[{"name":"conv2d_pattern","optional":["bias_add"],
            "root":{"op":"relu","args":[{"op":"bias_add","args":[
                {"op":"conv2d","args":[{"wildcard":true},{"wildcard":true}]},
                {"wildcard":true}]}]}}]}"#;
        assert_eq!(PatternTable::from_json(flat).unwrap(), t);
    }

    #[test]
    fn arity_checked() {
        let bad = PatternEntry {
            name: "p".into(),
            root: Pattern::op("relu", vec![Pattern::Wildcard, Pattern::Wildcard]),
        };
        assert!(PatternTable::new(vec![bad]).is_err());
    }

    #[test]
    fn grouping_creates_composite() {
        let table = PatternTable::new(vec![conv2d_pattern()]).unwrap();
        let m = group_patterns(&Module::new(conv_chain(true)), &table).unwrap();
        assert_eq!(m.main.nodes.len(), 1);
        assert_eq!(m.main.nodes[0].id, "pat_0");
        let f = &m.functions["conv2d_pattern_0"];
        assert_eq!(f.pattern_name(), Some("conv2d_pattern"));
        assert_eq!(f.body.nodes.len(), 3);
        assert_eq!(crate::ir::validate(&m), Ok(()));
    }

    #[test]
    fn empty_table_is_identity() {
        let m = Module::new(conv_chain(true));
        assert_eq!(group_patterns(&m, &PatternTable::default()).unwrap(), m);
    }
}
