use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::types::{AttrValue, Attrs, Tensor, TensorType};

/// Reference to one output of a producer. The producer is a node id, a
/// graph input name or a constant name; the three share one namespace.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub node: String,
    pub index: usize,
}

impl NodeRef {
    pub fn new(node: impl Into<String>, index: usize) -> Self {
        NodeRef {
            node: node.into(),
            index,
        }
    }

    pub fn first(node: impl Into<String>) -> Self {
        Self::new(node, 0)
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.index == 0 {
            write!(f, "%{}", self.node)
        } else {
            write!(f, "%{}.{}", self.node, self.index)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphNode {
    pub id: String,
    pub op: String,
    pub inputs: Vec<NodeRef>,
    pub attrs: Attrs,
    /// Filled by type inference; empty before.
    pub out_types: Vec<TensorType>,
}

impl GraphNode {
    pub fn new(id: impl Into<String>, op: impl Into<String>, inputs: Vec<NodeRef>) -> Self {
        GraphNode {
            id: id.into(),
            op: op.into(),
            inputs,
            attrs: Attrs::new(),
            out_types: Vec::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: impl Into<AttrValue>) -> Self {
        self.attrs.insert(key.to_string(), value.into());
        self
    }

    /// Name of the function this node calls, if it is a call node.
    pub fn callee(&self) -> Option<&str> {
        if self.op == CALL_OP {
            self.attrs.get("callee").and_then(|v| v.as_text())
        } else {
            None
        }
    }

    pub fn attr(&self, key: &str) -> Option<&AttrValue> {
        self.attrs.get(key)
    }
}

/// Operator name of nodes that call a [`RegionFunction`].
pub const CALL_OP: &str = "call";

#[derive(Clone, Debug, PartialEq)]
pub struct InputDecl {
    pub name: String,
    pub ttype: TensorType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantTensor {
    pub name: String,
    pub value: Tensor,
}

impl ConstantTensor {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        ConstantTensor {
            name: name.into(),
            value,
        }
    }

    pub fn ttype(&self) -> TensorType {
        self.value.ttype()
    }
}

/// Where a [`NodeRef`] points to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Input(usize),
    Constant(usize),
    Node(usize),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Graph {
    pub inputs: Vec<InputDecl>,
    pub constants: Vec<ConstantTensor>,
    pub nodes: Vec<GraphNode>,
    pub outputs: Vec<NodeRef>,
}

impl Graph {
    pub fn node_index(&self) -> HashMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect()
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut GraphNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn constant(&self, name: &str) -> Option<&ConstantTensor> {
        self.constants.iter().find(|c| c.name == name)
    }

    pub fn input(&self, name: &str) -> Option<&InputDecl> {
        self.inputs.iter().find(|i| i.name == name)
    }

    /// Resolve a name to its producer. Node ids shadow nothing: a name is
    /// expected to be unique across inputs, constants and nodes.
    pub fn resolve(&self, name: &str) -> Option<Source> {
        if let Some(i) = self.nodes.iter().position(|n| n.id == name) {
            return Some(Source::Node(i));
        }
        if let Some(i) = self.inputs.iter().position(|n| n.name == name) {
            return Some(Source::Input(i));
        }
        self.constants
            .iter()
            .position(|c| c.name == name)
            .map(Source::Constant)
    }

    /// Type of a referenced value, once types are inferred.
    pub fn value_type(&self, r: &NodeRef) -> Option<TensorType> {
        match self.resolve(&r.node)? {
            Source::Input(i) if r.index == 0 => Some(self.inputs[i].ttype.clone()),
            Source::Constant(i) if r.index == 0 => Some(self.constants[i].ttype()),
            Source::Node(i) => self.nodes[i].out_types.get(r.index).cloned(),
            _ => None,
        }
    }

    /// Map from producer node id to the ids of nodes consuming any of its outputs.
    pub fn consumers(&self) -> HashMap<String, Vec<String>> {
        let mut map: HashMap<String, Vec<String>> = HashMap::new();
        for n in &self.nodes {
            for r in &n.inputs {
                let entry = map.entry(r.node.clone()).or_default();
                if !entry.contains(&n.id) {
                    entry.push(n.id.clone());
                }
            }
        }
        map
    }

    /// Rewrites every use (node inputs and graph outputs) of `from` to `to`.
    pub fn replace_uses(&mut self, from: &NodeRef, to: &NodeRef) {
        for n in &mut self.nodes {
            for r in &mut n.inputs {
                if r == from {
                    *r = to.clone();
                }
            }
        }
        for r in &mut self.outputs {
            if r == from {
                *r = to.clone();
            }
        }
    }

    /// Count of operator nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn output_types(&self) -> Vec<Option<TensorType>> {
        self.outputs.iter().map(|r| self.value_type(r)).collect()
    }
}

/// A function in a [`Module`]: either a pattern composite (attr
/// `pattern_name`) or a partitioned region (attr `target`).
#[derive(Clone, Debug, PartialEq)]
pub struct RegionFunction {
    pub name: String,
    pub body: Graph,
    pub attrs: Attrs,
}

impl RegionFunction {
    pub fn target(&self) -> Option<&str> {
        self.attrs.get("target").and_then(|v| v.as_text())
    }

    pub fn pattern_name(&self) -> Option<&str> {
        self.attrs.get("pattern_name").and_then(|v| v.as_text())
    }

    pub fn param_types(&self) -> Vec<TensorType> {
        self.body.inputs.iter().map(|i| i.ttype.clone()).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Module {
    pub main: Graph,
    pub functions: BTreeMap<String, RegionFunction>,
}

impl Module {
    pub fn new(main: Graph) -> Self {
        Module {
            main,
            functions: BTreeMap::new(),
        }
    }

    /// Functions labeled with a target, in name order.
    pub fn target_functions(&self) -> impl Iterator<Item = &RegionFunction> {
        self.functions.values().filter(|f| f.target().is_some())
    }
}
