use std::collections::HashSet;
use std::fmt;

use super::graph::{Graph, Module, Source, CALL_OP};
use super::infer::{infer_graph, Functions};
use super::topo::topo_order;
use crate::error::Error;
use crate::ops;

/// A located validation finding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    Main,
    /// Pattern composite body: primitives only.
    Composite,
    /// Partitioned region body: primitives and composite calls.
    Region,
}

fn check_graph(
    loc: &str,
    g: &Graph,
    module: &Module,
    scope: Scope,
    diags: &mut Vec<Diagnostic>,
) {
    let mut push = |at: String, msg: String| {
        diags.push(Diagnostic {
            location: at,
            message: msg,
        })
    };
    if g.outputs.is_empty() {
        push(loc.to_string(), "graph has no outputs".to_string());
    }
    let mut names = HashSet::new();
    let all_names = g
        .inputs
        .iter()
        .map(|i| &i.name)
        .chain(g.constants.iter().map(|c| &c.name))
        .chain(g.nodes.iter().map(|n| &n.id));
    for name in all_names {
        if !names.insert(name.as_str()) {
            push(loc.to_string(), format!("name `{name}` defined more than once"));
        }
    }
    for i in &g.inputs {
        if i.ttype.shape.contains(&0) {
            push(format!("{loc}/{}", i.name), "zero-sized dimension".into());
        }
    }
    for c in &g.constants {
        if !matches!(c.value.dtype(), crate::ir::DataType::F32 | crate::ir::DataType::I8) {
            push(
                format!("{loc}/{}", c.name),
                format!("constants must be f32 or i8, got {}", c.value.dtype()),
            );
        }
    }
    let arity = |name: &str| -> Option<usize> {
        match g.resolve(name)? {
            Source::Input(_) | Source::Constant(_) => Some(1),
            Source::Node(i) => {
                let n = &g.nodes[i];
                if !n.out_types.is_empty() {
                    Some(n.out_types.len())
                } else if let Some(f) = n.callee().and_then(|c| module.functions.get(c)) {
                    Some(f.body.outputs.len())
                } else {
                    Some(1)
                }
            }
        }
    };
    let check_ref = |at: String, r: &crate::ir::NodeRef, push: &mut dyn FnMut(String, String)| {
        match arity(&r.node) {
            None => push(at, format!("reference to missing value `{}`", r.node)),
            Some(a) if r.index >= a => push(
                at,
                format!("output index {} out of range for `{}` ({} outputs)", r.index, r.node, a),
            ),
            _ => {}
        }
    };
    for n in &g.nodes {
        let at = format!("{loc}/{}", n.id);
        for r in &n.inputs {
            check_ref(at.clone(), r, &mut push);
        }
        if n.op == CALL_OP {
            match n.callee() {
                None => push(at, "call node without `callee`".into()),
                Some(callee) => match module.functions.get(callee) {
                    None => push(at, format!("call to unknown function `{callee}`")),
                    Some(f) => {
                        let ok = match scope {
                            Scope::Main => true,
                            Scope::Region => f.pattern_name().is_some() && f.target().is_none(),
                            Scope::Composite => false,
                        };
                        if !ok {
                            push(at, format!("nested region call to `{callee}` not allowed here"));
                        }
                    }
                },
            }
        } else if !ops::is_registered(&n.op) {
            push(at, format!("unregistered operator `{}`", n.op));
        }
    }
    for r in &g.outputs {
        check_ref(format!("{loc}/outputs"), r, &mut push);
    }
    if let Err(Error::Cycle(ids)) = topo_order(g) {
        push(loc.to_string(), format!("cycle through [{}]", ids.join(", ")));
    }
}

/// Check all graph and module invariants. Returns every finding.
pub fn validate(module: &Module) -> Result<(), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    check_graph("main", &module.main, module, Scope::Main, &mut diags);
    for (name, f) in &module.functions {
        let loc = format!("fn {name}");
        if &f.name != name {
            diags.push(Diagnostic {
                location: loc.clone(),
                message: format!("function registered as `{name}` but named `{}`", f.name),
            });
        }
        let scope = match (f.target(), f.pattern_name()) {
            (Some(_), _) => Scope::Region,
            (None, Some(_)) => Scope::Composite,
            (None, None) => {
                diags.push(Diagnostic {
                    location: loc.clone(),
                    message: "function has neither `target` nor `pattern_name`".into(),
                });
                Scope::Composite
            }
        };
        check_graph(&loc, &f.body, module, scope, &mut diags);
    }
    // Where types are present they must agree with the shape rules.
    if diags.is_empty() {
        let typed = module.main.nodes.iter().any(|n| !n.out_types.is_empty());
        if typed {
            if let Err(e) = retype_check(module) {
                diags.push(Diagnostic {
                    location: "types".into(),
                    message: e,
                });
            }
        }
    }
    if diags.is_empty() {
        Ok(())
    } else {
        Err(diags)
    }
}

fn retype_check(module: &Module) -> Result<(), String> {
    let inferred = super::infer::infer_module(module).map_err(|e| e.to_string())?;
    let functions: &Functions = &inferred.functions;
    let main = infer_graph(&module.main, functions).map_err(|e| e.to_string())?;
    for (a, b) in main.nodes.iter().zip(&module.main.nodes) {
        if !b.out_types.is_empty() && a.out_types != b.out_types {
            return Err(format!("node `{}` carries stale types", a.id));
        }
    }
    Ok(())
}

/// Convenience wrapper for a bare graph.
pub fn validate_graph(graph: &Graph) -> Result<(), Vec<Diagnostic>> {
    validate(&Module::new(graph.clone()))
}
