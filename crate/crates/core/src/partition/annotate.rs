use std::collections::BTreeMap;

use super::{TargetRegistry, HOST};
use crate::error::Result;
use crate::ir::{infer_module, Module, TensorType, CALL_OP};

/// Node id to target name (`host` when unsupported).
pub type Assignment = BTreeMap<String, String>;

/// Assign every main-graph node the highest-priority target accepting it.
/// Composite calls are looked up by their pattern name.
pub fn annotate(module: &Module, registry: &TargetRegistry) -> Result<Assignment> {
    let module = infer_module(module)?;
    let g = &module.main;
    let mut out = Assignment::new();
    for n in &g.nodes {
        let inputs: Vec<TensorType> = n.inputs.iter().filter_map(|r| g.value_type(r)).collect();
        let key = if n.op == CALL_OP {
            n.callee()
                .and_then(|c| module.functions.get(c))
                .and_then(|f| f.pattern_name())
        } else {
            Some(n.op.as_str())
        };
        let target = key
            .and_then(|k| registry.choose(k, &n.attrs, &inputs))
            .unwrap_or(HOST);
        out.insert(n.id.clone(), target.to_string());
    }
    Ok(out)
}
