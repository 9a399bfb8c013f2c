use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::ir::{infer_graph, AttrValue, Functions, GraphNode, Layout, NodeRef, RegionFunction};
use crate::ops;

/// Operators whose meaning survives a consistent NCHW/NHWC switch of
/// every 4-D value (window ops and bias_add are re-pointed explicitly).
const LAYOUT_AGNOSTIC: &[&str] = &["relu", "add", "quantize", "dequantize", "host_only_postproc"];

/// Run the function body in `desired` layout: 4-D parameters are permuted
/// on entry, 4-D results permuted back on exit, 4-D data constants permuted
/// in place, and interior conv2d/pool
/// layouts and bias axes rewritten. Bodies already in `desired` layout (or
/// without layout-sensitive operators) are returned unchanged.
pub fn insert_layout_transforms(f: &RegionFunction, desired: Layout) -> Result<RegionFunction> {
    let body = infer_graph(&f.body, &Functions::new())?;
    let windowed = |op: &str| matches!(op, "conv2d" | "max_pool2d" | "avg_pool2d");
    let mut caller: Option<Layout> = None;
    for n in body.nodes.iter().filter(|n| windowed(&n.op)) {
        let l = ops::layout_attr(&n.attrs, "layout")?;
        match caller {
            Some(c) if c != l => {
                return Err(Error::Layout(format!(
                    "`{}` mixes {c} and {l} operators",
                    f.name
                )))
            }
            _ => caller = Some(l),
        }
    }
    let Some(caller) = caller else {
        return Ok(f.clone());
    };
    if caller == desired {
        return Ok(f.clone());
    }

    let is_4d = |r: &NodeRef| body.value_type(r).is_some_and(|t| t.rank() == 4);
    let weight_uses: HashSet<&NodeRef> = body
        .nodes
        .iter()
        .filter(|n| n.op == "conv2d")
        .map(|n| &n.inputs[1])
        .collect();
    for n in &body.nodes {
        let touches_4d = n.inputs.iter().any(is_4d) || n.out_types.iter().any(|t| t.rank() == 4);
        let ok = windowed(&n.op) || n.op == "bias_add" || LAYOUT_AGNOSTIC.contains(&n.op.as_str());
        if touches_4d && !ok {
            return Err(Error::Layout(format!(
                "`{}` node `{}` ({}) depends on the {caller} layout of a 4-D tensor",
                f.name, n.id, n.op
            )));
        }
    }

    let mut out = f.clone();
    out.body = body.clone();
    for n in &mut out.body.nodes {
        if windowed(&n.op) {
            n.attrs
                .insert("layout".into(), AttrValue::Text(desired.as_str().into()));
        } else if n.op == "bias_add" && n.out_types.first().is_some_and(|t| t.rank() == 4) {
            let axis = ops::int_attr(&n.attrs, "axis", 1)?;
            let axis = ops::norm_axis(axis, 4).ok_or_else(|| Error::Layout("bad bias axis".into()))?;
            if axis != caller.channel_axis() {
                return Err(Error::Layout(format!(
                    "bias_add `{}` is not applied along channels",
                    n.id
                )));
            }
            n.attrs
                .insert("axis".into(), AttrValue::Int(desired.channel_axis() as i64));
        }
    }

    let transform = |id: String, input: NodeRef, src: Layout, dst: Layout| {
        GraphNode::new(id, "layout_transform", vec![input])
            .with_attr("src_layout", AttrValue::Text(src.as_str().into()))
            .with_attr("dst_layout", AttrValue::Text(dst.as_str().into()))
    };
    let mut entry = Vec::new();
    for (i, d) in body.inputs.iter().enumerate() {
        let r = NodeRef::first(d.name.clone());
        if d.ttype.rank() != 4 {
            continue;
        }
        if weight_uses.contains(&r) {
            let as_data = body
                .nodes
                .iter()
                .any(|n| n.inputs.iter().enumerate().any(|(k, x)| x == &r && !(n.op == "conv2d" && k == 1)));
            if as_data {
                return Err(Error::Layout(format!(
                    "parameter `{}` is used both as weight and activation",
                    d.name
                )));
            }
            continue;
        }
        let id = crate::passes::fresh_name(&format!("lt_in{i}"), |n| out.body.resolve(n).is_some());
        out.body.replace_uses(&r, &NodeRef::first(id.clone()));
        entry.push(transform(id, r, caller, desired));
    }
    out.body.nodes.splice(0..0, entry);
    for c in &mut out.body.constants {
        if c.value.shape().len() != 4 {
            continue;
        }
        let r = NodeRef::first(c.name.clone());
        let as_data = body
            .nodes
            .iter()
            .any(|n| n.inputs.iter().enumerate().any(|(k, x)| x == &r && !(n.op == "conv2d" && k == 1)));
        if !as_data {
            continue;
        }
        if weight_uses.contains(&r) {
            return Err(Error::Layout(format!(
                "constant `{}` is used both as weight and activation",
                c.name
            )));
        }
        c.value = crate::kernels::layout_transform(&c.value, caller, desired)?;
    }
    for j in 0..out.body.outputs.len() {
        let r = out.body.outputs[j].clone();
        if !body.value_type(&f.body.outputs[j]).is_some_and(|t| t.rank() == 4) {
            continue;
        }
        let id = crate::passes::fresh_name(&format!("lt_out{j}"), |n| out.body.resolve(n).is_some());
        out.body.nodes.push(transform(id.clone(), r, desired, caller));
        out.body.outputs[j] = NodeRef::first(id);
    }
    out.body = infer_graph(&out.body, &Functions::new())?;
    Ok(out)
}
