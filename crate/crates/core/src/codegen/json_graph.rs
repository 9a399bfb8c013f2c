//! Canonical JSON payload: the model-ingestion schema without constant
//! data, plus a `boundary` section with parameter and result types.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::ir::json::{attr_from_json, attr_to_json};
use crate::ir::{
    infer_graph, Attrs, ConstantTensor, DataType, Functions, Graph, GraphNode, InputDecl, NodeRef,
    RegionFunction, TensorType,
};

fn ttype_json(t: &TensorType) -> Value {
    json!({"shape": t.shape, "dtype": t.dtype.as_str()})
}

fn attrs_json(attrs: &Attrs) -> Result<Value> {
    let mut m = Map::new();
    for (k, v) in attrs {
        m.insert(k.clone(), attr_to_json(v)?);
    }
    Ok(Value::Object(m))
}

fn ref_json(r: &NodeRef) -> Value {
    json!([r.node, r.index])
}

/// Encode `f` as canonical JSON bytes. Object keys are sorted and floats
/// use shortest round-trip formatting, so equal functions give equal bytes.
pub fn codegen_json(f: &RegionFunction) -> Result<Vec<u8>> {
    let body = &f.body;
    let params: Vec<Value> = body
        .inputs
        .iter()
        .map(|i| {
            let mut v = ttype_json(&i.ttype);
            v["name"] = Value::from(i.name.clone());
            v
        })
        .collect();
    let results = body
        .outputs
        .iter()
        .map(|r| {
            body.value_type(r)
                .map(|t| ttype_json(&t))
                .ok_or_else(|| Error::Codegen(format!("`{}`: output {r} is untyped", f.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let constants: Vec<Value> = body
        .constants
        .iter()
        .map(|c| {
            let mut v = ttype_json(&c.ttype());
            v["name"] = Value::from(c.name.clone());
            v
        })
        .collect();
    let nodes = body
        .nodes
        .iter()
        .map(|n| {
            Ok(json!({
                "id": n.id,
                "op": n.op,
                "inputs": n.inputs.iter().map(ref_json).collect::<Vec<_>>(),
                "attrs": attrs_json(&n.attrs)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = json!({
        "function": f.name,
        "attrs": attrs_json(&f.attrs)?,
        "boundary": {"params": params, "results": results},
        "constants": constants,
        "nodes": nodes,
        "outputs": body.outputs.iter().map(ref_json).collect::<Vec<_>>(),
    });
    Ok(serde_json::to_vec(&doc)?)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Decode(format!("json payload: {}", msg.into()))
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| bad(format!("missing `{key}`")))
}

fn text(v: &Value, key: &str) -> Result<String> {
    field(v, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| bad(format!("`{key}` is not a string")))
}

fn array<'a>(v: &'a Value, key: &str) -> Result<&'a Vec<Value>> {
    field(v, key)?
        .as_array()
        .ok_or_else(|| bad(format!("`{key}` is not an array")))
}

fn parse_ttype(v: &Value) -> Result<TensorType> {
    let shape = array(v, "shape")?
        .iter()
        .map(|d| d.as_u64().map(|d| d as usize).ok_or_else(|| bad("bad dimension")))
        .collect::<Result<Vec<_>>>()?;
    let dtype: DataType = text(v, "dtype")?.parse().map_err(|_| bad("bad dtype"))?;
    Ok(TensorType::new(shape, dtype))
}

fn parse_attrs(v: &Value) -> Result<Attrs> {
    let m = v.as_object().ok_or_else(|| bad("attrs is not an object"))?;
    m.iter()
        .map(|(k, v)| Ok((k.clone(), attr_from_json(k, v)?)))
        .collect()
}

fn parse_ref(v: &Value) -> Result<NodeRef> {
    match v.as_array().map(Vec::as_slice) {
        Some([Value::String(n), i]) => Ok(NodeRef::new(
            n.clone(),
            i.as_u64().ok_or_else(|| bad("bad output index"))? as usize,
        )),
        _ => Err(bad(format!("bad reference {v}"))),
    }
}

/// Decode a payload, taking constant data from `constants` (the metadata
/// section) and re-inferring node types.
pub fn decode_json(payload: &[u8], constants: &[ConstantTensor]) -> Result<RegionFunction> {
    let doc: Value = serde_json::from_slice(payload).map_err(|e| bad(e.to_string()))?;
    let name = text(&doc, "function")?;
    let attrs = parse_attrs(field(&doc, "attrs")?)?;
    let boundary = field(&doc, "boundary")?;
    let inputs = array(boundary, "params")?
        .iter()
        .map(|p| {
            Ok(InputDecl {
                name: text(p, "name")?,
                ttype: parse_ttype(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let result_types = array(boundary, "results")?
        .iter()
        .map(parse_ttype)
        .collect::<Result<Vec<_>>>()?;
    let consts = array(&doc, "constants")?
        .iter()
        .map(|c| {
            let cname = text(c, "name")?;
            let ttype = parse_ttype(c)?;
            let value = constants
                .iter()
                .find(|k| k.name == cname)
                .ok_or_else(|| bad(format!("constant `{cname}` not supplied")))?;
            if value.ttype() != ttype {
                return Err(bad(format!(
                    "constant `{cname}` has type {}, payload expects {ttype}",
                    value.ttype()
                )));
            }
            Ok(value.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let nodes = array(&doc, "nodes")?
        .iter()
        .map(|n| {
            let mut node = GraphNode::new(
                text(n, "id")?,
                text(n, "op")?,
                array(n, "inputs")?.iter().map(parse_ref).collect::<Result<_>>()?,
            );
            node.attrs = parse_attrs(field(n, "attrs")?)?;
            Ok(node)
        })
        .collect::<Result<Vec<_>>>()?;
    let outputs = array(&doc, "outputs")?
        .iter()
        .map(parse_ref)
        .collect::<Result<Vec<_>>>()?;
    let body = infer_graph(
        &Graph {
            inputs,
            constants: consts,
            nodes,
            outputs,
        },
        &Functions::new(),
    )?;
    let actual: Vec<Option<TensorType>> = body.output_types();
    if actual.len() != result_types.len() || actual.iter().zip(&result_types).any(|(a, e)| a.as_ref() != Some(e)) {
        return Err(bad(format!("`{name}`: result types disagree with the boundary section")));
    }
    Ok(RegionFunction { name, body, attrs })
}
