//! C source payload: C text calling `byoc_<op>` kernel-library stubs, paired
//! with an equivalent call plan that the built-in kernel library executes.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::ir::json::{attr_from_json, attr_to_json};
use crate::ir::{topo_order, Attrs, DataType, RegionFunction, TensorType};

/// Operators with a kernel-library entry point.
pub const KERNEL_LIBRARY_OPS: &[&str] = &[
    "conv2d",
    "dense",
    "add",
    "bias_add",
    "relu",
    "max_pool2d",
    "avg_pool2d",
    "softmax",
    "concat",
    "reshape",
    "transpose",
    "layout_transform",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PlanTensor {
    pub name: String,
    pub ttype: TensorType,
}

/// One kernel-library call. Buffers are named by the value they hold.
#[derive(Clone, Debug, PartialEq)]
pub struct CCall {
    pub symbol: String,
    pub op: String,
    pub attrs: Attrs,
    pub args: Vec<String>,
    pub out: String,
    pub out_type: TensorType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CallPlan {
    pub function: String,
    pub params: Vec<PlanTensor>,
    pub constants: Vec<PlanTensor>,
    pub calls: Vec<CCall>,
    pub results: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CPayload {
    pub c_text: String,
    pub plan: CallPlan,
}

fn buffer_name(node: &str, index: usize) -> String {
    if index == 0 {
        node.to_string()
    } else {
        format!("{node}:{index}")
    }
}

fn c_ident(s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if out.is_empty() || out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert(0, '_');
    }
    out
}

fn c_type(d: DataType) -> &'static str {
    match d {
        DataType::F32 => "float",
        DataType::I8 => "int8_t",
        DataType::I32 => "int32_t",
        DataType::Bool => "uint8_t",
    }
}

fn dtype_code(d: DataType) -> u8 {
    match d {
        DataType::F32 => 0,
        DataType::I8 => 1,
        DataType::I32 => 2,
        DataType::Bool => 3,
    }
}

fn c_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn attrs_value(attrs: &Attrs) -> Result<Value> {
    let mut m = Map::new();
    for (k, v) in attrs {
        m.insert(k.clone(), attr_to_json(v)?);
    }
    Ok(Value::Object(m))
}

fn build_plan(f: &RegionFunction) -> Result<CallPlan> {
    let body = &f.body;
    let index = body.node_index();
    let mut calls = Vec::with_capacity(body.nodes.len());
    for id in topo_order(body)? {
        let n = &body.nodes[index[id.as_str()]];
        if !KERNEL_LIBRARY_OPS.contains(&n.op.as_str()) {
            return Err(Error::Unsupported {
                op: n.op.clone(),
                target: "kernel library".into(),
            });
        }
        let out_type = match n.out_types.as_slice() {
            [t] => t.clone(),
            _ => return Err(Error::Codegen(format!("node `{id}` must have exactly one typed output"))),
        };
        calls.push(CCall {
            symbol: format!("byoc_{}", n.op),
            op: n.op.clone(),
            attrs: n.attrs.clone(),
            args: n.inputs.iter().map(|r| buffer_name(&r.node, r.index)).collect(),
            out: n.id.clone(),
            out_type,
        });
    }
    Ok(CallPlan {
        function: f.name.clone(),
        params: body
            .inputs
            .iter()
            .map(|i| PlanTensor {
                name: i.name.clone(),
                ttype: i.ttype.clone(),
            })
            .collect(),
        constants: body
            .constants
            .iter()
            .map(|c| PlanTensor {
                name: c.name.clone(),
                ttype: c.ttype(),
            })
            .collect(),
        calls,
        results: body.outputs.iter().map(|r| buffer_name(&r.node, r.index)).collect(),
    })
}

fn emit_c(f: &RegionFunction, plan: &CallPlan) -> Result<String> {
    let body = &f.body;
    let mut c = String::new();
    let target = f.target().unwrap_or("host");
    let _ = writeln!(c, "/* kernel-library code for {} (target {target}) */", f.name);
    c.push_str(
        "#include <stdint.h>\n#include <string.h>\n\n\
         typedef struct {\n    void *data;\n    const int64_t *shape;\n    int32_t ndim;\n    \
         int32_t dtype; /* 0 f32, 1 i8, 2 i32, 3 bool */\n} byoc_tensor;\n\n",
    );
    let mut symbols: Vec<&str> = plan.calls.iter().map(|k| k.symbol.as_str()).collect();
    symbols.sort_unstable();
    symbols.dedup();
    for s in &symbols {
        let _ = writeln!(
            c,
            "extern int32_t {s}(const byoc_tensor *args, int32_t nargs, byoc_tensor *out, const char *attrs);"
        );
    }
    if !symbols.is_empty() {
        c.push('\n');
    }

    let mut expr: HashMap<String, String> = HashMap::new();
    for (i, p) in plan.params.iter().enumerate() {
        expr.insert(p.name.clone(), format!("params[{i}]"));
    }
    for (i, k) in plan.constants.iter().enumerate() {
        expr.insert(k.name.clone(), format!("consts[{i}]"));
    }
    let mut locals = String::new();
    for (i, call) in plan.calls.iter().enumerate() {
        let t = &call.out_type;
        let var = format!("t{i}_{}", c_ident(&call.out));
        let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
        let dims = if dims.is_empty() { "1".to_string() } else { dims.join(", ") };
        let _ = writeln!(
            c,
            "static const int64_t shape{i}[{}] = {{{dims}}};",
            t.shape.len().max(1)
        );
        let _ = writeln!(c, "static {} buf{i}[{}];", c_type(t.dtype), t.numel().max(1));
        let _ = writeln!(
            locals,
            "    byoc_tensor {var} = {{buf{i}, shape{i}, {}, {}}};",
            t.shape.len(),
            dtype_code(t.dtype)
        );
        expr.insert(call.out.clone(), var);
    }
    if !plan.calls.is_empty() {
        c.push('\n');
    }

    let _ = writeln!(
        c,
        "int32_t {}(const byoc_tensor *params, const byoc_tensor *consts, byoc_tensor *results)\n{{",
        c_ident(&f.name)
    );
    c.push_str(&locals);
    if plan.params.is_empty() {
        c.push_str("    (void)params;\n");
    }
    if plan.constants.is_empty() {
        c.push_str("    (void)consts;\n");
    }
    for call in &plan.calls {
        let args: Vec<&str> = call.args.iter().map(|a| expr[a].as_str()).collect();
        let attrs = serde_json::to_string(&attrs_value(&call.attrs)?)?;
        let _ = writeln!(
            c,
            "    {{\n        const byoc_tensor args[{n}] = {{{}}};\n        \
             if ({}(args, {n}, &{}, {}) != 0) return 1;\n    }}",
            args.join(", "),
            call.symbol,
            expr[&call.out],
            c_string(&attrs),
            n = args.len(),
        );
    }
    for (j, r) in plan.results.iter().enumerate() {
        let bytes = body
            .outputs
            .get(j)
            .and_then(|o| body.value_type(o))
            .map(|t| t.byte_size())
            .unwrap_or(0);
        let src = expr
            .get(r)
            .ok_or_else(|| Error::Codegen(format!("result `{r}` has no buffer")))?;
        let _ = writeln!(c, "    memcpy(results[{j}].data, {src}.data, {bytes});");
    }
    c.push_str("    return 0;\n}\n");
    Ok(c)
}

fn ttype_value(t: &TensorType) -> Value {
    json!({"shape": t.shape, "dtype": t.dtype.as_str()})
}

fn plan_to_value(plan: &CallPlan) -> Result<Value> {
    let tensors = |ts: &[PlanTensor]| -> Vec<Value> {
        ts.iter()
            .map(|p| {
                let mut v = ttype_value(&p.ttype);
                v["name"] = Value::from(p.name.clone());
                v
            })
            .collect()
    };
    let calls = plan
        .calls
        .iter()
        .map(|k| {
            Ok(json!({
                "symbol": k.symbol,
                "op": k.op,
                "attrs": attrs_value(&k.attrs)?,
                "args": k.args,
                "out": k.out,
                "out_type": ttype_value(&k.out_type),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "function": plan.function,
        "params": tensors(&plan.params),
        "constants": tensors(&plan.constants),
        "calls": calls,
        "results": plan.results,
    }))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Decode(format!("c_source payload: {}", msg.into()))
}

fn get<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| bad(format!("missing `{key}`")))
}

fn get_str(v: &Value, key: &str) -> Result<String> {
    get(v, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| bad(format!("`{key}` is not a string")))
}

fn get_arr<'a>(v: &'a Value, key: &str) -> Result<&'a Vec<Value>> {
    get(v, key)?
        .as_array()
        .ok_or_else(|| bad(format!("`{key}` is not an array")))
}

fn get_strs(v: &Value, key: &str) -> Result<Vec<String>> {
    get_arr(v, key)?
        .iter()
        .map(|s| s.as_str().map(str::to_string).ok_or_else(|| bad("expected a string")))
        .collect()
}

fn value_ttype(v: &Value) -> Result<TensorType> {
    let shape = get_arr(v, "shape")?
        .iter()
        .map(|d| d.as_u64().map(|d| d as usize).ok_or_else(|| bad("bad dimension")))
        .collect::<Result<Vec<_>>>()?;
    let dtype: DataType = get_str(v, "dtype")?.parse().map_err(|_| bad("bad dtype"))?;
    Ok(TensorType::new(shape, dtype))
}

fn value_tensors(v: &Value, key: &str) -> Result<Vec<PlanTensor>> {
    get_arr(v, key)?
        .iter()
        .map(|p| {
            Ok(PlanTensor {
                name: get_str(p, "name")?,
                ttype: value_ttype(p)?,
            })
        })
        .collect()
}

fn plan_from_value(v: &Value) -> Result<CallPlan> {
    let calls = get_arr(v, "calls")?
        .iter()
        .map(|k| {
            let attrs = get(k, "attrs")?
                .as_object()
                .ok_or_else(|| bad("attrs is not an object"))?
                .iter()
                .map(|(name, a)| Ok((name.clone(), attr_from_json(name, a)?)))
                .collect::<Result<Attrs>>()?;
            Ok(CCall {
                symbol: get_str(k, "symbol")?,
                op: get_str(k, "op")?,
                attrs,
                args: get_strs(k, "args")?,
                out: get_str(k, "out")?,
                out_type: value_ttype(get(k, "out_type")?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CallPlan {
        function: get_str(v, "function")?,
        params: value_tensors(v, "params")?,
        constants: value_tensors(v, "constants")?,
        calls,
        results: get_strs(v, "results")?,
    })
}

/// C text and call plan for `f`, serialized as the length-prefixed C text
/// followed by the length-prefixed JSON call plan.
pub fn codegen_c_source(f: &RegionFunction) -> Result<Vec<u8>> {
    let plan = build_plan(f)?;
    let c_text = emit_c(f, &plan)?;
    let mut w = Writer::new();
    w.str(&c_text);
    w.bytes(&serde_json::to_vec(&plan_to_value(&plan)?)?);
    Ok(w.buf)
}

pub fn decode_c_payload(payload: &[u8]) -> Result<CPayload> {
    let mut r = Reader::new(payload, "c_source payload");
    let c_text = r.str()?;
    let plan_bytes = r.bytes()?;
    if !r.is_empty() {
        return Err(bad("trailing bytes"));
    }
    let v: Value = serde_json::from_slice(plan_bytes).map_err(|e| bad(e.to_string()))?;
    Ok(CPayload {
        c_text,
        plan: plan_from_value(&v)?,
    })
}
