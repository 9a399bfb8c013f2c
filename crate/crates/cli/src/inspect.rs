//! Deterministic text dumps of model files and compiled blobs.

use std::fmt::Write;

use byoc_core::codegen::{decode_c_payload, decode_json, CompiledModule, EntrySource, Instr, PayloadFormat};
use byoc_core::ir::{infer_types, topo_order, Attrs, Graph};
use byoc_core::sim::{FxsBitstream, Operand};
use byoc_core::Result;

fn attrs(a: &Attrs) -> String {
    if a.is_empty() {
        return String::new();
    }
    let parts: Vec<String> = a.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!(" {{{}}}", parts.join(", "))
}

fn ids(v: &[usize]) -> String {
    v.iter().map(|i| format!("e{i}")).collect::<Vec<_>>().join(", ")
}

fn graph(out: &mut String, g: &Graph, indent: &str) -> Result<()> {
    for i in &g.inputs {
        writeln!(out, "{indent}input {}: {}", i.name, i.ttype).unwrap();
    }
    for c in &g.constants {
        writeln!(out, "{indent}const {}: {}", c.name, c.value.ttype()).unwrap();
    }
    let index = g.node_index();
    for id in topo_order(g)? {
        let n = &g.nodes[index[id.as_str()]];
        let args: Vec<String> = n.inputs.iter().map(|r| r.to_string()).collect();
        write!(out, "{indent}%{} = {}({}){}", n.id, n.op, args.join(", "), attrs(&n.attrs)).unwrap();
        if let [t] = n.out_types.as_slice() {
            write!(out, " : {t}").unwrap();
        }
        out.push('\n');
    }
    let outs: Vec<String> = g.outputs.iter().map(|r| r.to_string()).collect();
    writeln!(out, "{indent}return {}", outs.join(", ")).unwrap();
    Ok(())
}

pub fn model(g: &Graph) -> Result<String> {
    let typed = infer_types(g).unwrap_or_else(|_| g.clone());
    let mut out = String::from("model\n");
    graph(&mut out, &typed, "  ")?;
    Ok(out)
}

fn operand(o: &Operand, bs: &FxsBitstream) -> String {
    match *o {
        Operand::Param(i) => format!("param{i}"),
        Operand::Value(i) => bs
            .ops
            .get(i as usize)
            .map_or_else(|| format!("value{i}"), |op| format!("%{}", op.id)),
        Operand::Weight(i) => format!("weight{i}"),
        Operand::Quant(i) => format!("quant{i}"),
    }
}

pub fn blob(cm: &CompiledModule) -> Result<String> {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "blob v{}", cm.version).unwrap();
    for (name, t) in cm.inputs() {
        writeln!(w, "input {name}: {t}").unwrap();
    }
    writeln!(w, "entries: {}", cm.metadata.entries.len()).unwrap();
    for e in &cm.metadata.entries {
        let src = match &e.source {
            EntrySource::Input(n) => format!(" input {n}"),
            EntrySource::Constant(n) => format!(" const {n}"),
            EntrySource::Intermediate => String::new(),
        };
        writeln!(w, "  e{} {}{src}", e.id, e.ttype).unwrap();
    }
    writeln!(w, "constants: {}", cm.metadata.constants.len()).unwrap();
    for c in &cm.metadata.constants {
        writeln!(w, "  {} {} owners {}", c.name, c.value.ttype(), c.owners.join(", ")).unwrap();
    }
    writeln!(w, "host plan: {}", cm.host.plan.len()).unwrap();
    for (pc, i) in cm.host.plan.iter().enumerate() {
        match i {
            Instr::Op {
                op,
                attrs: a,
                inputs,
                outputs,
            } => writeln!(w, "  {pc}: {op}({}){} -> {}", ids(inputs), attrs(a), ids(outputs)).unwrap(),
            Instr::ExternCall {
                fn_name,
                inputs,
                outputs,
            } => writeln!(w, "  {pc}: call @{fn_name}({}) -> {}", ids(inputs), ids(outputs)).unwrap(),
        }
    }
    writeln!(w, "return {}", ids(&cm.host.outputs)).unwrap();
    for a in &cm.accels {
        writeln!(
            w,
            "accel @{} target={} format={} payload={} bytes",
            a.fn_name,
            a.target,
            a.format,
            a.payload.len()
        )
        .unwrap();
        match a.format {
            PayloadFormat::JsonGraph => {
                let f = decode_json(&a.payload, &cm.metadata.constants_for(&a.fn_name))?;
                graph(w, &f.body, "    ")?;
            }
            PayloadFormat::CSource => {
                let plan = decode_c_payload(&a.payload)?.plan;
                for p in &plan.params {
                    writeln!(w, "    param {}: {}", p.name, p.ttype).unwrap();
                }
                for c in &plan.calls {
                    writeln!(w, "    {} = {}({}) : {}", c.out, c.symbol, c.args.join(", "), c.out_type).unwrap();
                }
                writeln!(w, "    return {}", plan.results.join(", ")).unwrap();
            }
            PayloadFormat::CustomBitstream => {
                let bs = FxsBitstream::decode(&a.payload)?;
                for (i, q) in bs.quant.iter().enumerate() {
                    writeln!(w, "    quant{i}: scale={:?} zero_point={}", q.scale, q.zero_point).unwrap();
                }
                for (i, t) in bs.weights.iter().enumerate() {
                    writeln!(w, "    weight{i}: {}", t.ttype()).unwrap();
                }
                for op in &bs.ops {
                    let args: Vec<String> = op.operands.iter().map(|o| operand(o, &bs)).collect();
                    writeln!(
                        w,
                        "    %{} = {}({}){} : {}",
                        op.id,
                        op.kind.op_name(),
                        args.join(", "),
                        attrs(&op.attrs),
                        op.out_type
                    )
                    .unwrap();
                }
            }
        }
    }
    Ok(out)
}
