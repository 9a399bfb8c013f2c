use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{run_function, run_graph_observed, Inputs};
use crate::ir::{
    infer_graph, AttrValue, ConstantTensor, Functions, GraphNode, Module, NodeRef, RegionFunction,
    Source, Tensor, CALL_OP,
};
use crate::kernels::quantize_value;
use crate::passes::fresh_name;

/// Affine int8 quantization parameters: `q = clamp(round(x / S) + Z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f32,
    pub zero_point: i32,
    pub qmin: i32,
    pub qmax: i32,
}

impl QuantParams {
    /// `S = (max - min) / (qmax - qmin)`, `Z = round(qmin - min / S)`
    /// clamped to the integer range; an empty range gives `S = 1, Z = 0`.
    /// The range is widened to contain zero so that zero is exact.
    pub fn from_range(min: f32, max: f32, qmin: i32, qmax: i32) -> Result<Self> {
        if qmin >= qmax {
            return Err(Error::Quant(format!("empty integer range [{qmin}, {qmax}]")));
        }
        if !min.is_finite() || !max.is_finite() || min > max {
            return Err(Error::Quant(format!("invalid calibration range [{min}, {max}]")));
        }
        let (min, max) = (min.min(0.0), max.max(0.0));
        if max == min {
            return Ok(QuantParams {
                scale: 1.0,
                zero_point: 0,
                qmin,
                qmax,
            });
        }
        let s = (max as f64 - min as f64) / (qmax - qmin) as f64;
        let z = (qmin as f64 - min as f64 / s).round_ties_even();
        Ok(QuantParams {
            scale: s as f32,
            zero_point: z.clamp(qmin as f64, qmax as f64) as i32,
            qmin,
            qmax,
        })
    }

    pub fn int8(min: f32, max: f32) -> Result<Self> {
        Self::from_range(min, max, -128, 127)
    }

    pub fn quantize(&self, x: f32) -> i32 {
        quantize_value(x, self.scale, self.zero_point, self.qmin, self.qmax)
    }

    pub fn dequantize(&self, q: i32) -> f32 {
        self.scale * (q - self.zero_point) as f32
    }
}

/// Samples keyed by the function's parameter names.
pub type CalibrationSet = Vec<Inputs>;

/// Parameters for every boundary tensor of one function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionQuant {
    pub inputs: Vec<QuantParams>,
    pub outputs: Vec<QuantParams>,
}

fn min_max(ts: impl Iterator<Item = Tensor>, what: &str) -> Result<(f32, f32)> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for t in ts {
        let v = t
            .as_f32()
            .ok_or_else(|| Error::Quant(format!("{what} is not f32")))?;
        for &x in v {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    Ok((lo, hi))
}

/// Observe boundary ranges of `f` over `calib` with the host interpreter.
pub fn calibrate(f: &RegionFunction, functions: &Functions, calib: &CalibrationSet) -> Result<FunctionQuant> {
    if calib.is_empty() {
        return Err(Error::Quant(format!("empty calibration set for `{}`", f.name)));
    }
    let mut outs: Vec<Vec<Tensor>> = Vec::with_capacity(calib.len());
    let mut args: Vec<Vec<Tensor>> = Vec::with_capacity(calib.len());
    for sample in calib {
        let a: Vec<Tensor> = f
            .body
            .inputs
            .iter()
            .map(|d| {
                sample.get(&d.name).cloned().ok_or_else(|| {
                    Error::Quant(format!("calibration sample lacks `{}` of `{}`", d.name, f.name))
                })
            })
            .collect::<Result<_>>()?;
        outs.push(run_function(f, functions, &a)?);
        args.push(a);
    }
    let inputs = (0..f.body.inputs.len())
        .map(|i| {
            let (lo, hi) = min_max(args.iter().map(|a| a[i].clone()), &f.body.inputs[i].name)?;
            QuantParams::int8(lo, hi)
        })
        .collect::<Result<_>>()?;
    let outputs = (0..f.body.outputs.len())
        .map(|j| {
            let (lo, hi) = min_max(outs.iter().map(|o| o[j].clone()), "function result")?;
            QuantParams::int8(lo, hi)
        })
        .collect::<Result<_>>()?;
    Ok(FunctionQuant { inputs, outputs })
}

/// Run the encapsulated module on model-level samples and record the
/// arguments of every region call, keyed by function then parameter name.
pub fn collect_region_samples(module: &Module, samples: &[Inputs]) -> Result<BTreeMap<String, CalibrationSet>> {
    let mut out: BTreeMap<String, CalibrationSet> = BTreeMap::new();
    for s in samples {
        run_graph_observed(&module.main, &module.functions, s, &mut |node, args, _| {
            if node.op != CALL_OP {
                return;
            }
            let Some(f) = node.callee().and_then(|c| module.functions.get(c)) else {
                return;
            };
            let named: Inputs = f
                .body
                .inputs
                .iter()
                .zip(args)
                .map(|(d, t)| (d.name.clone(), (*t).clone()))
                .collect();
            out.entry(f.name.clone()).or_default().push(named);
        })?;
    }
    Ok(out)
}

/// Replace f32 constant weights of conv2d/dense nodes with int8 constants
/// quantized by their own min/max; the parameters are kept as
/// `weight_scale` / `weight_zero_point` attributes.
pub fn quantize_weights(f: &RegionFunction) -> Result<RegionFunction> {
    let mut out = f.clone();
    let body = &mut out.body;
    for i in 0..body.nodes.len() {
        if !matches!(body.nodes[i].op.as_str(), "conv2d" | "dense") {
            continue;
        }
        let wref = body.nodes[i].inputs[1].clone();
        let w = match body.resolve(&wref.node) {
            Some(Source::Constant(c)) => body.constants[c].value.clone(),
            _ => {
                return Err(Error::Quant(format!(
                    "`{}` in `{}` needs a constant weight to quantize",
                    body.nodes[i].id, f.name
                )))
            }
        };
        let Some(data) = w.as_f32() else { continue };
        let (lo, hi) = data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let p = QuantParams::int8(lo, hi)?;
        let q: Vec<i8> = data.iter().map(|&x| p.quantize(x) as i8).collect();
        let name = fresh_name(&format!("q_{}", wref.node), |n| body.resolve(n).is_some());
        body.constants
            .push(ConstantTensor::new(name.clone(), Tensor::from_i8(w.shape().to_vec(), q)?));
        let node = &mut body.nodes[i];
        node.inputs[1] = NodeRef::first(name);
        node.attrs
            .insert("weight_scale".into(), AttrValue::Real(p.scale as f64));
        node.attrs
            .insert("weight_zero_point".into(), AttrValue::Int(p.zero_point as i64));
    }
    let used: std::collections::HashSet<String> = body
        .nodes
        .iter()
        .flat_map(|n| n.inputs.iter().map(|r| r.node.clone()))
        .chain(body.outputs.iter().map(|r| r.node.clone()))
        .collect();
    body.constants.retain(|c| used.contains(&c.name));
    Ok(out)
}

fn scalar_consts(
    f: &mut RegionFunction,
    tag: &str,
    p: &QuantParams,
) -> Result<(NodeRef, NodeRef)> {
    let body = &mut f.body;
    let s = fresh_name(&format!("q_scale_{tag}"), |n| body.resolve(n).is_some());
    body.constants
        .push(ConstantTensor::new(s.clone(), Tensor::from_f32(vec![1], vec![p.scale])?));
    let z = fresh_name(&format!("q_zp_{tag}"), |n| body.resolve(n).is_some());
    let zp = i8::try_from(p.zero_point)
        .map_err(|_| Error::Quant(format!("zero point {} outside i8", p.zero_point)))?;
    body.constants
        .push(ConstantTensor::new(z.clone(), Tensor::from_i8(vec![1], vec![zp])?));
    Ok((NodeRef::first(s), NodeRef::first(z)))
}

/// Insert `quantize` after every parameter and `dequantize` before every
/// result, and pre-quantize weights. With `params = None` the boundary
/// nodes carry no constants and the engine calibrates at run time. The
/// function's f32 signature is unchanged.
pub fn insert_quant_nodes(f: &RegionFunction, params: Option<&FunctionQuant>) -> Result<RegionFunction> {
    if let Some(p) = params {
        if p.inputs.len() != f.body.inputs.len() || p.outputs.len() != f.body.outputs.len() {
            return Err(Error::Quant(format!(
                "`{}` has {} parameters and {} results, params cover {} and {}",
                f.name,
                f.body.inputs.len(),
                f.body.outputs.len(),
                p.inputs.len(),
                p.outputs.len()
            )));
        }
    }
    if let Some(d) = f.body.inputs.iter().find(|d| d.ttype.dtype != crate::ir::DataType::F32) {
        return Err(Error::Quant(format!("parameter `{}` of `{}` is not f32", d.name, f.name)));
    }
    let mut out = quantize_weights(f)?;
    let range = |p: Option<&QuantParams>| {
        let (lo, hi) = p.map_or((-128, 127), |p| (p.qmin, p.qmax));
        [("qmin", AttrValue::Int(lo as i64)), ("qmax", AttrValue::Int(hi as i64))]
    };

    let param_names: Vec<String> = out.body.inputs.iter().map(|d| d.name.clone()).collect();
    let mut new_nodes = Vec::new();
    for (i, name) in param_names.iter().enumerate() {
        let qp = params.map(|p| &p.inputs[i]);
        let mut inputs = vec![NodeRef::first(name.clone())];
        if let Some(qp) = qp {
            let (s, z) = scalar_consts(&mut out, &format!("in{i}"), qp)?;
            inputs.extend([s, z]);
        }
        let id = fresh_name(&format!("q_in{i}"), |n| out.body.resolve(n).is_some());
        let mut node = GraphNode::new(id.clone(), "quantize", inputs);
        for (k, v) in range(qp) {
            node.attrs.insert(k.into(), v);
        }
        out.body
            .replace_uses(&NodeRef::first(name.clone()), &NodeRef::first(id.clone()));
        new_nodes.push(node);
    }
    out.body.nodes.splice(0..0, new_nodes);

    let results = out.body.outputs.clone();
    for (j, r) in results.iter().enumerate() {
        let qp = params.map(|p| &p.outputs[j]);
        let mut inputs = vec![r.clone()];
        if let Some(qp) = qp {
            let (s, z) = scalar_consts(&mut out, &format!("out{j}"), qp)?;
            inputs.extend([s, z]);
        }
        let id = fresh_name(&format!("dq_out{j}"), |n| out.body.resolve(n).is_some());
        let mut node = GraphNode::new(id.clone(), "dequantize", inputs);
        for (k, v) in range(qp) {
            node.attrs.insert(k.into(), v);
        }
        out.body.nodes.push(node);
        out.body.outputs[j] = NodeRef::first(id);
    }
    out.attrs.insert("quantized".into(), AttrValue::Bool(true));
    out.body = infer_graph(&out.body, &Functions::new())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::run_function;
    use crate::ir::{Graph, InputDecl, TensorType};

    #[test]
    fn symmetric_range() {
        let p = QuantParams::int8(-1.0, 1.0).unwrap();
        assert_eq!(p.scale, (2.0f64 / 255.0) as f32);
        assert_eq!(p.zero_point, 0);
    }

    #[test]
    fn degenerate_range() {
        let p = QuantParams::int8(0.0, 0.0).unwrap();
        assert_eq!((p.scale, p.zero_point), (1.0, 0));
    }

    #[test]
    fn min_maps_to_qmin() {
        let p = QuantParams::int8(0.0, 2.55).unwrap();
        assert!((p.scale - 0.01).abs() < 1e-9);
        assert_eq!(p.zero_point, -128);
    }

    #[test]
    fn scalar_round_trip() {
        let p = QuantParams {
            scale: 0.5,
            zero_point: 0,
            qmin: -128,
            qmax: 127,
        };
        assert_eq!(p.quantize(1.0), 2);
        assert_eq!(p.dequantize(2), 1.0);
    }

    fn identity_fn(n_inputs: usize) -> RegionFunction {
        let mut body = Graph::default();
        for i in 0..n_inputs {
            body.inputs.push(InputDecl {
                name: format!("p{i}"),
                ttype: TensorType::f32([4]),
            });
        }
        body.nodes.push(GraphNode::new("r", "relu", vec![NodeRef::first("p0")]));
        body.outputs.push(NodeRef::first("r"));
        let mut attrs = crate::ir::Attrs::new();
        attrs.insert("target".into(), AttrValue::Text("fixsim".into()));
        RegionFunction {
            name: "F".into(),
            body,
            attrs,
        }
    }

    #[test]
    fn node_counts() {
        let f = identity_fn(2);
        let params = FunctionQuant {
            inputs: vec![QuantParams::int8(-1.0, 1.0).unwrap(); 2],
            outputs: vec![QuantParams::int8(0.0, 1.0).unwrap()],
        };
        let q = insert_quant_nodes(&f, Some(&params)).unwrap();
        let count = |op: &str| q.body.nodes.iter().filter(|n| n.op == op).count();
        assert_eq!((count("quantize"), count("dequantize")), (2, 1));
        assert_eq!(q.param_types(), f.param_types());
        assert_eq!(q.body.output_types(), vec![Some(TensorType::f32([4]))]);
    }

    #[test]
    fn boundary_only_function_runs_on_host() {
        let mut f = identity_fn(1);
        f.body.nodes.clear();
        f.body.outputs = vec![NodeRef::first("p0")];
        let p = QuantParams::int8(-1.0, 1.0).unwrap();
        let q = insert_quant_nodes(
            &f,
            Some(&FunctionQuant {
                inputs: vec![p],
                outputs: vec![p],
            }),
        )
        .unwrap();
        let x = Tensor::from_f32(vec![4], vec![-1.0, -0.3, 0.2, 1.0]).unwrap();
        let y = run_function(&q, &Functions::new(), &[x.clone()]).unwrap();
        for (a, b) in x.as_f32().unwrap().iter().zip(y[0].as_f32().unwrap()) {
            assert!((a - b).abs() <= p.scale / 2.0);
        }
    }

    #[test]
    fn mismatched_params_rejected() {
        let f = identity_fn(2);
        let params = FunctionQuant {
            inputs: vec![QuantParams::int8(-1.0, 1.0).unwrap()],
            outputs: vec![],
        };
        assert!(matches!(insert_quant_nodes(&f, Some(&params)), Err(Error::Quant(_))));
    }
}
