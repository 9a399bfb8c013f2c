//! Fixed-point engine with its own bitstream format (`FXS1`).
//!
//! Layout: `magic | version u32 | op_count u32 | op records | quant table |
//! weight blobs`. An op record is a tag byte followed by a length-prefixed
//! attribute block holding the node id, operands, attributes and result
//! type. Boundary quantize ops read parameters; dequantize ops produce the
//! results in record order.
//!
//! Interior values are i32 codes with a scale and zero point. Operands of
//! conv2d/dense wider than int8 are narrowed by a data-dependent
//! power-of-two shift. Rescaling uses integer multiply-shift.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use super::refsim::check_format;
use crate::accel::QuantParams;
use crate::codec::{Reader, Writer};
use crate::codegen::{AccelSubModule, CodegenBackend, PayloadFormat};
use crate::error::{Error, Result};
use crate::ir::{topo_order, AttrValue, Attrs, ConstantTensor, DataType, RegionFunction, Source, Tensor, TensorType};
use crate::kernels::{self, dequantize_value, quantize_value};
use crate::ops::{self, Conv2dParams, Geometry, Pool2dParams};
use crate::runtime::{AccelEngine, EngineFactory, EngineOutput};

pub const FIXSIM: &str = "fixsim";
pub const FXS_MAGIC: &[u8; 4] = b"FXS1";
pub const FXS_VERSION: u32 = 1;

/// Interior operators the engine executes in integer arithmetic.
pub const FIXSIM_INTERIOR_OPS: &[&str] = &[
    "conv2d",
    "dense",
    "bias_add",
    "relu",
    "max_pool2d",
    "reshape",
    "layout_transform",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FxsKind {
    Quantize = 1,
    Dequantize = 2,
    Conv2d = 3,
    Dense = 4,
    BiasAdd = 5,
    Relu = 6,
    MaxPool2d = 7,
    Reshape = 8,
    LayoutTransform = 9,
}

impl FxsKind {
    const ALL: [FxsKind; 9] = {
        use FxsKind::*;
        [Quantize, Dequantize, Conv2d, Dense, BiasAdd, Relu, MaxPool2d, Reshape, LayoutTransform]
    };

    /// Graph operator this record executes.
    pub fn op_name(self) -> &'static str {
        match self {
            FxsKind::Quantize => "quantize",
            FxsKind::Dequantize => "dequantize",
            FxsKind::Conv2d => "conv2d",
            FxsKind::Dense => "dense",
            FxsKind::BiasAdd => "bias_add",
            FxsKind::Relu => "relu",
            FxsKind::MaxPool2d => "max_pool2d",
            FxsKind::Reshape => "reshape",
            FxsKind::LayoutTransform => "layout_transform",
        }
    }

    fn from_op(op: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.op_name() == op)
    }

    fn from_tag(t: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| *k as u8 == t)
            .ok_or_else(|| Error::Decode(format!("FXS1: unknown op tag {t}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operand {
    Param(u32),
    Value(u32),
    Weight(u32),
    Quant(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FxsOp {
    pub kind: FxsKind,
    pub id: String,
    pub operands: Vec<Operand>,
    pub attrs: Attrs,
    pub out_type: TensorType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FxsBitstream {
    pub ops: Vec<FxsOp>,
    pub quant: Vec<QuantParams>,
    pub weights: Vec<Tensor>,
}

fn unsupported(op: &str) -> Error {
    Error::Unsupported {
        op: op.to_string(),
        target: FIXSIM.to_string(),
    }
}

fn scalar_f32(t: &Tensor) -> Option<f32> {
    t.as_f32().filter(|v| v.len() == 1).map(|v| v[0])
}

fn scalar_i8(t: &Tensor) -> Option<i32> {
    t.as_i8().filter(|v| v.len() == 1).map(|v| v[0] as i32)
}

/// Bias pre-quantization: i32 codes with scale `max|b| / 2^24`.
fn quantize_bias(b: &[f32]) -> (Vec<i32>, f64) {
    let m = b.iter().fold(0f64, |a, &x| a.max((x as f64).abs()));
    let scale = if m > 0.0 { m / (1u32 << 24) as f64 } else { 1.0 };
    (b.iter().map(|&x| (x as f64 / scale).round_ties_even() as i32).collect(), scale)
}

impl FxsBitstream {
    /// Lower a function processed by the quantization pass.
    pub fn from_function(f: &RegionFunction) -> Result<Self> {
        let body = &f.body;
        let boundary = |msg: String| Error::Codegen(format!("fixsim `{}`: {msg}", f.name));
        let consumers = body.consumers();
        for p in &body.inputs {
            let ok = consumers.get(&p.name).is_some_and(|cs| {
                cs.iter()
                    .all(|c| body.node(c).is_some_and(|n| n.op == "quantize" && n.inputs[0].node == p.name))
            });
            if !ok || body.outputs.iter().any(|r| r.node == p.name) {
                return Err(boundary(format!(
                    "parameter `{}` must feed only quantize nodes (run the quantization pass)",
                    p.name
                )));
            }
        }
        for (j, r) in body.outputs.iter().enumerate() {
            if !body.node(&r.node).is_some_and(|n| n.op == "dequantize") {
                return Err(boundary(format!("result {j} is not produced by a dequantize node")));
            }
            if consumers.contains_key(&r.node) {
                return Err(boundary(format!("dequantize `{}` is consumed inside the region", r.node)));
            }
        }
        if body.outputs.len() != body.nodes.iter().filter(|n| n.op == "dequantize").count() {
            return Err(boundary("every dequantize node must be a distinct result".into()));
        }

        let mut bs = FxsBitstream {
            ops: Vec::new(),
            quant: Vec::new(),
            weights: Vec::new(),
        };
        let mut value_of: HashMap<&str, u32> = HashMap::new();
        let mut weight_of: HashMap<&str, u32> = HashMap::new();
        let index = body.node_index();
        let mut order = topo_order(body)?;
        // Results in output order at the end, so record order fixes result order.
        let dq: Vec<String> = body.outputs.iter().map(|r| r.node.clone()).collect();
        order.retain(|id| !dq.contains(id));
        order.extend(dq);

        for id in &order {
            let n = &body.nodes[index[id.as_str()]];
            let kind = FxsKind::from_op(&n.op).ok_or_else(|| unsupported(&n.op))?;
            let mut attrs = n.attrs.clone();
            let constant = |i: usize| -> Result<&Tensor> {
                match n.inputs.get(i).and_then(|r| body.resolve(&r.node)) {
                    Some(Source::Constant(c)) => Ok(&body.constants[c].value),
                    _ => Err(boundary(format!("`{id}` operand {i} must be a constant"))),
                }
            };
            let value = |i: usize| -> Result<Operand> {
                let r = &n.inputs[i];
                value_of
                    .get(r.node.as_str())
                    .filter(|_| r.index == 0)
                    .map(|&v| Operand::Value(v))
                    .ok_or_else(|| boundary(format!("`{id}` reads {r}, which is not an interior value")))
            };
            let mut operands = Vec::new();
            match kind {
                FxsKind::Quantize | FxsKind::Dequantize => {
                    if kind == FxsKind::Quantize {
                        let p = body
                            .inputs
                            .iter()
                            .position(|d| d.name == n.inputs[0].node)
                            .ok_or_else(|| boundary(format!("quantize `{id}` must read a parameter")))?;
                        operands.push(Operand::Param(p as u32));
                    } else {
                        operands.push(value(0)?);
                    }
                    if n.inputs.len() == 3 {
                        let (qmin, qmax) = kernels::qrange(&n.attrs)?;
                        let scale = scalar_f32(constant(1)?)
                            .ok_or_else(|| boundary(format!("`{id}` scale must be an f32 scalar")))?;
                        let zero_point = scalar_i8(constant(2)?)
                            .ok_or_else(|| boundary(format!("`{id}` zero point must be an i8 scalar")))?;
                        bs.quant.push(QuantParams {
                            scale,
                            zero_point,
                            qmin,
                            qmax,
                        });
                        operands.push(Operand::Quant(bs.quant.len() as u32 - 1));
                    }
                }
                FxsKind::Conv2d | FxsKind::Dense => {
                    operands.push(value(0)?);
                    let w = constant(1)?;
                    if w.dtype() != DataType::I8 || n.attr("weight_scale").is_none() {
                        return Err(boundary(format!("`{id}` needs a pre-quantized i8 weight")));
                    }
                    let wname = n.inputs[1].node.as_str();
                    let widx = match weight_of.get(wname) {
                        Some(&i) => i,
                        None => {
                            bs.weights.push(w.clone());
                            let i = bs.weights.len() as u32 - 1;
                            weight_of.insert(wname, i);
                            i
                        }
                    };
                    operands.push(Operand::Weight(widx));
                }
                FxsKind::BiasAdd => {
                    operands.push(value(0)?);
                    let b = constant(1)?
                        .as_f32()
                        .ok_or_else(|| boundary(format!("`{id}` bias must be f32")))?;
                    let (q, scale) = quantize_bias(b);
                    bs.weights.push(Tensor::from_i32(vec![q.len()], q)?);
                    attrs.insert("bias_scale".into(), AttrValue::Real(scale));
                    operands.push(Operand::Weight(bs.weights.len() as u32 - 1));
                }
                _ => operands.push(value(0)?),
            }
            let out_type = n
                .out_types
                .first()
                .cloned()
                .ok_or_else(|| boundary(format!("`{id}` is not type-inferred")))?;
            value_of.insert(n.id.as_str(), bs.ops.len() as u32);
            bs.ops.push(FxsOp {
                kind,
                id: n.id.clone(),
                operands,
                attrs,
                out_type,
            });
        }
        bs.validate()?;
        Ok(bs)
    }

    /// Structural checks shared by lowering and decoding.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::Decode(format!("FXS1: {msg}"));
        let mut params = Vec::new();
        let mut seen_dq = false;
        for (i, op) in self.ops.iter().enumerate() {
            for o in &op.operands {
                match *o {
                    Operand::Param(p) => {
                        if op.kind != FxsKind::Quantize {
                            return Err(bad(format!("`{}` reads a parameter outside a quantize node", op.id)));
                        }
                        params.push(p);
                    }
                    Operand::Value(v) => {
                        let src = self
                            .ops
                            .get(v as usize)
                            .filter(|_| (v as usize) < i)
                            .ok_or_else(|| bad(format!("`{}` reads value {v} before it is written", op.id)))?;
                        if src.kind == FxsKind::Dequantize {
                            return Err(bad(format!("`{}` reads a dequantized value", op.id)));
                        }
                    }
                    Operand::Weight(w) if w as usize >= self.weights.len() => {
                        return Err(bad(format!("`{}` reads missing weight {w}", op.id)))
                    }
                    Operand::Quant(q) if q as usize >= self.quant.len() => {
                        return Err(bad(format!("`{}` reads missing quant record {q}", op.id)))
                    }
                    _ => {}
                }
            }
            if op.kind == FxsKind::Dequantize {
                seen_dq = true;
            } else if seen_dq {
                return Err(bad("dequantize records must come last".into()));
            }
        }
        let mut sorted = params.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if params.is_empty() || sorted.len() != params.len() || sorted.iter().enumerate().any(|(i, &p)| p as usize != i) {
            return Err(bad("missing quantize boundary nodes: each parameter needs exactly one".into()));
        }
        if !seen_dq {
            return Err(bad("missing dequantize boundary nodes".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.ops.iter().filter(|o| o.kind == FxsKind::Quantize).count()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.buf.extend_from_slice(FXS_MAGIC);
        w.u32(FXS_VERSION);
        w.u32(self.ops.len() as u32);
        for op in &self.ops {
            w.u8(op.kind as u8);
            let mut block = Writer::new();
            block.str(&op.id);
            block.u32(op.operands.len() as u32);
            for o in &op.operands {
                let (tag, idx) = match *o {
                    Operand::Param(i) => (0, i),
                    Operand::Value(i) => (1, i),
                    Operand::Weight(i) => (2, i),
                    Operand::Quant(i) => (3, i),
                };
                block.u8(tag);
                block.u32(idx);
            }
            block.attrs(&op.attrs);
            block.ttype(&op.out_type);
            w.bytes(&block.buf);
        }
        w.u32(self.quant.len() as u32);
        for q in &self.quant {
            w.f32(q.scale);
            w.u32(q.zero_point as u32);
            w.u32(q.qmin as u32);
            w.u32(q.qmax as u32);
        }
        w.u32(self.weights.len() as u32);
        for t in &self.weights {
            w.tensor(t);
        }
        w.buf
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        if data.len() < 4 || &data[..4] != FXS_MAGIC {
            return Err(Error::BadMagic { expected: "FXS1" });
        }
        let mut r = Reader::new(&data[4..], "FXS1 bitstream");
        let version = r.u32()?;
        if version != FXS_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FXS_VERSION,
            });
        }
        let n = r.count32(9)?;
        let mut ops = Vec::with_capacity(n);
        for _ in 0..n {
            let kind = FxsKind::from_tag(r.u8()?)?;
            let mut b = Reader::new(r.bytes()?, "FXS1 op record");
            let id = b.str()?;
            let k = b.count32(5)?;
            let operands = (0..k)
                .map(|_| {
                    let tag = b.u8()?;
                    let i = b.u32()?;
                    Ok(match tag {
                        0 => Operand::Param(i),
                        1 => Operand::Value(i),
                        2 => Operand::Weight(i),
                        3 => Operand::Quant(i),
                        t => return Err(Error::Decode(format!("FXS1: unknown operand tag {t}"))),
                    })
                })
                .collect::<Result<_>>()?;
            let attrs = b.attrs()?;
            let out_type = b.ttype()?;
            if !b.is_empty() {
                return Err(Error::Decode("FXS1: trailing bytes in op record".into()));
            }
            ops.push(FxsOp {
                kind,
                id,
                operands,
                attrs,
                out_type,
            });
        }
        let n = r.count32(16)?;
        let quant = (0..n)
            .map(|_| {
                Ok(QuantParams {
                    scale: r.f32()?,
                    zero_point: r.u32()? as i32,
                    qmin: r.u32()? as i32,
                    qmax: r.u32()? as i32,
                })
            })
            .collect::<Result<_>>()?;
        let n = r.count32(5)?;
        let weights = (0..n).map(|_| r.tensor()).collect::<Result<_>>()?;
        if !r.is_empty() {
            return Err(Error::Decode("FXS1: trailing bytes".into()));
        }
        let bs = FxsBitstream { ops, quant, weights };
        bs.validate()?;
        Ok(bs)
    }
}

/// `ratio ≈ m / 2^sh` with `m` in `[2^30, 2^31)` when representable.
#[derive(Clone, Copy, Debug)]
struct Multiplier {
    m: i64,
    sh: u32,
}

impl Multiplier {
    fn new(ratio: f64) -> Self {
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Multiplier { m: 0, sh: 0 };
        }
        let e = ratio.log2().floor() as i32;
        let sh = (30 - e).clamp(0, 62) as u32;
        Multiplier {
            m: (ratio * (1u64 << sh) as f64).round() as i64,
            sh,
        }
    }

    fn apply(self, v: i64) -> i64 {
        let p = v as i128 * self.m as i128;
        let r = if self.sh == 0 { p } else { (p + (1i128 << (self.sh - 1))) >> self.sh };
        r.clamp(i64::MIN as i128, i64::MAX as i128) as i64
    }
}

fn sat32(v: i64) -> i32 {
    v.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

/// Integer codes `v` standing for real values `scale * (v - zero)`.
#[derive(Clone, Debug)]
struct QValue {
    t: Tensor,
    scale: f64,
    zero: i32,
}

impl QValue {
    fn codes(&self) -> &[i32] {
        self.t.as_i32().expect("interior values are i32")
    }

    fn with(&self, t: Tensor) -> QValue {
        QValue {
            t,
            scale: self.scale,
            zero: self.zero,
        }
    }

    /// Centered codes in int8 range and their scale. Int8 codes pass through
    /// unchanged; wider values are shifted right by the smallest power of
    /// two that fits.
    fn narrow(&self) -> (Vec<i64>, f64) {
        let v = self.codes();
        let in_i8 = |x: i32| (-128..=127).contains(&x);
        let centered: Vec<i64> = v.iter().map(|&x| x as i64 - self.zero as i64).collect();
        if in_i8(self.zero) && v.iter().all(|&x| in_i8(x)) {
            return (centered, self.scale);
        }
        let m = centered.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
        let mut k = 0u32;
        while (m >> k) > 127 {
            k += 1;
        }
        if k == 0 {
            return (centered, self.scale);
        }
        let half = 1i64 << (k - 1);
        let out = centered.iter().map(|&x| ((x + half) >> k).clamp(-128, 127)).collect();
        (out, self.scale * (1u64 << k) as f64)
    }
}

#[derive(Default)]
struct Counters {
    interior_ops: AtomicU64,
    float_kernels: AtomicU64,
}

pub struct FixSimEngine {
    bs: FxsBitstream,
    counters: Counters,
}

impl FixSimEngine {
    pub fn new(bs: FxsBitstream) -> Result<Self> {
        bs.validate()?;
        Ok(FixSimEngine {
            bs,
            counters: Counters::default(),
        })
    }

    pub fn bitstream(&self) -> &FxsBitstream {
        &self.bs
    }

    /// Interior ops executed so far.
    pub fn interior_op_count(&self) -> u64 {
        self.counters.interior_ops.load(Ordering::Relaxed)
    }

    /// Interior ops that touched a floating-point tensor. Always zero for
    /// a well-formed bitstream.
    pub fn float_kernel_count(&self) -> u64 {
        self.counters.float_kernels.load(Ordering::Relaxed)
    }

    fn weight(&self, o: &Operand) -> Result<&Tensor> {
        match *o {
            Operand::Weight(i) => Ok(&self.bs.weights[i as usize]),
            _ => Err(Error::Runtime("FXS1: expected a weight operand".into())),
        }
    }

    fn quant(&self, op: &FxsOp) -> Option<QuantParams> {
        op.operands.iter().find_map(|o| match *o {
            Operand::Quant(i) => Some(self.bs.quant[i as usize]),
            _ => None,
        })
    }

    fn entry(&self, op: &FxsOp, x: &Tensor) -> Result<QValue> {
        let data = x
            .as_f32()
            .ok_or_else(|| Error::Runtime(format!("`{}` expects an f32 argument", op.id)))?;
        let p = match self.quant(op) {
            Some(p) => p,
            None => {
                let (qmin, qmax) = kernels::qrange(&op.attrs)?;
                let (lo, hi) = data
                    .iter()
                    .fold((0f32, 0f32), |(a, b), &v| (a.min(v), b.max(v)));
                QuantParams::from_range(lo, hi, qmin, qmax)?
            }
        };
        let q = data
            .iter()
            .map(|&v| quantize_value(v, p.scale, p.zero_point, p.qmin, p.qmax))
            .collect();
        Ok(QValue {
            t: Tensor::from_i32(x.shape().to_vec(), q)?,
            scale: p.scale as f64,
            zero: p.zero_point,
        })
    }

    fn exit(&self, op: &FxsOp, x: &QValue) -> Result<Tensor> {
        let v = x.codes();
        let p = match self.quant(op) {
            Some(p) => p,
            None => {
                let (qmin, qmax) = kernels::qrange(&op.attrs)?;
                let lo = v.iter().copied().min().unwrap_or(0).min(x.zero);
                let hi = v.iter().copied().max().unwrap_or(0).max(x.zero);
                let real = |c: i32| (x.scale * (c as i64 - x.zero as i64) as f64) as f32;
                QuantParams::from_range(real(lo), real(hi), qmin, qmax)?
            }
        };
        let mult = Multiplier::new(x.scale / p.scale as f64);
        let out = v
            .iter()
            .map(|&c| {
                let q = mult.apply(c as i64 - x.zero as i64) + p.zero_point as i64;
                let q = q.clamp(p.qmin as i64, p.qmax as i64) as i32;
                dequantize_value(q, p.scale, p.zero_point)
            })
            .collect();
        Tensor::from_f32(x.t.shape().to_vec(), out)
    }

    fn interior(&self, op: &FxsOp, x: &QValue) -> Result<QValue> {
        let w_attr = |k: &str| -> Result<(f64, i64)> {
            let s = ops::real_attr(&op.attrs, "weight_scale", 0.0)?;
            let z = ops::int_attr(&op.attrs, "weight_zero_point", 0)?;
            if !(s > 0.0) {
                return Err(Error::Runtime(format!("`{}` lacks a positive {k}", op.id)));
            }
            Ok((s, z))
        };
        Ok(match op.kind {
            FxsKind::Conv2d => {
                let w = self.weight(&op.operands[1])?;
                let (ws, wz) = w_attr("weight_scale")?;
                let wq = w.as_i8().ok_or_else(|| Error::Runtime("conv2d weight must be i8".into()))?;
                let (xc, xs) = x.narrow();
                let p = Conv2dParams::from_attrs(&op.attrs)?;
                let sh = w.shape();
                let g = Geometry::new(x.t.shape(), p.layout, [sh[2], sh[3]], p.strides, p.padding)
                    .ok_or_else(|| Error::kernel("conv2d", "bad geometry"))?;
                let cout = sh[0];
                let mut out = vec![0i32; g.n * cout * g.oh * g.ow];
                for n in 0..g.n {
                    for co in 0..cout {
                        for oy in 0..g.oh {
                            for ox in 0..g.ow {
                                let mut acc = 0i64;
                                for ci in 0..g.c {
                                    for ky in 0..g.kh {
                                        let Some(iy) = Geometry::src(oy, ky, g.stride[0], g.pad[0], g.h) else {
                                            continue;
                                        };
                                        for kx in 0..g.kw {
                                            let Some(ix) = Geometry::src(ox, kx, g.stride[1], g.pad[1], g.w)
                                            else {
                                                continue;
                                            };
                                            let wv = wq[((co * g.c + ci) * g.kh + ky) * g.kw + kx] as i64 - wz;
                                            acc += xc[g.in_offset(n, ci, iy, ix)] * wv;
                                        }
                                    }
                                }
                                out[g.out_offset(cout, n, co, oy, ox)] = sat32(acc);
                            }
                        }
                    }
                }
                QValue {
                    t: Tensor::from_i32(g.out_shape(cout), out)?,
                    scale: xs * ws,
                    zero: 0,
                }
            }
            FxsKind::Dense => {
                let w = self.weight(&op.operands[1])?;
                let (ws, wz) = w_attr("weight_scale")?;
                let wq = w.as_i8().ok_or_else(|| Error::Runtime("dense weight must be i8".into()))?;
                let (xc, xs) = x.narrow();
                let (&[b, inp], &[outf, _]) = (x.t.shape(), w.shape()) else {
                    return Err(Error::kernel("dense", "expected 2-D operands"));
                };
                let mut out = vec![0i32; b * outf];
                for bi in 0..b {
                    for o in 0..outf {
                        let acc: i64 = (0..inp)
                            .map(|i| xc[bi * inp + i] * (wq[o * inp + i] as i64 - wz))
                            .sum();
                        out[bi * outf + o] = sat32(acc);
                    }
                }
                QValue {
                    t: Tensor::from_i32(vec![b, outf], out)?,
                    scale: xs * ws,
                    zero: 0,
                }
            }
            FxsKind::BiasAdd => {
                let b = self.weight(&op.operands[1])?;
                let bq = b.as_i32().ok_or_else(|| Error::Runtime("bias must be i32".into()))?;
                let bs = ops::real_attr(&op.attrs, "bias_scale", 1.0)?;
                let mult = Multiplier::new(bs / x.scale);
                let bacc: Vec<i64> = bq.iter().map(|&v| mult.apply(v as i64)).collect();
                let shape = x.t.shape();
                let axis = ops::norm_axis(ops::int_attr(&op.attrs, "axis", 1)?, shape.len())
                    .ok_or_else(|| Error::kernel("bias_add", "invalid axis"))?;
                let (outer, len, inner) = kernels::split_axis(shape, axis);
                if bacc.len() != len {
                    return Err(Error::kernel("bias_add", "bias length mismatch"));
                }
                let v = x.codes();
                let mut out = Vec::with_capacity(v.len());
                for o in 0..outer {
                    for (c, bv) in bacc.iter().enumerate() {
                        let base = (o * len + c) * inner;
                        out.extend(v[base..base + inner].iter().map(|&e| sat32(e as i64 - x.zero as i64 + bv)));
                    }
                }
                QValue {
                    t: Tensor::from_i32(shape.to_vec(), out)?,
                    scale: x.scale,
                    zero: 0,
                }
            }
            FxsKind::Relu => {
                let out = x.codes().iter().map(|&v| v.max(x.zero)).collect();
                x.with(Tensor::from_i32(x.t.shape().to_vec(), out)?)
            }
            FxsKind::MaxPool2d => x.with(kernels::max_pool2d(&x.t, &Pool2dParams::from_attrs(&op.attrs)?)?),
            FxsKind::Reshape => x.with(x.t.reshaped(op.out_type.shape.clone())?),
            FxsKind::LayoutTransform => x.with(kernels::layout_transform(
                &x.t,
                ops::layout_attr(&op.attrs, "src_layout")?,
                ops::layout_attr(&op.attrs, "dst_layout")?,
            )?),
            FxsKind::Quantize | FxsKind::Dequantize => unreachable!("boundary ops handled by the caller"),
        })
    }

    fn execute(&self, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        let np = self.bs.num_params();
        if inputs.len() != np {
            return Err(Error::Runtime(format!("fixsim program takes {np} arguments, got {}", inputs.len())));
        }
        let mut values: Vec<Option<QValue>> = vec![None; self.bs.ops.len()];
        let mut results = Vec::new();
        for (i, op) in self.bs.ops.iter().enumerate() {
            let arg = |k: usize| -> Result<&QValue> {
                match op.operands.get(k) {
                    Some(&Operand::Value(v)) => values[v as usize]
                        .as_ref()
                        .ok_or_else(|| Error::Runtime(format!("`{}` reads an unset value", op.id))),
                    _ => Err(Error::Runtime(format!("`{}` operand {k} is not a value", op.id))),
                }
            };
            match op.kind {
                FxsKind::Quantize => {
                    let Operand::Param(p) = op.operands[0] else {
                        unreachable!("validated")
                    };
                    values[i] = Some(self.entry(op, &inputs[p as usize])?);
                }
                FxsKind::Dequantize => results.push(self.exit(op, arg(0)?)?),
                _ => {
                    let x = arg(0)?;
                    let out = self.interior(op, x)?;
                    self.counters.interior_ops.fetch_add(1, Ordering::Relaxed);
                    let float_touched = x.t.dtype() == DataType::F32
                        || out.t.dtype() == DataType::F32
                        || op
                            .operands
                            .iter()
                            .any(|o| matches!(o, Operand::Weight(w) if self.bs.weights[*w as usize].dtype() == DataType::F32));
                    if float_touched {
                        self.counters.float_kernels.fetch_add(1, Ordering::Relaxed);
                    }
                    debug_assert!(!float_touched, "floating-point kernel between quantize and dequantize");
                    values[i] = Some(out);
                }
            }
        }
        Ok(results)
    }
}

impl AccelEngine for FixSimEngine {
    fn run(&self, inputs: &[Tensor]) -> Result<EngineOutput> {
        let start = Instant::now();
        let outputs = self.execute(inputs)?;
        Ok(EngineOutput {
            outputs,
            exec_ns: start.elapsed().as_nanos() as u64,
        })
    }
}

pub struct FixSimBackend;

impl CodegenBackend for FixSimBackend {
    fn target(&self) -> &str {
        FIXSIM
    }

    fn format(&self) -> PayloadFormat {
        PayloadFormat::CustomBitstream
    }

    fn compile(&self, f: &RegionFunction) -> Result<Vec<u8>> {
        Ok(FxsBitstream::from_function(f)?.encode())
    }

    fn embeds_constants(&self) -> bool {
        true
    }

    fn requires_quantization(&self) -> bool {
        true
    }
}

/// Factory with a simulated initialization delay.
#[derive(Default)]
pub struct FixSimFactory {
    pub init_delay: Duration,
}

impl EngineFactory for FixSimFactory {
    fn target(&self) -> &str {
        FIXSIM
    }

    fn create(&self, sub: &AccelSubModule, _constants: &[ConstantTensor]) -> Result<Box<dyn AccelEngine>> {
        check_format(sub, PayloadFormat::CustomBitstream)?;
        if !self.init_delay.is_zero() {
            std::thread::sleep(self.init_delay);
        }
        Ok(Box::new(FixSimEngine::new(FxsBitstream::decode(&sub.payload)?)?))
    }
}
