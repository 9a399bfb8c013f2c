//! Operator registry: names, attribute decoding and shape rules.

use crate::error::{Error, Result};
use crate::ir::{Attrs, DataType, Layout, TensorType};

/// Every primitive operator known to shape inference and the host kernels.
pub const REGISTERED_OPS: &[&str] = &[
    "conv2d",
    "dense",
    "add",
    "bias_add",
    "relu",
    "max_pool2d",
    "avg_pool2d",
    "reshape",
    "transpose",
    "concat",
    "softmax",
    "nms",
    "quantize",
    "dequantize",
    "layout_transform",
    "host_only_postproc",
];

pub fn is_registered(op: &str) -> bool {
    REGISTERED_OPS.contains(&op)
}

/// Accepted input counts of a registered operator; `None` for unknown ops.
pub fn input_arity(op: &str) -> Option<&'static [usize]> {
    Some(match op {
        "conv2d" | "dense" | "add" | "bias_add" => &[2],
        "quantize" | "dequantize" => &[1, 3],
        "concat" => &[1, 2, 3, 4, 5, 6, 7, 8],
        _ if is_registered(op) => &[1],
        _ => return None,
    })
}

/// Operators that contribute multiply-accumulates.
pub fn has_macs(op: &str) -> bool {
    matches!(op, "conv2d" | "dense")
}

fn ints_attr(attrs: &Attrs, key: &str, default: &[i64]) -> Result<Vec<i64>> {
    match attrs.get(key) {
        None => Ok(default.to_vec()),
        Some(v) => {
            if let Some(i) = v.as_int() {
                Ok(vec![i; default.len().max(1)])
            } else {
                v.as_ints()
                    .map(|s| s.to_vec())
                    .ok_or_else(|| Error::Parse(format!("attribute `{key}` must be an integer list")))
            }
        }
    }
}

fn pair_attr(attrs: &Attrs, key: &str, default: [usize; 2]) -> Result<[usize; 2]> {
    let v = ints_attr(attrs, key, &[default[0] as i64, default[1] as i64])?;
    match v.as_slice() {
        [a, b] if *a >= 0 && *b >= 0 => Ok([*a as usize, *b as usize]),
        [a] if *a >= 0 => Ok([*a as usize, *a as usize]),
        _ => Err(Error::Parse(format!("attribute `{key}` must hold two non-negative integers"))),
    }
}

pub fn layout_attr(attrs: &Attrs, key: &str) -> Result<Layout> {
    match attrs.get(key) {
        None => Ok(Layout::Nchw),
        Some(v) => v
            .as_text()
            .ok_or_else(|| Error::Parse(format!("attribute `{key}` must be text")))?
            .parse(),
    }
}

pub fn int_attr(attrs: &Attrs, key: &str, default: i64) -> Result<i64> {
    match attrs.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_int()
            .ok_or_else(|| Error::Parse(format!("attribute `{key}` must be an integer"))),
    }
}

pub fn real_attr(attrs: &Attrs, key: &str, default: f64) -> Result<f64> {
    match attrs.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_real()
            .ok_or_else(|| Error::Parse(format!("attribute `{key}` must be a number"))),
    }
}

pub fn bool_attr(attrs: &Attrs, key: &str) -> bool {
    attrs.get(key).and_then(|v| v.as_bool()).unwrap_or(false)
}

/// Resolve a possibly negative axis against `rank`.
pub fn norm_axis(axis: i64, rank: usize) -> Option<usize> {
    let r = rank as i64;
    let a = if axis < 0 { axis + r } else { axis };
    (0..r).contains(&a).then_some(a as usize)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conv2dParams {
    pub strides: [usize; 2],
    pub padding: [usize; 2],
    pub layout: Layout,
}

impl Conv2dParams {
    pub fn from_attrs(attrs: &Attrs) -> Result<Self> {
        let strides = pair_attr(attrs, "strides", [1, 1])?;
        if strides.contains(&0) {
            return Err(Error::Parse("conv2d strides must be positive".into()));
        }
        Ok(Conv2dParams {
            strides,
            padding: pair_attr(attrs, "padding", [0, 0])?,
            layout: layout_attr(attrs, "layout")?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pool2dParams {
    pub pool_size: [usize; 2],
    pub strides: [usize; 2],
    pub padding: [usize; 2],
    pub layout: Layout,
}

impl Pool2dParams {
    pub fn from_attrs(attrs: &Attrs) -> Result<Self> {
        let pool_size = pair_attr(attrs, "pool_size", [2, 2])?;
        let strides = pair_attr(attrs, "strides", pool_size)?;
        if pool_size.contains(&0) || strides.contains(&0) {
            return Err(Error::Parse("pool size and strides must be positive".into()));
        }
        Ok(Pool2dParams {
            pool_size,
            strides,
            padding: pair_attr(attrs, "padding", [0, 0])?,
            layout: layout_attr(attrs, "layout")?,
        })
    }
}

/// Spatial geometry of a 2-D window operator over a 4-D activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: [usize; 2],
    pub pad: [usize; 2],
    pub layout: Layout,
}

impl Geometry {
    /// Decode `(n, c, h, w)` from a 4-D shape in `layout`.
    pub fn dims(shape: &[usize], layout: Layout) -> Option<[usize; 4]> {
        match (shape, layout) {
            ([n, c, h, w], Layout::Nchw) => Some([*n, *c, *h, *w]),
            ([n, h, w, c], Layout::Nhwc) => Some([*n, *c, *h, *w]),
            _ => None,
        }
    }

    pub fn new(
        shape: &[usize],
        layout: Layout,
        kernel: [usize; 2],
        stride: [usize; 2],
        pad: [usize; 2],
    ) -> Option<Self> {
        let [n, c, h, w] = Self::dims(shape, layout)?;
        let ph = h + 2 * pad[0];
        let pw = w + 2 * pad[1];
        if ph < kernel[0] || pw < kernel[1] {
            return None;
        }
        Some(Geometry {
            n,
            c,
            h,
            w,
            oh: (ph - kernel[0]) / stride[0] + 1,
            ow: (pw - kernel[1]) / stride[1] + 1,
            kh: kernel[0],
            kw: kernel[1],
            stride,
            pad,
            layout,
        })
    }

    /// Flat offset of element `(n, c, y, x)` in a tensor with `c_total`
    /// channels and spatial extent `h`×`w`.
    #[inline]
    pub fn offset(layout: Layout, dims: [usize; 3], n: usize, c: usize, y: usize, x: usize) -> usize {
        let [ct, h, w] = dims;
        match layout {
            Layout::Nchw => ((n * ct + c) * h + y) * w + x,
            Layout::Nhwc => ((n * h + y) * w + x) * ct + c,
        }
    }

    pub fn in_offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        Self::offset(self.layout, [self.c, self.h, self.w], n, c, y, x)
    }

    pub fn out_offset(&self, channels: usize, n: usize, c: usize, y: usize, x: usize) -> usize {
        Self::offset(self.layout, [channels, self.oh, self.ow], n, c, y, x)
    }

    pub fn out_shape(&self, channels: usize) -> Vec<usize> {
        match self.layout {
            Layout::Nchw => vec![self.n, channels, self.oh, self.ow],
            Layout::Nhwc => vec![self.n, self.oh, self.ow, channels],
        }
    }

    /// Input coordinate for output position `o` and kernel tap `k` along
    /// one spatial axis, or `None` if it falls in the padding.
    #[inline]
    pub fn src(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = o * stride + k;
        if pos < pad || pos - pad >= extent {
            None
        } else {
            Some(pos - pad)
        }
    }
}

fn mismatch(node: &str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::ShapeMismatch {
        node: node.to_string(),
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}

fn arity(node: &str, op: &str, inputs: &[TensorType], allowed: &[usize]) -> Result<()> {
    if allowed.contains(&inputs.len()) {
        Ok(())
    } else {
        Err(Error::ty(
            node,
            format!("`{op}` takes {:?} inputs, got {}", allowed, inputs.len()),
        ))
    }
}

fn require_dtype(node: &str, t: &TensorType, allowed: &[DataType]) -> Result<()> {
    if allowed.contains(&t.dtype) {
        Ok(())
    } else {
        Err(Error::ty(
            node,
            format!("dtype {} not accepted (allowed {:?})", t.dtype, allowed),
        ))
    }
}

/// Output types for a primitive operator.
pub fn infer(node: &str, op: &str, attrs: &Attrs, inputs: &[TensorType]) -> Result<Vec<TensorType>> {
    use DataType::*;
    let out = match op {
        "conv2d" => {
            arity(node, op, inputs, &[2])?;
            let (data, weight) = (&inputs[0], &inputs[1]);
            let p = Conv2dParams::from_attrs(attrs)?;
            if data.rank() != 4 {
                return Err(mismatch(node, "4-D data", data));
            }
            if weight.rank() != 4 {
                return Err(mismatch(node, "4-D OIHW weight", weight));
            }
            let out_dtype = match (data.dtype, weight.dtype) {
                (F32, F32) => F32,
                (I8 | I32, I8) => I32,
                _ => {
                    return Err(Error::ty(
                        node,
                        format!("conv2d dtypes {}x{} unsupported", data.dtype, weight.dtype),
                    ))
                }
            };
            let [_, c, _, _] = Geometry::dims(&data.shape, p.layout).unwrap();
            if weight.shape[1] != c {
                return Err(mismatch(
                    node,
                    format!("weight with {c} input channels"),
                    weight,
                ));
            }
            let g = Geometry::new(
                &data.shape,
                p.layout,
                [weight.shape[2], weight.shape[3]],
                p.strides,
                p.padding,
            )
            .ok_or_else(|| mismatch(node, "kernel no larger than padded input", data))?;
            TensorType::new(g.out_shape(weight.shape[0]), out_dtype)
        }
        "dense" => {
            arity(node, op, inputs, &[2])?;
            let (data, weight) = (&inputs[0], &inputs[1]);
            if data.rank() != 2 || weight.rank() != 2 || data.shape[1] != weight.shape[1] {
                return Err(mismatch(
                    node,
                    format!("(B,In) x (Out,In), got data {data}"),
                    weight,
                ));
            }
            let dtype = match (data.dtype, weight.dtype) {
                (F32, F32) => F32,
                (I8 | I32, I8) => I32,
                _ => return Err(Error::ty(node, "dense dtypes unsupported")),
            };
            TensorType::new(vec![data.shape[0], weight.shape[0]], dtype)
        }
        "add" => {
            arity(node, op, inputs, &[2])?;
            if inputs[0] != inputs[1] {
                return Err(mismatch(node, &inputs[0], &inputs[1]));
            }
            require_dtype(node, &inputs[0], &[F32, I32])?;
            inputs[0].clone()
        }
        "bias_add" => {
            arity(node, op, inputs, &[2])?;
            let (data, bias) = (&inputs[0], &inputs[1]);
            let axis = norm_axis(int_attr(attrs, "axis", 1)?, data.rank())
                .ok_or_else(|| mismatch(node, "valid bias axis", data))?;
            if bias.shape != [data.shape[axis]] {
                return Err(mismatch(
                    node,
                    format!("bias of shape [{}]", data.shape[axis]),
                    bias,
                ));
            }
            match (data.dtype, bias.dtype) {
                (F32, F32) | (I32, F32) => {}
                _ => return Err(Error::ty(node, "bias_add dtypes unsupported")),
            }
            data.clone()
        }
        "relu" => {
            arity(node, op, inputs, &[1])?;
            require_dtype(node, &inputs[0], &[F32, I8, I32])?;
            inputs[0].clone()
        }
        "host_only_postproc" => {
            arity(node, op, inputs, &[1])?;
            inputs[0].clone()
        }
        "max_pool2d" | "avg_pool2d" => {
            arity(node, op, inputs, &[1])?;
            let data = &inputs[0];
            if op == "avg_pool2d" {
                require_dtype(node, data, &[F32])?;
            } else {
                require_dtype(node, data, &[F32, I8, I32])?;
            }
            let p = Pool2dParams::from_attrs(attrs)?;
            if data.rank() != 4 {
                return Err(mismatch(node, "4-D data", data));
            }
            let g = Geometry::new(&data.shape, p.layout, p.pool_size, p.strides, p.padding)
                .ok_or_else(|| mismatch(node, "window no larger than padded input", data))?;
            TensorType::new(g.out_shape(g.c), data.dtype)
        }
        "reshape" => {
            arity(node, op, inputs, &[1])?;
            let shape = reshape_target(node, attrs, &inputs[0])?;
            TensorType::new(shape, inputs[0].dtype)
        }
        "transpose" => {
            arity(node, op, inputs, &[1])?;
            let axes = transpose_axes(attrs, inputs[0].rank())
                .ok_or_else(|| mismatch(node, "permutation of all axes", &inputs[0]))?;
            TensorType::new(
                axes.iter().map(|&a| inputs[0].shape[a]).collect::<Vec<_>>(),
                inputs[0].dtype,
            )
        }
        "concat" => {
            if inputs.is_empty() {
                return Err(Error::ty(node, "concat needs at least one input"));
            }
            let first = &inputs[0];
            let axis = norm_axis(int_attr(attrs, "axis", 0)?, first.rank())
                .ok_or_else(|| mismatch(node, "valid concat axis", first))?;
            let mut shape = first.shape.clone();
            for t in &inputs[1..] {
                let compatible = t.dtype == first.dtype
                    && t.rank() == first.rank()
                    && (0..t.rank()).all(|d| d == axis || t.shape[d] == first.shape[d]);
                if !compatible {
                    return Err(mismatch(node, first, t));
                }
                shape[axis] += t.shape[axis];
            }
            TensorType::new(shape, first.dtype)
        }
        "softmax" => {
            arity(node, op, inputs, &[1])?;
            require_dtype(node, &inputs[0], &[F32])?;
            norm_axis(int_attr(attrs, "axis", -1)?, inputs[0].rank())
                .ok_or_else(|| mismatch(node, "valid softmax axis", &inputs[0]))?;
            inputs[0].clone()
        }
        "nms" => {
            arity(node, op, inputs, &[1])?;
            let d = &inputs[0];
            require_dtype(node, d, &[F32])?;
            if d.rank() != 2 || d.shape[1] != 5 {
                return Err(mismatch(node, "(N,5) detections", d));
            }
            d.clone()
        }
        "quantize" => {
            arity(node, op, inputs, &[1, 3])?;
            require_dtype(node, &inputs[0], &[F32])?;
            check_qparams(node, &inputs[1..])?;
            TensorType::new(inputs[0].shape.clone(), I8)
        }
        "dequantize" => {
            arity(node, op, inputs, &[1, 3])?;
            require_dtype(node, &inputs[0], &[I8, I32])?;
            check_qparams(node, &inputs[1..])?;
            TensorType::new(inputs[0].shape.clone(), F32)
        }
        "layout_transform" => {
            arity(node, op, inputs, &[1])?;
            let data = &inputs[0];
            if data.rank() != 4 {
                return Err(mismatch(node, "4-D tensor", data));
            }
            let src = layout_attr(attrs, "src_layout")?;
            let dst = layout_attr(attrs, "dst_layout")?;
            let perm = src.perm_to(dst);
            TensorType::new(perm.iter().map(|&a| data.shape[a]).collect::<Vec<_>>(), data.dtype)
        }
        other => return Err(Error::UnknownOp(other.to_string())),
    };
    Ok(vec![out])
}

fn check_qparams(node: &str, params: &[TensorType]) -> Result<()> {
    if let [scale, zp] = params {
        if scale.dtype != DataType::F32 || scale.numel() != 1 {
            return Err(mismatch(node, "f32 scalar scale", scale));
        }
        if zp.dtype != DataType::I8 || zp.numel() != 1 {
            return Err(mismatch(node, "i8 scalar zero point", zp));
        }
    }
    Ok(())
}

pub fn reshape_target(node: &str, attrs: &Attrs, data: &TensorType) -> Result<Vec<usize>> {
    let spec = attrs
        .get("newshape")
        .and_then(|v| v.as_ints())
        .ok_or_else(|| Error::ty(node, "reshape needs `newshape`"))?;
    let known: i64 = spec.iter().filter(|&&d| d != -1).product();
    let wildcards = spec.iter().filter(|&&d| d == -1).count();
    let numel = data.numel() as i64;
    if wildcards > 1 || spec.iter().any(|&d| d == 0 || d < -1) {
        return Err(mismatch(node, "newshape with positive dims and at most one -1", data));
    }
    let shape: Vec<usize> = spec
        .iter()
        .map(|&d| if d == -1 { (numel / known.max(1)) as usize } else { d as usize })
        .collect();
    if shape.iter().product::<usize>() as i64 != numel {
        return Err(mismatch(node, format!("{} elements", numel), format!("newshape {spec:?}")));
    }
    Ok(shape)
}

pub fn transpose_axes(attrs: &Attrs, rank: usize) -> Option<Vec<usize>> {
    let axes: Vec<usize> = match attrs.get("axes").and_then(|v| v.as_ints()) {
        None => (0..rank).rev().collect(),
        Some(a) => a
            .iter()
            .map(|&x| norm_axis(x, rank))
            .collect::<Option<Vec<_>>>()?,
    };
    let mut seen = vec![false; rank];
    if axes.len() != rank {
        return None;
    }
    for &a in &axes {
        if std::mem::replace(&mut seen[a], true) {
            return None;
        }
    }
    Some(axes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::AttrValue;

    fn attrs(pairs: &[(&str, AttrValue)]) -> Attrs {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn conv_output_shape() {
        let a = attrs(&[("padding", AttrValue::Ints(vec![1, 1]))]);
        let out = infer(
            "c",
            "conv2d",
            &a,
            &[TensorType::f32([1, 3, 8, 8]), TensorType::f32([4, 3, 3, 3])],
        )
        .unwrap();
        assert_eq!(out[0].shape, vec![1, 4, 8, 8]);
    }

    #[test]
    fn conv_nhwc_output_shape() {
        let a = attrs(&[
            ("strides", AttrValue::Ints(vec![2, 2])),
            ("layout", AttrValue::from("NHWC")),
        ]);
        let out = infer(
            "c",
            "conv2d",
            &a,
            &[TensorType::f32([1, 9, 9, 3]), TensorType::f32([5, 3, 3, 3])],
        )
        .unwrap();
        assert_eq!(out[0].shape, vec![1, 4, 4, 5]);
    }

    #[test]
    fn add_rejects_broadcast() {
        let err = infer(
            "a",
            "add",
            &Attrs::new(),
            &[TensorType::f32([2, 3]), TensorType::f32([4, 3])],
        )
        .unwrap_err();
        match err {
            Error::ShapeMismatch { node, .. } => assert_eq!(node, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reshape_with_wildcard() {
        let a = attrs(&[("newshape", AttrValue::Ints(vec![1, -1]))]);
        let s = reshape_target("r", &a, &TensorType::f32([1, 8, 2, 2])).unwrap();
        assert_eq!(s, vec![1, 32]);
    }

    #[test]
    fn transpose_rejects_duplicate_axes() {
        let a = attrs(&[("axes", AttrValue::Ints(vec![0, 0]))]);
        assert!(transpose_axes(&a, 2).is_none());
    }

    #[test]
    fn unknown_op() {
        assert!(matches!(
            infer("x", "frobnicate", &Attrs::new(), &[]),
            Err(Error::UnknownOp(_))
        ));
    }
}
