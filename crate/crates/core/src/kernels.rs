//! Host reference kernels.
//!
//! Every engine that claims bitwise host equivalence routes through these
//! functions, so accumulation order here is part of the contract.

use crate::error::{Error, Result};
use crate::ir::{Attrs, DataType, Layout, Tensor, TensorData};
use crate::ops::{self, Conv2dParams, Geometry, Pool2dParams};

fn f32_input<'a>(op: &str, t: &'a Tensor) -> Result<&'a [f32]> {
    t.as_f32()
        .ok_or_else(|| Error::kernel(op, format!("expected f32 input, got {}", t.dtype())))
}

/// Evaluate a primitive operator on concrete inputs.
pub fn eval(op: &str, attrs: &Attrs, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
    let want = |n: usize| -> Result<()> {
        if inputs.len() == n {
            Ok(())
        } else {
            Err(Error::kernel(op, format!("expected {n} inputs, got {}", inputs.len())))
        }
    };
    let out = match op {
        "conv2d" => {
            want(2)?;
            conv2d(inputs[0], inputs[1], &Conv2dParams::from_attrs(attrs)?)?
        }
        "dense" => {
            want(2)?;
            dense(inputs[0], inputs[1])?
        }
        "add" => {
            want(2)?;
            add(inputs[0], inputs[1])?
        }
        "bias_add" => {
            want(2)?;
            bias_add(inputs[0], inputs[1], ops::int_attr(attrs, "axis", 1)?)?
        }
        "relu" => {
            want(1)?;
            relu(inputs[0])?
        }
        "max_pool2d" => {
            want(1)?;
            max_pool2d(inputs[0], &Pool2dParams::from_attrs(attrs)?)?
        }
        "avg_pool2d" => {
            want(1)?;
            avg_pool2d(inputs[0], &Pool2dParams::from_attrs(attrs)?)?
        }
        "reshape" => {
            want(1)?;
            let shape = ops::reshape_target(op, attrs, &inputs[0].ttype())?;
            inputs[0].reshaped(shape)?
        }
        "transpose" => {
            want(1)?;
            let axes = ops::transpose_axes(attrs, inputs[0].shape().len())
                .ok_or_else(|| Error::kernel(op, "invalid axes"))?;
            transpose(inputs[0], &axes)?
        }
        "concat" => concat(inputs, ops::int_attr(attrs, "axis", 0)?)?,
        "softmax" => {
            want(1)?;
            softmax(inputs[0], ops::int_attr(attrs, "axis", -1)?)?
        }
        "nms" => {
            want(1)?;
            nms(inputs[0], ops::real_attr(attrs, "iou_threshold", 0.5)? as f32)?
        }
        "quantize" => {
            let (scale, zp) = static_qparams(op, inputs)?;
            let (qmin, qmax) = qrange(attrs)?;
            quantize(inputs[0], scale, zp, qmin, qmax)?
        }
        "dequantize" => {
            let (scale, zp) = static_qparams(op, inputs)?;
            dequantize(inputs[0], scale, zp)?
        }
        "layout_transform" => {
            want(1)?;
            let src = ops::layout_attr(attrs, "src_layout")?;
            let dst = ops::layout_attr(attrs, "dst_layout")?;
            layout_transform(inputs[0], src, dst)?
        }
        "host_only_postproc" => {
            want(1)?;
            inputs[0].clone()
        }
        other => return Err(Error::UnknownOp(other.to_string())),
    };
    Ok(vec![out])
}

pub fn qrange(attrs: &Attrs) -> Result<(i32, i32)> {
    Ok((
        ops::int_attr(attrs, "qmin", -128)? as i32,
        ops::int_attr(attrs, "qmax", 127)? as i32,
    ))
}

fn static_qparams(op: &str, inputs: &[&Tensor]) -> Result<(f32, i32)> {
    if inputs.len() != 3 {
        return Err(Error::kernel(
            op,
            "run-time calibrated (de)quantization needs a fixed-point engine",
        ));
    }
    let scale = inputs[1]
        .as_f32()
        .and_then(|s| s.first().copied())
        .ok_or_else(|| Error::kernel(op, "scale must be an f32 scalar"))?;
    let zp = inputs[2]
        .as_i8()
        .and_then(|s| s.first().copied())
        .ok_or_else(|| Error::kernel(op, "zero point must be an i8 scalar"))?;
    Ok((scale, zp as i32))
}

pub fn conv2d(data: &Tensor, weight: &Tensor, p: &Conv2dParams) -> Result<Tensor> {
    let x = f32_input("conv2d", data)?;
    let w = f32_input("conv2d", weight)?;
    let ws = weight.shape();
    if ws.len() != 4 {
        return Err(Error::kernel("conv2d", "weight must be 4-D"));
    }
    let g = Geometry::new(data.shape(), p.layout, [ws[2], ws[3]], p.strides, p.padding)
        .ok_or_else(|| Error::kernel("conv2d", "bad geometry"))?;
    if ws[1] != g.c {
        return Err(Error::kernel("conv2d", "channel mismatch"));
    }
    let cout = ws[0];
    let mut out = vec![0f32; g.n * cout * g.oh * g.ow];
    for n in 0..g.n {
        for co in 0..cout {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut acc = 0f32;
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
                                let wv = w[((co * g.c + ci) * g.kh + ky) * g.kw + kx];
                                acc += x[g.in_offset(n, ci, iy, ix)] * wv;
                            }
                        }
                    }
                    out[g.out_offset(cout, n, co, oy, ox)] = acc;
                }
            }
        }
    }
    Tensor::from_f32(g.out_shape(cout), out)
}

pub fn dense(data: &Tensor, weight: &Tensor) -> Result<Tensor> {
    let x = f32_input("dense", data)?;
    let w = f32_input("dense", weight)?;
    let (&[b, inp], &[out_f, win]) = (data.shape(), weight.shape()) else {
        return Err(Error::kernel("dense", "expected 2-D operands"));
    };
    if inp != win {
        return Err(Error::kernel("dense", "inner dimension mismatch"));
    }
    let mut out = vec![0f32; b * out_f];
    for bi in 0..b {
        for o in 0..out_f {
            let mut acc = 0f32;
            for i in 0..inp {
                acc += x[bi * inp + i] * w[o * inp + i];
            }
            out[bi * out_f + o] = acc;
        }
    }
    Tensor::from_f32(vec![b, out_f], out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::kernel("add", "operand shapes differ"));
    }
    let data = match (a.data(), b.data()) {
        (TensorData::F32(x), TensorData::F32(y)) => {
            TensorData::F32(x.iter().zip(y).map(|(p, q)| p + q).collect())
        }
        (TensorData::I32(x), TensorData::I32(y)) => {
            TensorData::I32(x.iter().zip(y).map(|(p, q)| p.wrapping_add(*q)).collect())
        }
        _ => return Err(Error::kernel("add", "unsupported dtypes")),
    };
    Tensor::new(a.shape().to_vec(), data)
}

/// `(outer, axis_len, inner)` decomposition of a shape around `axis`.
pub fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn bias_add(data: &Tensor, bias: &Tensor, axis: i64) -> Result<Tensor> {
    let x = f32_input("bias_add", data)?;
    let b = f32_input("bias_add", bias)?;
    let axis = ops::norm_axis(axis, data.shape().len())
        .ok_or_else(|| Error::kernel("bias_add", "invalid axis"))?;
    let (outer, len, inner) = split_axis(data.shape(), axis);
    if b.len() != len {
        return Err(Error::kernel("bias_add", "bias length mismatch"));
    }
    let mut out = Vec::with_capacity(x.len());
    for o in 0..outer {
        for (c, bv) in b.iter().enumerate() {
            let base = (o * len + c) * inner;
            out.extend(x[base..base + inner].iter().map(|v| v + bv));
        }
    }
    Tensor::from_f32(data.shape().to_vec(), out)
}

pub fn relu(t: &Tensor) -> Result<Tensor> {
    let data = match t.data() {
        TensorData::F32(v) => TensorData::F32(v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()),
        TensorData::I8(v) => TensorData::I8(v.iter().map(|&x| x.max(0)).collect()),
        TensorData::I32(v) => TensorData::I32(v.iter().map(|&x| x.max(0)).collect()),
        TensorData::Bool(_) => return Err(Error::kernel("relu", "bool input")),
    };
    Tensor::new(t.shape().to_vec(), data)
}

fn pool_geometry(op: &str, t: &Tensor, p: &Pool2dParams) -> Result<Geometry> {
    Geometry::new(t.shape(), p.layout, p.pool_size, p.strides, p.padding)
        .ok_or_else(|| Error::kernel(op, "bad geometry"))
}

/// Apply a window reduction; `reduce` sees the in-bounds window values.
fn pool_generic<T: Copy + Default>(
    g: &Geometry,
    x: &[T],
    mut reduce: impl FnMut(&mut dyn Iterator<Item = T>) -> T,
) -> Vec<T> {
    let mut out = vec![T::default(); g.n * g.c * g.oh * g.ow];
    for n in 0..g.n {
        for c in 0..g.c {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut it = (0..g.kh).flat_map(|ky| {
                        (0..g.kw).filter_map(move |kx| {
                            let iy = Geometry::src(oy, ky, g.stride[0], g.pad[0], g.h)?;
                            let ix = Geometry::src(ox, kx, g.stride[1], g.pad[1], g.w)?;
                            Some(x[g.in_offset(n, c, iy, ix)])
                        })
                    });
                    out[g.out_offset(g.c, n, c, oy, ox)] = reduce(&mut it);
                }
            }
        }
    }
    out
}

pub fn max_pool2d(t: &Tensor, p: &Pool2dParams) -> Result<Tensor> {
    let g = pool_geometry("max_pool2d", t, p)?;
    let data = match t.data() {
        TensorData::F32(x) => TensorData::F32(pool_generic(&g, x, |it| {
            it.fold(f32::NEG_INFINITY, |m, v| if v > m { v } else { m })
        })),
        TensorData::I8(x) => TensorData::I8(pool_generic(&g, x, |it| it.fold(i8::MIN, i8::max))),
        TensorData::I32(x) => TensorData::I32(pool_generic(&g, x, |it| it.fold(i32::MIN, i32::max))),
        TensorData::Bool(_) => return Err(Error::kernel("max_pool2d", "bool input")),
    };
    Tensor::new(g.out_shape(g.c), data)
}

pub fn avg_pool2d(t: &Tensor, p: &Pool2dParams) -> Result<Tensor> {
    let g = pool_geometry("avg_pool2d", t, p)?;
    let x = f32_input("avg_pool2d", t)?;
    let out = pool_generic(&g, x, |it| {
        let (sum, count) = it.fold((0f32, 0u32), |(s, c), v| (s + v, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f32
        }
    });
    Tensor::from_f32(g.out_shape(g.c), out)
}

fn permute_vec<T: Copy>(src: &[T], shape: &[usize], axes: &[usize]) -> Vec<T> {
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; rank];
    for _ in 0..src.len() {
        let off: usize = idx.iter().zip(axes).map(|(i, &a)| i * in_strides[a]).sum();
        out.push(src[off]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

pub fn transpose(t: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let shape = t.shape();
    if axes.len() != shape.len() {
        return Err(Error::kernel("transpose", "axes rank mismatch"));
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let data = match t.data() {
        TensorData::F32(v) => TensorData::F32(permute_vec(v, shape, axes)),
        TensorData::I8(v) => TensorData::I8(permute_vec(v, shape, axes)),
        TensorData::I32(v) => TensorData::I32(permute_vec(v, shape, axes)),
        TensorData::Bool(v) => TensorData::Bool(permute_vec(v, shape, axes)),
    };
    Tensor::new(out_shape, data)
}

pub fn layout_transform(t: &Tensor, src: Layout, dst: Layout) -> Result<Tensor> {
    if t.shape().len() != 4 {
        return Err(Error::kernel("layout_transform", "expected a 4-D tensor"));
    }
    transpose(t, &src.perm_to(dst))
}

pub fn concat(inputs: &[&Tensor], axis: i64) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::kernel("concat", "no inputs"))?;
    let axis = ops::norm_axis(axis, first.shape().len())
        .ok_or_else(|| Error::kernel("concat", "invalid axis"))?;
    let mut shape = first.shape().to_vec();
    shape[axis] = inputs.iter().map(|t| t.shape()[axis]).sum();
    let (outer, _, inner) = split_axis(first.shape(), axis);

    macro_rules! gather {
        ($variant:ident) => {{
            let mut out = Vec::new();
            for o in 0..outer {
                for t in inputs {
                    let TensorData::$variant(v) = t.data() else {
                        return Err(Error::kernel("concat", "mixed dtypes"));
                    };
                    let chunk = t.shape()[axis] * inner;
                    out.extend_from_slice(&v[o * chunk..(o + 1) * chunk]);
                }
            }
            TensorData::$variant(out)
        }};
    }
    let data = match first.dtype() {
        DataType::F32 => gather!(F32),
        DataType::I8 => gather!(I8),
        DataType::I32 => gather!(I32),
        DataType::Bool => gather!(Bool),
    };
    Tensor::new(shape, data)
}

pub fn softmax(t: &Tensor, axis: i64) -> Result<Tensor> {
    let x = f32_input("softmax", t)?;
    let axis = ops::norm_axis(axis, t.shape().len())
        .ok_or_else(|| Error::kernel("softmax", "invalid axis"))?;
    let (outer, len, inner) = split_axis(t.shape(), axis);
    let mut out = vec![0f32; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| x[at(k)]).fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0f32;
            for k in 0..len {
                let e = (x[at(k)] - max).exp();
                out[at(k)] = e;
                sum += e;
            }
            for k in 0..len {
                out[at(k)] /= sum;
            }
        }
    }
    Tensor::from_f32(t.shape().to_vec(), out)
}

/// A candidate box in center form plus its score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub cx: f32,
    pub cy: f32,
    pub w: f32,
    pub h: f32,
    pub score: f32,
}

impl Detection {
    fn corners(&self) -> (f32, f32, f32, f32) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f32 {
        self.w * self.h
    }

    pub fn iou(&self, other: &Detection) -> f32 {
        let (ax1, ay1, ax2, ay2) = self.corners();
        let (bx1, by1, bx2, by2) = other.corners();
        let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
        let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Greedy non-maximum suppression: sort proposals by descending score, then
/// keep each box whose IoU with every already kept box is at most
/// `iou_threshold`. Returns kept indices in score order.
pub fn nms_indices(dets: &[Detection], iou_threshold: f32) -> Result<Vec<usize>> {
    for (i, d) in dets.iter().enumerate() {
        let finite = [d.cx, d.cy, d.w, d.h, d.score].iter().all(|v| v.is_finite());
        if !finite || d.w < 0.0 || d.h < 0.0 {
            return Err(Error::kernel("nms", format!("malformed box at row {i}")));
        }
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| dets[k].iou(&dets[i]) <= iou_threshold) {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// NMS over an `(N, 5)` tensor of `[cx, cy, w, h, score]` rows. Kept rows
/// come first in descending score order; remaining rows are zero.
pub fn nms(t: &Tensor, iou_threshold: f32) -> Result<Tensor> {
    let x = f32_input("nms", t)?;
    if t.shape().len() != 2 || t.shape()[1] != 5 {
        return Err(Error::kernel("nms", "expected (N,5) detections"));
    }
    let dets: Vec<Detection> = x
        .chunks_exact(5)
        .map(|r| Detection {
            cx: r[0],
            cy: r[1],
            w: r[2],
            h: r[3],
            score: r[4],
        })
        .collect();
    let kept = nms_indices(&dets, iou_threshold)?;
    let mut out = vec![0f32; x.len()];
    for (row, &k) in kept.iter().enumerate() {
        out[row * 5..row * 5 + 5].copy_from_slice(&x[k * 5..k * 5 + 5]);
    }
    Tensor::from_f32(t.shape().to_vec(), out)
}

/// Affine quantization of one value: `clamp(round_even(x / s) + z)`.
#[inline]
pub fn quantize_value(x: f32, scale: f32, zp: i32, qmin: i32, qmax: i32) -> i32 {
    let r = (x / scale).round_ties_even();
    let q = if r.is_nan() { 0.0 } else { r.clamp(-1.0e9, 1.0e9) };
    (q as i32 + zp).clamp(qmin, qmax)
}

#[inline]
pub fn dequantize_value(q: i32, scale: f32, zp: i32) -> f32 {
    scale * (q - zp) as f32
}

pub fn quantize(t: &Tensor, scale: f32, zp: i32, qmin: i32, qmax: i32) -> Result<Tensor> {
    let x = f32_input("quantize", t)?;
    if !(scale > 0.0) {
        return Err(Error::kernel("quantize", "scale must be positive"));
    }
    let q = x
        .iter()
        .map(|&v| quantize_value(v, scale, zp, qmin, qmax) as i8)
        .collect();
    Tensor::from_i8(t.shape().to_vec(), q)
}

pub fn dequantize(t: &Tensor, scale: f32, zp: i32) -> Result<Tensor> {
    let q = t.as_i8().ok_or_else(|| {
        Error::kernel(
            "dequantize",
            "host dequantize takes i8; accumulators need a fixed-point engine",
        )
    })?;
    let out = q.iter().map(|&v| dequantize_value(v as i32, scale, zp)).collect();
    Tensor::from_f32(t.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f32]) -> Tensor {
        Tensor::from_f32(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn conv_layouts_agree_bitwise() {
        let data: Vec<f32> = (0..2 * 3 * 5 * 4).map(|i| ((i * 37 % 11) as f32 - 5.0) * 0.37).collect();
        let w: Vec<f32> = (0..4 * 3 * 3 * 3).map(|i| ((i * 13 % 7) as f32 - 3.0) * 0.21).collect();
        let x = t(&[2, 3, 5, 4], &data);
        let wt = t(&[4, 3, 3, 3], &w);
        let p = Conv2dParams {
            strides: [1, 2],
            padding: [1, 1],
            layout: Layout::Nchw,
        };
        let nchw = conv2d(&x, &wt, &p).unwrap();
        let x_nhwc = layout_transform(&x, Layout::Nchw, Layout::Nhwc).unwrap();
        let nhwc = conv2d(&x_nhwc, &wt, &Conv2dParams { layout: Layout::Nhwc, ..p }).unwrap();
        let back = layout_transform(&nhwc, Layout::Nhwc, Layout::Nchw).unwrap();
        assert!(nchw.bitwise_eq(&back));
    }

    #[test]
    fn conv_matches_naive_sum() {
        // 1x1x3x3 input, 1x1x2x2 kernel, no padding.
        let x = t(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let w = t(&[1, 1, 2, 2], &[1., 0., 0., -1.]);
        let p = Conv2dParams {
            strides: [1, 1],
            padding: [0, 0],
            layout: Layout::Nchw,
        };
        let y = conv2d(&x, &w, &p).unwrap();
        assert_eq!(y.as_f32().unwrap(), &[-4., -4., -4., -4.]);
    }

    #[test]
    fn dense_small() {
        let x = t(&[1, 2], &[1., 2.]);
        let w = t(&[3, 2], &[1., 0., 0., 1., 1., 1.]);
        assert_eq!(dense(&x, &w).unwrap().as_f32().unwrap(), &[1., 2., 3.]);
    }

    #[test]
    fn bias_add_channel_axis() {
        let x = t(&[1, 2, 1, 2], &[0., 0., 0., 0.]);
        let b = t(&[2], &[1., 2.]);
        let y = bias_add(&x, &b, 1).unwrap();
        assert_eq!(y.as_f32().unwrap(), &[1., 1., 2., 2.]);
    }

    #[test]
    fn relu_clamps() {
        let y = relu(&t(&[2], &[-1., 2.])).unwrap();
        assert_eq!(y.as_f32().unwrap(), &[0., 2.]);
    }

    #[test]
    fn pools() {
        let x = t(&[1, 1, 2, 2], &[1., 2., 3., 4.]);
        let p = Pool2dParams {
            pool_size: [2, 2],
            strides: [2, 2],
            padding: [0, 0],
            layout: Layout::Nchw,
        };
        assert_eq!(max_pool2d(&x, &p).unwrap().as_f32().unwrap(), &[4.]);
        assert_eq!(avg_pool2d(&x, &p).unwrap().as_f32().unwrap(), &[2.5]);
    }

    #[test]
    fn transpose_2d() {
        let x = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let y = transpose(&x, &[1, 0]).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.as_f32().unwrap(), &[1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn concat_axis1() {
        let a = t(&[2, 1], &[1., 2.]);
        let b = t(&[2, 2], &[3., 4., 5., 6.]);
        let y = concat(&[&a, &b], 1).unwrap();
        assert_eq!(y.as_f32().unwrap(), &[1., 3., 4., 2., 5., 6.]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let y = softmax(&t(&[1, 3], &[1., 2., 3.]), -1).unwrap();
        let s: f32 = y.as_f32().unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nms_rejects_negative_extent() {
        let x = t(&[1, 5], &[0., 0., -1., 1., 0.5]);
        assert!(matches!(nms(&x, 0.5), Err(Error::Kernel { .. })));
    }

    #[test]
    fn nms_suppresses_overlap() {
        let x = t(
            &[3, 5],
            &[
                0., 0., 2., 2., 0.9, //
                0.1, 0., 2., 2., 0.95, //
                5., 5., 1., 1., 0.3,
            ],
        );
        let y = nms(&x, 0.5).unwrap();
        let v = y.as_f32().unwrap();
        assert_eq!(&v[0..5], &[0.1, 0., 2., 2., 0.95]);
        assert_eq!(&v[5..10], &[5., 5., 1., 1., 0.3]);
        assert_eq!(&v[10..15], &[0.; 5]);
    }

    #[test]
    fn quantize_dequantize_values() {
        assert_eq!(quantize_value(1.0, 0.5, 0, -128, 127), 2);
        assert_eq!(dequantize_value(2, 0.5, 0), 1.0);
        // ties to even
        assert_eq!(quantize_value(0.25, 0.5, 0, -128, 127), 0);
        assert_eq!(quantize_value(0.75, 0.5, 0, -128, 127), 2);
        // saturation
        assert_eq!(quantize_value(1000.0, 0.5, 0, -128, 127), 127);
    }
}
