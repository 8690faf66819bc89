//! Plain tensor kernels behind the graph ops.
//!
//! Everything here works on owned standard-layout `ArrayD` values and
//! returns standard-layout results; the graph layer adds bookkeeping and
//! VJPs on top. Shape errors are programming errors and panic.

use crate::scalar::Scalar;
use crate::Tensor;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis, IxDyn, Slice};

/// Force C-order memory layout; no-op when already standard. Every kernel
/// returns standard layout so raw-slice kernels can rely on it.
fn ensure_std<S: Scalar>(t: Tensor<S>) -> Tensor<S> {
    if t.is_standard_layout() {
        t
    } else {
        t.as_standard_layout().into_owned()
    }
}

/// NumPy-style broadcast shape of two shapes (panics when incompatible).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            (x, y) => panic!("cannot broadcast {a:?} with {b:?} (dims {x} vs {y})"),
        };
    }
    out
}

/// Materialize `t` broadcast to `shape`.
pub fn broadcast_to<S: Scalar>(t: &Tensor<S>, shape: &[usize]) -> Tensor<S> {
    if t.shape() == shape {
        return t.clone();
    }
    ensure_std(
        t.broadcast(IxDyn(shape))
            .unwrap_or_else(|| panic!("cannot broadcast {:?} to {:?}", t.shape(), shape))
            .to_owned(),
    )
}

/// Reduce `t` by summation until it has shape `target` (the reverse of a
/// broadcast from `target`).
pub fn sum_to<S: Scalar>(t: &Tensor<S>, target: &[usize]) -> Tensor<S> {
    let mut out = t.clone();
    while out.ndim() > target.len() {
        out = out.sum_axis(Axis(0));
    }
    for (ax, &want) in target.iter().enumerate() {
        if want == 1 && out.shape()[ax] != 1 {
            out = out.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    assert_eq!(out.shape(), target, "sum_to target incompatible with input");
    out
}

/// Sum over the given axes, optionally keeping them as length-1 dims.
pub fn sum_axes<S: Scalar>(t: &Tensor<S>, axes: &[usize], keep: bool) -> Tensor<S> {
    let mut sorted: Vec<usize> = axes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = t.clone();
    for &ax in sorted.iter().rev() {
        out = out.sum_axis(Axis(ax));
        if keep {
            out = out.insert_axis(Axis(ax));
        }
    }
    out
}

pub fn reshape<S: Scalar>(t: &Tensor<S>, shape: &[usize]) -> Tensor<S> {
    let n: usize = shape.iter().product();
    assert_eq!(t.len(), n, "reshape {:?} -> {:?} changes element count", t.shape(), shape);
    t.as_standard_layout()
        .into_owned()
        .into_shape(IxDyn(shape))
        .expect("standard-layout reshape")
}

pub fn swap_axes<S: Scalar>(t: &Tensor<S>, i: usize, j: usize) -> Tensor<S> {
    let mut perm: Vec<usize> = (0..t.ndim()).collect();
    perm.swap(i, j);
    ensure_std(t.view().permuted_axes(IxDyn(&perm)).to_owned())
}

/// Reverse the last two axes (spatial flip).
pub fn flip_hw<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let n = t.ndim();
    assert!(n >= 2, "flip_hw needs at least 2 dims");
    let mut out = t.clone();
    out.invert_axis(Axis(n - 2));
    out.invert_axis(Axis(n - 1));
    out.as_standard_layout().into_owned()
}

/// Rectangular sub-block `starts[d] .. starts[d] + lens[d]` along every dim.
pub fn slice_nd<S: Scalar>(t: &Tensor<S>, starts: &[usize], lens: &[usize]) -> Tensor<S> {
    assert_eq!(starts.len(), t.ndim());
    assert_eq!(lens.len(), t.ndim());
    for d in 0..t.ndim() {
        assert!(
            starts[d] + lens[d] <= t.shape()[d],
            "slice [{}, {}) out of bounds for dim {} of size {}",
            starts[d],
            starts[d] + lens[d],
            d,
            t.shape()[d]
        );
    }
    ensure_std(
        t.slice_each_axis(|ad| {
            let d = ad.axis.index();
            Slice::from(starts[d]..starts[d] + lens[d])
        })
        .to_owned(),
    )
}

/// Embed `t` into a zero tensor of shape `full` at offset `starts`.
pub fn pad_embed<S: Scalar>(t: &Tensor<S>, starts: &[usize], full: &[usize]) -> Tensor<S> {
    let mut out = Tensor::zeros(IxDyn(full));
    out.slice_each_axis_mut(|ad| {
        let d = ad.axis.index();
        Slice::from(starts[d]..starts[d] + t.shape()[d])
    })
    .assign(t);
    out
}

pub fn concat0<S: Scalar>(parts: &[&Tensor<S>]) -> Tensor<S> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("concat0 shape mismatch")
}

/// Per-axis max, keeping the reduced axis as length 1. Used for detached
/// log-sum-exp shifts; not differentiated.
pub fn max_axis_keep<S: Scalar>(t: &Tensor<S>, ax: usize) -> Tensor<S> {
    t.fold_axis(Axis(ax), S::neg_infinity(), |&m, &x| if x > m { x } else { m })
        .insert_axis(Axis(ax))
}

/// Elementwise select: `x >= 0 ? pos : neg`. Constant masks for the
/// piecewise-linear activations' VJPs.
pub fn mask_nonneg<S: Scalar>(t: &Tensor<S>, pos: S, neg: S) -> Tensor<S> {
    t.mapv(|x| if x >= S::zero() { pos } else { neg })
}

pub fn lrelu<S: Scalar>(t: &Tensor<S>, slope: S) -> Tensor<S> {
    t.mapv(|x| if x >= S::zero() { x } else { slope * x })
}

/// Numerically stable ln(1 + e^x).
pub fn softplus<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    t.mapv(|x| {
        if x > S::zero() {
            x + (-x).exp().ln_1p()
        } else {
            x.exp().ln_1p()
        }
    })
}

pub fn sigmoid<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    t.mapv(|x| {
        if x >= S::zero() {
            S::one() / (S::one() + (-x).exp())
        } else {
            let e = x.exp();
            e / (S::one() + e)
        }
    })
}

/// 2-d matrix product.
pub fn matmul2<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let a2 = a
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("matmul lhs must be 2-d");
    let b2 = b
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("matmul rhs must be 2-d");
    assert_eq!(a2.ncols(), b2.nrows(), "matmul inner dims: {:?} x {:?}", a.shape(), b.shape());
    let mut out = Array2::<S>::zeros((a2.nrows(), b2.ncols()));
    general_mat_mul(S::one(), &a2, &b2, S::zero(), &mut out);
    out.into_dyn()
}

fn dims4<S: Scalar>(t: &Tensor<S>, what: &str) -> (usize, usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 4, "{what} must be 4-d, got {s:?}");
    (s[0], s[1], s[2], s[3])
}

/// Stride-1 cross-correlation with symmetric zero padding.
///
/// `x`: [B, Cin, H, W], `w`: [Cout, Cin, kh, kw] -> [B, Cout, H+2p-kh+1, W+2p-kw+1].
/// Implemented as a per-sample im2col + GEMM so the scratch stays small.
pub fn conv2d<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, pad: usize) -> Tensor<S> {
    let (b, cin, h, wd) = dims4(x, "conv2d input");
    let (cout, cin2, kh, kw) = dims4(w, "conv2d weight");
    assert_eq!(cin, cin2, "conv2d channel mismatch: input {cin}, weight {cin2}");
    let (hp, wp) = (h + 2 * pad, wd + 2 * pad);
    assert!(hp + 1 > kh && wp + 1 > kw, "conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}");
    let (oh, ow) = (hp - kh + 1, wp - kw + 1);
    let p_total = oh * ow;
    let k_total = cin * kh * kw;

    let xs = x.as_slice().expect("conv2d input must be standard layout");
    let ws = w.as_slice().expect("conv2d weight must be standard layout");
    let w_flat = ArrayView2::from_shape((cout, k_total), ws).expect("weight view");

    let mut out = Tensor::<S>::zeros(IxDyn(&[b, cout, oh, ow]));
    let out_slice = out.as_slice_mut().expect("fresh output is standard layout");

    let mut padded = vec![S::zero(); cin * hp * wp];
    let mut cols = vec![S::zero(); k_total * p_total];

    for bi in 0..b {
        // Repack this sample with zero padding.
        if pad > 0 {
            padded.iter_mut().for_each(|v| *v = S::zero());
        }
        for c in 0..cin {
            for i in 0..h {
                let dst = c * hp * wp + (i + pad) * wp + pad;
                let src = ((bi * cin + c) * h + i) * wd;
                padded[dst..dst + wd].copy_from_slice(&xs[src..src + wd]);
            }
        }
        // Lower to a [k_total, p_total] patch matrix; each (c,u,v) row is a
        // sequence of contiguous row segments of the padded image.
        for c in 0..cin {
            for u in 0..kh {
                for v in 0..kw {
                    let k = (c * kh + u) * kw + v;
                    for i in 0..oh {
                        let src = c * hp * wp + (i + u) * wp + v;
                        let dst = k * p_total + i * ow;
                        cols[dst..dst + ow].copy_from_slice(&padded[src..src + ow]);
                    }
                }
            }
        }
        let cols_m = ArrayView2::from_shape((k_total, p_total), &cols[..]).expect("cols view");
        let out_m = ArrayViewMut2::from_shape(
            (cout, p_total),
            &mut out_slice[bi * cout * p_total..(bi + 1) * cout * p_total],
        )
        .expect("out view");
        let mut out_m = out_m;
        general_mat_mul(S::one(), &w_flat, &cols_m, S::zero(), &mut out_m);
    }
    out
}

/// 2x2 average pooling, stride 2. Spatial dims must be even.
pub fn avg_pool2<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (b, c, h, w) = dims4(x, "avg_pool2 input");
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even spatial dims, got {h}x{w}");
    let (oh, ow) = (h / 2, w / 2);
    let xs = x.as_slice().expect("standard layout");
    let mut out = Tensor::<S>::zeros(IxDyn(&[b, c, oh, ow]));
    let os = out.as_slice_mut().expect("standard layout");
    let quarter = S::from_f64(0.25);
    for bc in 0..b * c {
        let xin = &xs[bc * h * w..(bc + 1) * h * w];
        let xout = &mut os[bc * oh * ow..(bc + 1) * oh * ow];
        for i in 0..oh {
            let r0 = &xin[(2 * i) * w..(2 * i) * w + w];
            let r1 = &xin[(2 * i + 1) * w..(2 * i + 1) * w + w];
            for j in 0..ow {
                xout[i * ow + j] =
                    (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]) * quarter;
            }
        }
    }
    out
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample_nearest2<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (b, c, h, w) = dims4(x, "upsample input");
    let (oh, ow) = (h * 2, w * 2);
    let xs = x.as_slice().expect("standard layout");
    let mut out = Tensor::<S>::zeros(IxDyn(&[b, c, oh, ow]));
    let os = out.as_slice_mut().expect("standard layout");
    for bc in 0..b * c {
        let xin = &xs[bc * h * w..(bc + 1) * h * w];
        let xout = &mut os[bc * oh * ow..(bc + 1) * oh * ow];
        for i in 0..h {
            for j in 0..w {
                let v = xin[i * w + j];
                xout[(2 * i) * ow + 2 * j] = v;
                xout[(2 * i) * ow + 2 * j + 1] = v;
                xout[(2 * i + 1) * ow + 2 * j] = v;
                xout[(2 * i + 1) * ow + 2 * j + 1] = v;
            }
        }
    }
    out
}

/// Per-output-index interpolation taps along one axis: (first input index,
/// normalized weights). Half-pixel centers, edges clamped; with `antialias`
/// the triangle filter is widened by the scale factor when downscaling.
fn linear_taps<S: Scalar>(n_in: usize, n_out: usize, antialias: bool) -> Vec<(usize, Vec<S>)> {
    let scale = n_in as f64 / n_out as f64;
    let support = if antialias && scale > 1.0 { scale } else { 1.0 };
    (0..n_out)
        .map(|oi| {
            let center = (oi as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).ceil().max(0.0) as usize;
            let hi = ((center + support).floor() as isize).min(n_in as isize - 1).max(0) as usize;
            let lo = lo.min(hi);
            let mut ws: Vec<f64> = (lo..=hi)
                .map(|t| (1.0 - ((t as f64 - center) / support).abs()).max(0.0))
                .collect();
            let sum: f64 = ws.iter().sum();
            if sum <= 0.0 {
                // Degenerate window (can only happen on hard edge clamps):
                // fall back to the nearest input pixel.
                let nearest = center.round().clamp(0.0, (n_in - 1) as f64) as usize;
                return (nearest, vec![S::one()]);
            }
            ws.iter_mut().for_each(|w| *w /= sum);
            (lo, ws.into_iter().map(S::from_f64).collect())
        })
        .collect()
}

/// Bilinear resize of the two trailing spatial dims; linear in `x`.
/// Same-size calls return an exact copy.
pub fn bilinear_resize<S: Scalar>(x: &Tensor<S>, oh: usize, ow: usize, antialias: bool) -> Tensor<S> {
    let (b, c, h, w) = dims4(x, "resize input");
    if (h, w) == (oh, ow) {
        return x.clone();
    }
    let taps_h = linear_taps::<S>(h, oh, antialias);
    let taps_w = linear_taps::<S>(w, ow, antialias);
    let xs = x.as_slice().expect("standard layout");

    // Rows first: [B,C,H,W] -> [B,C,oh,W].
    let mut tmp = vec![S::zero(); b * c * oh * w];
    for bc in 0..b * c {
        let xin = &xs[bc * h * w..(bc + 1) * h * w];
        let xout = &mut tmp[bc * oh * w..(bc + 1) * oh * w];
        for (oi, (t0, ws)) in taps_h.iter().enumerate() {
            let dst = &mut xout[oi * w..(oi + 1) * w];
            for (dt, &wt) in ws.iter().enumerate() {
                let src = &xin[(t0 + dt) * w..(t0 + dt + 1) * w];
                for j in 0..w {
                    dst[j] = dst[j] + wt * src[j];
                }
            }
        }
    }
    // Then columns: [B,C,oh,W] -> [B,C,oh,ow].
    let mut out = Tensor::<S>::zeros(IxDyn(&[b, c, oh, ow]));
    let os = out.as_slice_mut().expect("standard layout");
    for bc in 0..b * c {
        let xin = &tmp[bc * oh * w..(bc + 1) * oh * w];
        let xout = &mut os[bc * oh * ow..(bc + 1) * oh * ow];
        for i in 0..oh {
            let row = &xin[i * w..(i + 1) * w];
            let dst = &mut xout[i * ow..(i + 1) * ow];
            for (oj, (t0, ws)) in taps_w.iter().enumerate() {
                let mut acc = S::zero();
                for (dt, &wt) in ws.iter().enumerate() {
                    acc = acc + wt * row[t0 + dt];
                }
                dst[oj] = acc;
            }
        }
    }
    out
}

/// Adjoint of [`bilinear_resize`]: scatters `g` (shaped [B,C,gh,gw]) back to
/// spatial size (ih, iw) with the transposed weights of the resize
/// (ih, iw) -> (gh, gw).
pub fn bilinear_resize_adjoint<S: Scalar>(
    g: &Tensor<S>,
    ih: usize,
    iw: usize,
    antialias: bool,
) -> Tensor<S> {
    let (b, c, gh, gw) = dims4(g, "resize adjoint input");
    if (gh, gw) == (ih, iw) {
        return g.clone();
    }
    let taps_h = linear_taps::<S>(ih, gh, antialias);
    let taps_w = linear_taps::<S>(iw, gw, antialias);
    let gs = g.as_slice().expect("standard layout");

    // Transpose of the column pass: [B,C,gh,gw] -> [B,C,gh,iw].
    let mut tmp = vec![S::zero(); b * c * gh * iw];
    for bc in 0..b * c {
        let gin = &gs[bc * gh * gw..(bc + 1) * gh * gw];
        let gout = &mut tmp[bc * gh * iw..(bc + 1) * gh * iw];
        for i in 0..gh {
            let row = &gin[i * gw..(i + 1) * gw];
            let dst = &mut gout[i * iw..(i + 1) * iw];
            for (oj, (t0, ws)) in taps_w.iter().enumerate() {
                let v = row[oj];
                for (dt, &wt) in ws.iter().enumerate() {
                    dst[t0 + dt] = dst[t0 + dt] + wt * v;
                }
            }
        }
    }
    // Transpose of the row pass: [B,C,gh,iw] -> [B,C,ih,iw].
    let mut out = Tensor::<S>::zeros(IxDyn(&[b, c, ih, iw]));
    let os = out.as_slice_mut().expect("standard layout");
    for bc in 0..b * c {
        let gin = &tmp[bc * gh * iw..(bc + 1) * gh * iw];
        let gout = &mut os[bc * ih * iw..(bc + 1) * ih * iw];
        for (oi, (t0, ws)) in taps_h.iter().enumerate() {
            let src = &gin[oi * iw..(oi + 1) * iw];
            for (dt, &wt) in ws.iter().enumerate() {
                let dst = &mut gout[(t0 + dt) * iw..(t0 + dt + 1) * iw];
                for j in 0..iw {
                    dst[j] = dst[j] + wt * src[j];
                }
            }
        }
    }
    out
}
