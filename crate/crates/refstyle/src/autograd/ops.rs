//! Graph operations. Each op computes its value through the kernels and
//! registers a backward closure built from these same ops, which is what
//! makes second derivatives exact.

use super::kernels as k;
use super::Var;
use crate::scalar::Scalar;
use crate::Tensor;

impl<S: Scalar> Var<S> {
    // ---- broadcasting arithmetic ------------------------------------------

    pub fn add(&self, other: &Var<S>) -> Var<S> {
        let (sa, sb) = (self.shape(), other.shape());
        let v = {
            let (a, b) = (self.value(), other.value());
            if sa == sb {
                &*a + &*b
            } else {
                let os = k::broadcast_shape(&sa, &sb);
                k::broadcast_to(&a, &os) + k::broadcast_to(&b, &os)
            }
        };
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(move |g| vec![Some(g.sum_to(&sa)), Some(g.sum_to(&sb))]),
        )
    }

    pub fn sub(&self, other: &Var<S>) -> Var<S> {
        let (sa, sb) = (self.shape(), other.shape());
        let v = {
            let (a, b) = (self.value(), other.value());
            if sa == sb {
                &*a - &*b
            } else {
                let os = k::broadcast_shape(&sa, &sb);
                k::broadcast_to(&a, &os) - k::broadcast_to(&b, &os)
            }
        };
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(move |g| vec![Some(g.sum_to(&sa)), Some(g.sum_to(&sb).neg())]),
        )
    }

    pub fn mul(&self, other: &Var<S>) -> Var<S> {
        let (sa, sb) = (self.shape(), other.shape());
        let v = {
            let (a, b) = (self.value(), other.value());
            if sa == sb {
                &*a * &*b
            } else {
                let os = k::broadcast_shape(&sa, &sb);
                k::broadcast_to(&a, &os) * k::broadcast_to(&b, &os)
            }
        };
        let (pa, pb) = (self.clone(), other.clone());
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                vec![
                    Some(g.mul(&pb).sum_to(&sa)),
                    Some(g.mul(&pa).sum_to(&sb)),
                ]
            }),
        )
    }

    pub fn div(&self, other: &Var<S>) -> Var<S> {
        let (sa, sb) = (self.shape(), other.shape());
        let v = {
            let (a, b) = (self.value(), other.value());
            if sa == sb {
                &*a / &*b
            } else {
                let os = k::broadcast_shape(&sa, &sb);
                k::broadcast_to(&a, &os) / k::broadcast_to(&b, &os)
            }
        };
        let (pa, pb) = (self.clone(), other.clone());
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let ga = g.div(&pb).sum_to(&sa);
                let gb = g.mul(&pa).div(&pb).div(&pb).neg().sum_to(&sb);
                vec![Some(ga), Some(gb)]
            }),
        )
    }

    pub fn neg(&self) -> Var<S> {
        let v = self.value().mapv(|x| -x);
        Var::from_op(v, vec![self.clone()], Box::new(move |g| vec![Some(g.neg())]))
    }

    pub fn scale(&self, c: S) -> Var<S> {
        let v = self.value().mapv(|x| x * c);
        Var::from_op(v, vec![self.clone()], Box::new(move |g| vec![Some(g.scale(c))]))
    }

    pub fn add_scalar(&self, c: S) -> Var<S> {
        let v = self.value().mapv(|x| x + c);
        Var::from_op(v, vec![self.clone()], Box::new(move |g| vec![Some(g.clone())]))
    }

    pub fn sqr(&self) -> Var<S> {
        self.mul(self)
    }

    // ---- elementwise nonlinearities ---------------------------------------

    pub fn exp(&self) -> Var<S> {
        let v = self.value().mapv(S::exp);
        let px = self.clone();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.mul(&px.exp()))]),
        )
    }

    pub fn ln(&self) -> Var<S> {
        let v = self.value().mapv(S::ln);
        let px = self.clone();
        Var::from_op(v, vec![self.clone()], Box::new(move |g| vec![Some(g.div(&px))]))
    }

    pub fn sqrt(&self) -> Var<S> {
        let v = self.value().mapv(S::sqrt);
        let px = self.clone();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.scale(S::from_f64(0.5)).div(&px.sqrt()))]),
        )
    }

    pub fn tanh(&self) -> Var<S> {
        let v = self.value().mapv(S::tanh);
        let px = self.clone();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| {
                let t = px.tanh();
                vec![Some(g.sub(&g.mul(&t).mul(&t)))]
            }),
        )
    }

    pub fn sigmoid(&self) -> Var<S> {
        let v = k::sigmoid(&self.value());
        let px = self.clone();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| {
                let s = px.sigmoid();
                let one_minus = s.neg().add_scalar(S::one());
                vec![Some(g.mul(&s).mul(&one_minus))]
            }),
        )
    }

    pub fn softplus(&self) -> Var<S> {
        let v = k::softplus(&self.value());
        let px = self.clone();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.mul(&px.sigmoid()))]),
        )
    }

    /// Leaky ReLU. The mask is treated as locally constant, which is the
    /// exact derivative almost everywhere.
    pub fn lrelu(&self, slope: S) -> Var<S> {
        let v = k::lrelu(&self.value(), slope);
        let px = self.clone();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| {
                let mask = Var::constant(k::mask_nonneg(&px.value(), S::one(), slope));
                vec![Some(g.mul(&mask))]
            }),
        )
    }

    pub fn abs(&self) -> Var<S> {
        let v = self.value().mapv(S::abs);
        let px = self.clone();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| {
                let sign = Var::constant(k::mask_nonneg(&px.value(), S::one(), -S::one()));
                vec![Some(g.mul(&sign))]
            }),
        )
    }

    // ---- shape ops ---------------------------------------------------------

    pub fn reshape(&self, shape: &[usize]) -> Var<S> {
        let orig = self.shape();
        if orig == shape {
            return self.clone();
        }
        let v = k::reshape(&self.value(), shape);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.reshape(&orig))]),
        )
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Var<S> {
        let orig = self.shape();
        if orig == shape {
            return self.clone();
        }
        let v = k::broadcast_to(&self.value(), shape);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.sum_to(&orig))]),
        )
    }

    /// Sum-reduce to `target` (inverse direction of a broadcast).
    pub fn sum_to(&self, target: &[usize]) -> Var<S> {
        let orig = self.shape();
        if orig == target {
            return self.clone();
        }
        let v = k::sum_to(&self.value(), target);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.broadcast_to(&orig))]),
        )
    }

    pub fn sum_axes(&self, axes: &[usize], keep: bool) -> Var<S> {
        let orig = self.shape();
        let v = k::sum_axes(&self.value(), axes, keep);
        let mut kshape = orig.clone();
        for &ax in axes {
            kshape[ax] = 1;
        }
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.reshape(&kshape).broadcast_to(&orig))]),
        )
    }

    pub fn mean_axes(&self, axes: &[usize], keep: bool) -> Var<S> {
        let n: usize = axes.iter().map(|&ax| self.shape()[ax]).product();
        self.sum_axes(axes, keep).scale(S::from_f64(1.0 / n as f64))
    }

    pub fn sum_all(&self) -> Var<S> {
        let all: Vec<usize> = (0..self.shape().len()).collect();
        self.sum_axes(&all, false)
    }

    pub fn mean_all(&self) -> Var<S> {
        let n = self.len();
        self.sum_all().scale(S::from_f64(1.0 / n as f64))
    }

    pub fn swap_axes(&self, i: usize, j: usize) -> Var<S> {
        if i == j {
            return self.clone();
        }
        let v = k::swap_axes(&self.value(), i, j);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.swap_axes(i, j))]),
        )
    }

    pub fn transpose2(&self) -> Var<S> {
        self.swap_axes(0, 1)
    }

    pub fn flip_hw(&self) -> Var<S> {
        let v = k::flip_hw(&self.value());
        Var::from_op(v, vec![self.clone()], Box::new(move |g| vec![Some(g.flip_hw())]))
    }

    pub fn slice_nd(&self, starts: &[usize], lens: &[usize]) -> Var<S> {
        let orig = self.shape();
        if starts.iter().all(|&s| s == 0) && lens == orig.as_slice() {
            return self.clone();
        }
        let v = k::slice_nd(&self.value(), starts, lens);
        let starts = starts.to_vec();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.pad_embed(&starts, &orig))]),
        )
    }

    /// Zero-embed into a larger tensor at `starts`.
    pub fn pad_embed(&self, starts: &[usize], full: &[usize]) -> Var<S> {
        let lens = self.shape();
        let v = k::pad_embed(&self.value(), starts, full);
        let starts = starts.to_vec();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.slice_nd(&starts, &lens))]),
        )
    }

    // ---- linear algebra / conv --------------------------------------------

    pub fn matmul(&self, other: &Var<S>) -> Var<S> {
        let v = k::matmul2(&self.value(), &other.value());
        let (pa, pb) = (self.clone(), other.clone());
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let ga = g.matmul(&pb.transpose2());
                let gb = pa.transpose2().matmul(g);
                vec![Some(ga), Some(gb)]
            }),
        )
    }

    /// Stride-1 conv with square kernel and symmetric zero padding
    /// `pad <= k-1`. Both input and weight gradients are convolutions
    /// themselves, so the op is closed under differentiation.
    pub fn conv2d(&self, weight: &Var<S>, pad: usize) -> Var<S> {
        let ws = weight.shape();
        assert_eq!(ws.len(), 4, "conv2d weight must be 4-d");
        let kside = ws[2];
        assert_eq!(ws[2], ws[3], "conv2d expects square kernels, got {}x{}", ws[2], ws[3]);
        assert!(pad < kside || kside == 1 && pad == 0, "conv2d needs pad <= k-1 (pad {pad}, k {kside})");
        let v = k::conv2d(&self.value(), &weight.value(), pad);
        let (px, pw) = (self.clone(), weight.clone());
        Var::from_op(
            v,
            vec![self.clone(), weight.clone()],
            Box::new(move |g| {
                let gx = g.conv2d(&pw.transpose2().flip_hw(), kside - 1 - pad);
                let gw = px
                    .transpose2()
                    .conv2d(&g.transpose2(), pad)
                    .transpose2();
                vec![Some(gx), Some(gw)]
            }),
        )
    }

    pub fn avg_pool2(&self) -> Var<S> {
        let v = k::avg_pool2(&self.value());
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.upsample_nearest2().scale(S::from_f64(0.25)))]),
        )
    }

    pub fn upsample_nearest2(&self) -> Var<S> {
        let v = k::upsample_nearest2(&self.value());
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.avg_pool2().scale(S::from_f64(4.0)))]),
        )
    }

    /// Bilinear resize of the spatial dims (linear map; adjoint backward).
    pub fn bilinear_resize(&self, oh: usize, ow: usize, antialias: bool) -> Var<S> {
        let s = self.shape();
        assert_eq!(s.len(), 4, "bilinear_resize input must be 4-d");
        let (ih, iw) = (s[2], s[3]);
        if (ih, iw) == (oh, ow) {
            return self.clone();
        }
        let v = k::bilinear_resize(&self.value(), oh, ow, antialias);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.bilinear_resize_adjoint(ih, iw, antialias))]),
        )
    }

    /// Adjoint of `bilinear_resize`; exposed as an op so the resize VJP is
    /// itself differentiable.
    pub fn bilinear_resize_adjoint(&self, ih: usize, iw: usize, antialias: bool) -> Var<S> {
        let s = self.shape();
        assert_eq!(s.len(), 4, "bilinear_resize_adjoint input must be 4-d");
        let (gh, gw) = (s[2], s[3]);
        if (gh, gw) == (ih, iw) {
            return self.clone();
        }
        let v = k::bilinear_resize_adjoint(&self.value(), ih, iw, antialias);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.bilinear_resize(gh, gw, antialias))]),
        )
    }
}

/// Concatenate along axis 0. Backward slices the gradient back apart.
pub fn concat0<S: Scalar>(parts: &[Var<S>]) -> Var<S> {
    assert!(!parts.is_empty(), "concat0 of zero tensors");
    if parts.len() == 1 {
        return parts[0].clone();
    }
    let values: Vec<_> = parts.iter().map(|p| p.value_clone()).collect();
    let refs: Vec<&Tensor<S>> = values.iter().collect();
    let v = k::concat0(&refs);
    let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape()).collect();
    Var::from_op(
        v,
        parts.to_vec(),
        Box::new(move |g| {
            let mut offset = 0usize;
            shapes
                .iter()
                .map(|sh| {
                    let mut starts = vec![0usize; sh.len()];
                    starts[0] = offset;
                    offset += sh[0];
                    Some(g.slice_nd(&starts, sh))
                })
                .collect()
        }),
    )
}

/// Row-wise stable log-sum-exp over the last axis of a 2-d tensor; the max
/// shift is detached, which leaves the derivative exact.
pub fn logsumexp_rows<S: Scalar>(logits: &Var<S>) -> Var<S> {
    let s = logits.shape();
    assert_eq!(s.len(), 2, "logsumexp_rows expects [rows, cols]");
    let mx = Var::constant(k::max_axis_keep(&logits.value(), 1));
    let shifted = logits.sub(&mx);
    let lse = shifted.exp().sum_axes(&[1], true).ln().add(&mx);
    lse.reshape(&[s[0]])
}

#[cfg(test)]
mod tests {
    use super::super::{backward, Var};
    use super::*;
    use crate::Tensor;
    use ndarray::IxDyn;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randt(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-1.0..1.0))
    }

    /// Central finite-difference check of d(loss)/d(inputs[i]) for every
    /// input element; `loss` must reduce to a scalar Var.
    fn fd_check(shapes: &[&[usize]], f: impl Fn(&[Var<f64>]) -> Var<f64>, tol: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors: Vec<Tensor<f64>> = shapes.iter().map(|s| randt(s, &mut rng)).collect();
        let leaves: Vec<Var<f64>> = tensors.iter().map(|t| Var::leaf(t.clone())).collect();
        let loss = f(&leaves);
        assert_eq!(loss.len(), 1, "fd_check loss must be scalar");
        let grads = backward(&loss);
        let h = 1e-5;
        for (i, base) in tensors.iter().enumerate() {
            let analytic = grads
                .value_of(&leaves[i])
                .unwrap_or_else(|| Tensor::zeros(base.raw_dim()));
            let mut num = Tensor::<f64>::zeros(base.raw_dim());
            for idx in 0..base.len() {
                let mut plus = tensors.clone();
                plus[i].as_slice_mut().unwrap()[idx] += h;
                let lp = f(&plus.iter().map(|t| Var::leaf(t.clone())).collect::<Vec<_>>())
                    .scalar_value();
                let mut minus = tensors.clone();
                minus[i].as_slice_mut().unwrap()[idx] -= h;
                let lm = f(&minus.iter().map(|t| Var::leaf(t.clone())).collect::<Vec<_>>())
                    .scalar_value();
                num.as_slice_mut().unwrap()[idx] = (lp - lm) / (2.0 * h);
            }
            let diff = (&analytic - &num).mapv(f64::abs).sum();
            let norm = num.mapv(f64::abs).sum().max(1e-8);
            assert!(
                diff / norm < tol,
                "input {i}: rel FD error {} exceeds {tol}\nanalytic: {analytic:?}\nnumeric: {num:?}",
                diff / norm
            );
        }
    }

    #[test]
    fn fd_broadcast_arithmetic() {
        fd_check(
            &[&[2, 3], &[3], &[2, 1]],
            |v| {
                v[0].add(&v[1])
                    .mul(&v[2])
                    .sub(&v[1].mul(&v[1]))
                    .div(&v[2].add_scalar(3.0))
                    .sum_all()
            },
            1e-6,
            11,
        );
    }

    #[test]
    fn fd_elementwise_chain() {
        fd_check(
            &[&[2, 5]],
            |v| {
                let x = &v[0];
                x.scale(0.7)
                    .tanh()
                    .add(&x.sigmoid())
                    .add(&x.softplus())
                    .add(&x.mul(x).add_scalar(0.5).sqrt())
                    .add(&x.scale(0.3).exp())
                    .mean_all()
            },
            1e-6,
            12,
        );
    }

    #[test]
    fn fd_lrelu_abs_away_from_kink() {
        // Shift inputs away from zero so the FD step never crosses the kink.
        fd_check(
            &[&[3, 4]],
            |v| {
                let x = v[0].add_scalar(0.2);
                x.lrelu(0.2).sum_all().add(&x.abs().mean_all())
            },
            1e-6,
            13,
        );
    }

    #[test]
    fn fd_ln_on_positive_inputs() {
        fd_check(
            &[&[6]],
            |v| v[0].mul(&v[0]).add_scalar(1.5).ln().sum_all(),
            1e-6,
            14,
        );
    }

    #[test]
    fn fd_reductions_and_shapes() {
        fd_check(
            &[&[2, 3, 4]],
            |v| {
                let m = v[0].mean_axes(&[1], true);
                let centered = v[0].sub(&m);
                centered
                    .sqr()
                    .sum_axes(&[0, 2], false)
                    .mean_all()
                    .add(&v[0].reshape(&[4, 6]).swap_axes(0, 1).sum_all())
            },
            1e-6,
            15,
        );
    }

    #[test]
    fn fd_matmul() {
        fd_check(
            &[&[3, 4], &[4, 2]],
            |v| v[0].matmul(&v[1]).sqr().sum_all(),
            1e-6,
            16,
        );
    }

    #[test]
    fn fd_conv2d_with_padding() {
        fd_check(
            &[&[2, 3, 5, 5], &[4, 3, 3, 3]],
            |v| v[0].conv2d(&v[1], 1).sqr().mean_all(),
            1e-6,
            17,
        );
    }

    #[test]
    fn fd_conv2d_one_by_one() {
        fd_check(
            &[&[2, 3, 4, 4], &[5, 3, 1, 1]],
            |v| v[0].conv2d(&v[1], 0).mul(&v[0].conv2d(&v[1], 0)).sum_all(),
            1e-6,
            18,
        );
    }

    #[test]
    fn fd_conv2d_full_spatial_kernel() {
        // Kernel covering the whole input, as in the network heads.
        fd_check(
            &[&[2, 3, 4, 4], &[6, 3, 4, 4]],
            |v| v[0].conv2d(&v[1], 0).sqr().sum_all(),
            1e-6,
            19,
        );
    }

    #[test]
    fn fd_pool_upsample_resize() {
        fd_check(
            &[&[1, 2, 4, 4]],
            |v| {
                let a = v[0].avg_pool2().sqr().sum_all();
                let b = v[0].upsample_nearest2().sqr().mean_all();
                let c = v[0].bilinear_resize(7, 3, true).sqr().sum_all();
                let d = v[0].bilinear_resize(9, 9, false).sqr().mean_all();
                a.add(&b).add(&c).add(&d)
            },
            1e-6,
            20,
        );
    }

    #[test]
    fn fd_slice_pad_concat() {
        fd_check(
            &[&[2, 2, 4, 4], &[1, 2, 4, 4]],
            |v| {
                let crop = v[0].slice_nd(&[0, 0, 1, 1], &[2, 2, 2, 2]);
                let up = crop.bilinear_resize(4, 4, false);
                let joined = concat0(&[up, v[1].clone()]);
                joined.sqr().mean_all()
            },
            1e-6,
            21,
        );
    }

    #[test]
    fn fd_logsumexp() {
        fd_check(
            &[&[3, 5]],
            |v| logsumexp_rows(&v[0].scale(3.0)).sum_all(),
            1e-6,
            22,
        );
    }

    #[test]
    fn logsumexp_is_stable_for_large_logits() {
        let big = Var::<f64>::constant(
            Tensor::from_shape_vec(IxDyn(&[1, 3]), vec![1000.0, 999.0, 998.0]).unwrap(),
        );
        let lse = logsumexp_rows(&big);
        let expect = 1000.0 + (1.0 + (-1.0f64).exp() + (-2.0f64).exp()).ln();
        assert!((lse.scalar_value() - expect).abs() < 1e-9);
    }

    #[test]
    fn gradient_accumulates_over_reused_nodes() {
        let x = Var::<f64>::leaf(ndarray::arr1(&[2.0, -1.0]).into_dyn());
        let y = x.sqr().sum_all(); // dy/dx = 2x
        let g = backward(&y);
        let gx = g.value_of(&x).unwrap();
        assert_eq!(gx, ndarray::arr1(&[4.0, -2.0]).into_dyn());
    }

    #[test]
    fn constants_get_no_gradient() {
        let x = Var::<f64>::leaf(ndarray::arr1(&[1.0, 2.0]).into_dyn());
        let c = Var::<f64>::constant(ndarray::arr1(&[3.0, 4.0]).into_dyn());
        let y = x.mul(&c).sum_all();
        let g = backward(&y);
        assert!(g.get(&c).is_none(), "constant must not receive a gradient");
        assert_eq!(g.value_of(&x).unwrap(), ndarray::arr1(&[3.0, 4.0]).into_dyn());
    }

    #[test]
    fn detach_blocks_gradient_flow() {
        let x = Var::<f64>::leaf(ndarray::arr1(&[1.5]).into_dyn());
        let y = x.sqr().detach().mul(&x).sum_all();
        let g = backward(&y);
        // y = const(x^2) * x, so dy/dx = x^2 = 2.25, not 3x^2.
        assert!((g.value_of(&x).unwrap()[[0]] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn double_backward_matches_analytic_second_derivative() {
        // f(x) = sum(x^3); g = df/dx = 3x^2; h = sum(g^2) = 9 sum(x^4);
        // dh/dx = 36 x^3.
        let x = Var::<f64>::leaf(ndarray::arr1(&[0.5, -1.2, 2.0]).into_dyn());
        let f = x.mul(&x).mul(&x).sum_all();
        let g1 = backward(&f);
        let gx = g1.get(&x).expect("first-order grad").clone();
        let h = gx.sqr().sum_all();
        let g2 = backward(&h);
        let ggx = g2.value_of(&x).unwrap();
        for (xi, gi) in [0.5f64, -1.2, 2.0].iter().zip(ggx.iter()) {
            assert!((gi - 36.0 * xi.powi(3)).abs() < 1e-9, "{gi} vs {}", 36.0 * xi.powi(3));
        }
    }

    #[test]
    fn double_backward_through_conv_fd() {
        // r1-style quantity: p(w) = sum_x (d sum(conv(x,w)^2) / dx)^2.
        // Check dp/dw by finite differences on w.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let xt = randt(&[1, 2, 4, 4], &mut rng);
        let wt = randt(&[3, 2, 3, 3], &mut rng);

        let penalty = |wt: &Tensor<f64>| -> (f64, Option<Tensor<f64>>) {
            let x = Var::leaf(xt.clone());
            let w = Var::leaf(wt.clone());
            let y = x.conv2d(&w, 1).sqr().sum_all();
            let g1 = backward(&y);
            let gx = g1.get(&x).expect("grad wrt x").clone();
            let p = gx.sqr().sum_all();
            let g2 = backward(&p);
            (p.scalar_value(), g2.value_of(&w))
        };

        let (_, gw) = penalty(&wt);
        let gw = gw.expect("second-order grad wrt w");
        let h = 1e-5;
        for idx in 0..wt.len() {
            let mut wp = wt.clone();
            wp.as_slice_mut().unwrap()[idx] += h;
            let (pp, _) = penalty(&wp);
            let mut wm = wt.clone();
            wm.as_slice_mut().unwrap()[idx] -= h;
            let (pm, _) = penalty(&wm);
            let num = (pp - pm) / (2.0 * h);
            let ana = gw.as_slice().unwrap()[idx];
            assert!(
                (ana - num).abs() / num.abs().max(1.0) < 1e-5,
                "w[{idx}]: analytic {ana} vs numeric {num}"
            );
        }
    }
}
