//! Layers and blocks the three networks are assembled from.
//!
//! Parameters are graph leaves owned by the layer structs; `params_into`
//! exposes them in a stable order for the optimizer, EMA and checkpoints.
//! `frozen()` produces a constant-parameter copy of a module: forwarding
//! through it builds no gradient state for the module itself, which is how
//! the trainer freezes D during G/E updates (and runs no-grad inference).

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Tensor;
use ndarray::IxDyn;
use rand::Rng;

/// Negative slope shared by every leaky-ReLU in the toolkit.
pub const LRELU_SLOPE: f64 = 0.2;

/// Epsilon added to the per-channel standard deviation in IN/AdaIN.
pub const NORM_EPS: f64 = 1e-5;

/// Tiny constant inside sqrt() so gradients stay finite on constant inputs.
const VAR_GUARD: f64 = 1e-12;

fn he_tensor<S: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<S> {
    let std = S::from_f64((2.0 / fan_in as f64).sqrt());
    Tensor::from_shape_simple_fn(IxDyn(shape), || S::randn(rng) * std)
}

pub struct Conv2d<S: Scalar> {
    pub w: Var<S>,
    pub b: Option<Var<S>>,
    pub pad: usize,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new<R: Rng>(cin: usize, cout: usize, k: usize, pad: usize, bias: bool, rng: &mut R) -> Self {
        let w = Var::leaf(he_tensor(&[cout, cin, k, k], cin * k * k, rng));
        let b = bias.then(|| Var::leaf(Tensor::zeros(IxDyn(&[cout]))));
        Conv2d { w, b, pad }
    }

    pub fn forward(&self, x: &Var<S>) -> Var<S> {
        let y = x.conv2d(&self.w, self.pad);
        match &self.b {
            Some(b) => {
                let c = b.len();
                y.add(&b.reshape(&[c, 1, 1]))
            }
            None => y,
        }
    }

    pub fn params_into(&self, prefix: &str, out: &mut Vec<(String, Var<S>)>) {
        out.push((format!("{prefix}.w"), self.w.clone()));
        if let Some(b) = &self.b {
            out.push((format!("{prefix}.b"), b.clone()));
        }
    }

    pub fn frozen(&self) -> Self {
        Conv2d {
            w: self.w.detach(),
            b: self.b.as_ref().map(Var::detach),
            pad: self.pad,
        }
    }
}

pub struct Linear<S: Scalar> {
    /// [out, in]
    pub w: Var<S>,
    pub b: Var<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Linear {
            w: Var::leaf(he_tensor(&[fan_out, fan_in], fan_in, rng)),
            b: Var::leaf(Tensor::zeros(IxDyn(&[fan_out]))),
        }
    }

    pub fn forward(&self, x: &Var<S>) -> Var<S> {
        x.matmul(&self.w.transpose2()).add(&self.b)
    }

    pub fn params_into(&self, prefix: &str, out: &mut Vec<(String, Var<S>)>) {
        out.push((format!("{prefix}.w"), self.w.clone()));
        out.push((format!("{prefix}.b"), self.b.clone()));
    }

    pub fn frozen(&self) -> Self {
        Linear { w: self.w.detach(), b: self.b.detach() }
    }
}

/// Standardize each (sample, channel) plane to zero mean / unit variance:
/// (x − μ) / (σ + ε) with σ guarded against constant channels.
pub fn instance_standardize<S: Scalar>(x: &Var<S>) -> Var<S> {
    let mu = x.mean_axes(&[2, 3], true);
    let xc = x.sub(&mu);
    let var = xc.sqr().mean_axes(&[2, 3], true);
    let sigma = var.add_scalar(S::from_f64(VAR_GUARD)).sqrt();
    xc.div(&sigma.add_scalar(S::from_f64(NORM_EPS)))
}

/// Instance normalization with learned per-channel affine parameters.
pub struct InstanceNorm<S: Scalar> {
    pub gamma: Var<S>,
    pub beta: Var<S>,
}

impl<S: Scalar> InstanceNorm<S> {
    pub fn new(channels: usize) -> Self {
        InstanceNorm {
            gamma: Var::leaf(Tensor::ones(IxDyn(&[channels]))),
            beta: Var::leaf(Tensor::zeros(IxDyn(&[channels]))),
        }
    }

    pub fn forward(&self, x: &Var<S>) -> Var<S> {
        let c = self.gamma.len();
        instance_standardize(x)
            .mul(&self.gamma.reshape(&[c, 1, 1]))
            .add(&self.beta.reshape(&[c, 1, 1]))
    }

    pub fn params_into(&self, prefix: &str, out: &mut Vec<(String, Var<S>)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }

    pub fn frozen(&self) -> Self {
        InstanceNorm { gamma: self.gamma.detach(), beta: self.beta.detach() }
    }
}

/// Adaptive instance normalization: standardize, then apply per-sample
/// per-channel scale and bias (shape [B, C] each).
pub fn adain<S: Scalar>(x: &Var<S>, scale: &Var<S>, bias: &Var<S>) -> Var<S> {
    let (b, c) = (x.shape()[0], x.shape()[1]);
    assert_eq!(scale.shape(), &[b, c], "adain scale must be [B, C]");
    assert_eq!(bias.shape(), &[b, c], "adain bias must be [B, C]");
    instance_standardize(x)
        .mul(&scale.reshape(&[b, c, 1, 1]))
        .add(&bias.reshape(&[b, c, 1, 1]))
}

/// AdaIN with its learned style projection: style code -> (scale, bias).
/// The scale half of the projection bias starts at 1 so a freshly
/// initialized layer is close to plain standardization.
pub struct AdainLayer<S: Scalar> {
    pub fc: Linear<S>,
    channels: usize,
}

impl<S: Scalar> AdainLayer<S> {
    pub fn new<R: Rng>(style_dim: usize, channels: usize, rng: &mut R) -> Self {
        let fc = Linear::new(style_dim, 2 * channels, rng);
        let mut b0 = Tensor::<S>::zeros(IxDyn(&[2 * channels]));
        for i in 0..channels {
            b0[[i]] = S::one();
        }
        fc.b.set_value(b0);
        AdainLayer { fc, channels }
    }

    pub fn forward(&self, x: &Var<S>, style: &Var<S>) -> Var<S> {
        let b = x.shape()[0];
        let h = self.fc.forward(style);
        let scale = h.slice_nd(&[0, 0], &[b, self.channels]);
        let bias = h.slice_nd(&[0, self.channels], &[b, self.channels]);
        adain(x, &scale, &bias)
    }

    pub fn params_into(&self, prefix: &str, out: &mut Vec<(String, Var<S>)>) {
        self.fc.params_into(&format!("{prefix}.fc"), out);
    }

    pub fn frozen(&self) -> Self {
        AdainLayer { fc: self.fc.frozen(), channels: self.channels }
    }
}

/// Pre-activation residual block: [norm →] LReLU → conv3x3 → [norm →]
/// LReLU → conv3x3, summed with a (possibly 1×1-projected) skip and scaled
/// by 1/√2; average-pooled after the sum when downsampling.
pub struct ResBlock<S: Scalar> {
    pub norm1: Option<InstanceNorm<S>>,
    pub norm2: Option<InstanceNorm<S>>,
    pub conv1: Conv2d<S>,
    pub conv2: Conv2d<S>,
    pub skip: Option<Conv2d<S>>,
    pub downsample: bool,
}

impl<S: Scalar> ResBlock<S> {
    pub fn new<R: Rng>(cin: usize, cout: usize, with_norm: bool, downsample: bool, rng: &mut R) -> Self {
        ResBlock {
            norm1: with_norm.then(|| InstanceNorm::new(cin)),
            norm2: with_norm.then(|| InstanceNorm::new(cout)),
            conv1: Conv2d::new(cin, cout, 3, 1, true, rng),
            conv2: Conv2d::new(cout, cout, 3, 1, true, rng),
            skip: (cin != cout).then(|| Conv2d::new(cin, cout, 1, 0, false, rng)),
            downsample,
        }
    }

    pub fn forward(&self, x: &Var<S>) -> Var<S> {
        let slope = S::from_f64(LRELU_SLOPE);
        let mut h = x.clone();
        if let Some(n) = &self.norm1 {
            h = n.forward(&h);
        }
        h = self.conv1.forward(&h.lrelu(slope));
        if let Some(n) = &self.norm2 {
            h = n.forward(&h);
        }
        h = self.conv2.forward(&h.lrelu(slope));
        let sk = match &self.skip {
            Some(p) => p.forward(x),
            None => x.clone(),
        };
        let y = h.add(&sk).scale(S::from_f64(1.0 / std::f64::consts::SQRT_2));
        if self.downsample {
            y.avg_pool2()
        } else {
            y
        }
    }

    pub fn params_into(&self, prefix: &str, out: &mut Vec<(String, Var<S>)>) {
        if let Some(n) = &self.norm1 {
            n.params_into(&format!("{prefix}.norm1"), out);
        }
        self.conv1.params_into(&format!("{prefix}.conv1"), out);
        if let Some(n) = &self.norm2 {
            n.params_into(&format!("{prefix}.norm2"), out);
        }
        self.conv2.params_into(&format!("{prefix}.conv2"), out);
        if let Some(s) = &self.skip {
            s.params_into(&format!("{prefix}.skip"), out);
        }
    }

    pub fn frozen(&self) -> Self {
        ResBlock {
            norm1: self.norm1.as_ref().map(InstanceNorm::frozen),
            norm2: self.norm2.as_ref().map(InstanceNorm::frozen),
            conv1: self.conv1.frozen(),
            conv2: self.conv2.frozen(),
            skip: self.skip.as_ref().map(Conv2d::frozen),
            downsample: self.downsample,
        }
    }
}

/// Residual block whose normalizations are style-conditioned AdaIN layers;
/// nearest-neighbour 2× upsampling happens before both paths when enabled.
pub struct AdainResBlock<S: Scalar> {
    pub adain1: AdainLayer<S>,
    pub adain2: AdainLayer<S>,
    pub conv1: Conv2d<S>,
    pub conv2: Conv2d<S>,
    pub skip: Option<Conv2d<S>>,
    pub upsample: bool,
}

impl<S: Scalar> AdainResBlock<S> {
    pub fn new<R: Rng>(cin: usize, cout: usize, style_dim: usize, upsample: bool, rng: &mut R) -> Self {
        AdainResBlock {
            adain1: AdainLayer::new(style_dim, cin, rng),
            adain2: AdainLayer::new(style_dim, cout, rng),
            conv1: Conv2d::new(cin, cout, 3, 1, true, rng),
            conv2: Conv2d::new(cout, cout, 3, 1, true, rng),
            skip: (cin != cout).then(|| Conv2d::new(cin, cout, 1, 0, false, rng)),
            upsample,
        }
    }

    pub fn forward(&self, x: &Var<S>, style: &Var<S>) -> Var<S> {
        let slope = S::from_f64(LRELU_SLOPE);
        let x0 = if self.upsample { x.upsample_nearest2() } else { x.clone() };
        let mut h = self.adain1.forward(&x0, style);
        h = self.conv1.forward(&h.lrelu(slope));
        h = self.adain2.forward(&h, style);
        h = self.conv2.forward(&h.lrelu(slope));
        let sk = match &self.skip {
            Some(p) => p.forward(&x0),
            None => x0,
        };
        h.add(&sk).scale(S::from_f64(1.0 / std::f64::consts::SQRT_2))
    }

    pub fn params_into(&self, prefix: &str, out: &mut Vec<(String, Var<S>)>) {
        self.adain1.params_into(&format!("{prefix}.adain1"), out);
        self.conv1.params_into(&format!("{prefix}.conv1"), out);
        self.adain2.params_into(&format!("{prefix}.adain2"), out);
        self.conv2.params_into(&format!("{prefix}.conv2"), out);
        if let Some(s) = &self.skip {
            s.params_into(&format!("{prefix}.skip"), out);
        }
    }

    pub fn frozen(&self) -> Self {
        AdainResBlock {
            adain1: self.adain1.frozen(),
            adain2: self.adain2.frozen(),
            conv1: self.conv1.frozen(),
            conv2: self.conv2.frozen(),
            skip: self.skip.as_ref().map(Conv2d::frozen),
            upsample: self.upsample,
        }
    }
}

/// L2-normalize each row of a [B, D] tensor (guarded against zero rows).
pub fn normalize_rows<S: Scalar>(v: &Var<S>) -> Var<S> {
    let norm = v.sqr().sum_axes(&[1], true).add_scalar(S::from_f64(1e-24)).sqrt();
    v.div(&norm)
}

/// shadow ← decay·shadow + (1−decay)·live, elementwise over paired
/// parameter lists; the pairing is validated by name and shape.
pub fn ema_update<S: Scalar>(
    shadow: &[(String, Var<S>)],
    live: &[(String, Var<S>)],
    decay: S,
) -> Result<()> {
    if shadow.len() != live.len() {
        return Err(Error::Config(format!(
            "EMA structure mismatch: {} shadow vs {} live parameters",
            shadow.len(),
            live.len()
        )));
    }
    for ((sn, sv), (ln, lv)) in shadow.iter().zip(live.iter()) {
        if sn != ln || sv.shape() != lv.shape() {
            return Err(Error::Config(format!(
                "EMA structure mismatch at {sn} {:?} vs {ln} {:?}",
                sv.shape(),
                lv.shape()
            )));
        }
        let one_minus = S::one() - decay;
        let new = sv.value().mapv(|x| x * decay) + lv.value().mapv(|x| x * one_minus);
        sv.set_value(new);
    }
    Ok(())
}

/// Total element count across a parameter list.
pub fn param_count<S: Scalar>(params: &[(String, Var<S>)]) -> usize {
    params.iter().map(|(_, p)| p.len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::backward;
    use crate::rng::{stream, StreamTag};
    use ndarray::IxDyn;

    fn rt(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = stream(seed, StreamTag::Init, 0);
        Tensor::from_shape_simple_fn(IxDyn(shape), || f64::randn(&mut rng))
    }

    #[test]
    fn adain_identity_scale_standardizes() {
        let x = Var::constant(rt(&[2, 3, 4, 4], 1));
        let scale = Var::constant(Tensor::ones(IxDyn(&[2, 3])));
        let bias = Var::constant(Tensor::zeros(IxDyn(&[2, 3])));
        let y = adain(&x, &scale, &bias);
        let v = y.value();
        for b in 0..2 {
            for c in 0..3 {
                let plane: Vec<f64> = (0..16).map(|i| v[[b, c, i / 4, i % 4]]).collect();
                let mean: f64 = plane.iter().sum::<f64>() / 16.0;
                let var: f64 = plane.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 16.0;
                assert!(mean.abs() < 1e-10, "channel mean {mean} not ~0");
                assert!((var.sqrt() - 1.0).abs() < 1e-3, "channel std {} not ~1", var.sqrt());
            }
        }
    }

    #[test]
    fn adain_zero_scale_gives_constant_bias() {
        let x = Var::constant(rt(&[1, 2, 4, 4], 2));
        let scale = Var::constant(Tensor::zeros(IxDyn(&[1, 2])));
        let bias = Var::constant(
            Tensor::from_shape_vec(IxDyn(&[1, 2]), vec![-1.0, 5.0]).unwrap(),
        );
        let y = adain(&x, &scale, &bias);
        for c in 0..2 {
            let want = if c == 0 { -1.0 } else { 5.0 };
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(y.value()[[0, c, i, j]], want);
                }
            }
        }
    }

    #[test]
    fn adain_moments_match_requested_scale_bias() {
        let x = Var::constant(rt(&[1, 2, 4, 4], 3));
        let scale = Var::constant(
            Tensor::from_shape_vec(IxDyn(&[1, 2]), vec![2.0, 3.0]).unwrap(),
        );
        let bias = Var::constant(
            Tensor::from_shape_vec(IxDyn(&[1, 2]), vec![-1.0, 5.0]).unwrap(),
        );
        let y = adain(&x, &scale, &bias);
        let v = y.value();
        for (c, (want_std, want_mean)) in [(2.0, -1.0), (3.0, 5.0)].iter().enumerate() {
            let plane: Vec<f64> = (0..16).map(|i| v[[0, c, i / 4, i % 4]]).collect();
            let mean: f64 = plane.iter().sum::<f64>() / 16.0;
            let std = (plane.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 16.0).sqrt();
            assert!((mean - want_mean).abs() < 1e-4, "mean {mean} vs {want_mean}");
            assert!((std - want_std).abs() < 1e-4, "std {std} vs {want_std}");
        }
    }

    #[test]
    fn adain_invariant_to_instance_affine_input_changes() {
        // adain(a*x + b, s, β) == adain(x, s, β) for a > 0.
        let xt = rt(&[1, 2, 5, 5], 4);
        let scale = Var::constant(rt(&[1, 2], 5));
        let bias = Var::constant(rt(&[1, 2], 6));
        let base = adain(&Var::constant(xt.clone()), &scale, &bias).value_clone();
        for (a, b) in [(0.5, 0.3), (2.0, -1.0), (7.5, 0.0)] {
            let moved = adain(&Var::constant(xt.mapv(|v| a * v + b)), &scale, &bias).value_clone();
            let max_diff = (&base - &moved).mapv(f64::abs).iter().cloned().fold(0.0, f64::max);
            assert!(max_diff < 1e-4, "affine equivariance violated: {max_diff} at a={a}, b={b}");
        }
    }

    #[test]
    fn adain_gradients_match_finite_differences() {
        let xt = rt(&[1, 2, 3, 3], 7);
        let st = rt(&[1, 2], 8);
        let bt = rt(&[1, 2], 9);
        let f = |xt: &Tensor<f64>, st: &Tensor<f64>, bt: &Tensor<f64>| {
            let (x, s, b) = (Var::leaf(xt.clone()), Var::leaf(st.clone()), Var::leaf(bt.clone()));
            let loss = adain(&x, &s, &b).sqr().mean_all();
            (loss.scalar_value(), x, s, b, loss)
        };
        let (_, x, s, b, loss) = f(&xt, &st, &bt);
        let grads = backward(&loss);
        let h = 1e-6;
        for (name, t, var) in [("x", &xt, &x), ("scale", &st, &s), ("bias", &bt, &b)] {
            let g = grads.value_of(var).unwrap();
            for idx in 0..t.len() {
                let mut p = t.clone();
                p.as_slice_mut().unwrap()[idx] += h;
                let mut m = t.clone();
                m.as_slice_mut().unwrap()[idx] -= h;
                let (lp, lm) = match name {
                    "x" => (f(&p, &st, &bt).0, f(&m, &st, &bt).0),
                    "scale" => (f(&xt, &p, &bt).0, f(&xt, &m, &bt).0),
                    _ => (f(&xt, &st, &p).0, f(&xt, &st, &m).0),
                };
                let num = (lp - lm) / (2.0 * h);
                let ana = g.as_slice().unwrap()[idx];
                assert!(
                    (ana - num).abs() / num.abs().max(1e-3) < 1e-4,
                    "{name}[{idx}]: {ana} vs {num}"
                );
            }
        }
    }

    #[test]
    fn resblock_changes_channels_and_downsamples() {
        let mut rng = stream(0, StreamTag::Init, 0);
        let blk = ResBlock::<f64>::new(4, 8, true, true, &mut rng);
        let x = Var::constant(rt(&[2, 4, 8, 8], 10));
        let y = blk.forward(&x);
        assert_eq!(y.shape(), vec![2, 8, 4, 4]);
        let mut params = Vec::new();
        blk.params_into("blk", &mut params);
        // norm1 (2) + conv1 (2) + norm2 (2) + conv2 (2) + skip (1, no bias).
        assert_eq!(params.len(), 9);
    }

    #[test]
    fn resblock_gradient_matches_finite_differences() {
        let mut rng = stream(1, StreamTag::Init, 0);
        let blk = ResBlock::<f64>::new(3, 5, false, true, &mut rng);
        let xt = rt(&[1, 3, 4, 4], 11);
        let loss_of = |blk: &ResBlock<f64>, xt: &Tensor<f64>| {
            blk.forward(&Var::constant(xt.clone())).sqr().mean_all()
        };
        let loss = blk.forward(&Var::leaf(xt.clone())).sqr().mean_all();
        let grads = backward(&loss);
        let h = 1e-6;
        // Check conv1 weight gradient entries.
        let wt = blk.conv1.w.value_clone();
        let gw = grads.value_of(&blk.conv1.w).unwrap();
        for idx in [0usize, 7, wt.len() - 1] {
            let mut p = wt.clone();
            p.as_slice_mut().unwrap()[idx] += h;
            blk.conv1.w.set_value(p);
            let lp = loss_of(&blk, &xt).scalar_value();
            let mut m = wt.clone();
            m.as_slice_mut().unwrap()[idx] -= h;
            blk.conv1.w.set_value(m);
            let lm = loss_of(&blk, &xt).scalar_value();
            blk.conv1.w.set_value(wt.clone());
            let num = (lp - lm) / (2.0 * h);
            let ana = gw.as_slice().unwrap()[idx];
            assert!(
                (ana - num).abs() / num.abs().max(1e-3) < 1e-4,
                "conv1.w[{idx}]: {ana} vs {num}"
            );
        }
    }

    #[test]
    fn adain_resblock_upsamples() {
        let mut rng = stream(2, StreamTag::Init, 0);
        let blk = AdainResBlock::<f64>::new(6, 3, 16, true, &mut rng);
        let x = Var::constant(rt(&[2, 6, 4, 4], 12));
        let s = Var::constant(rt(&[2, 16], 13));
        let y = blk.forward(&x, &s);
        assert_eq!(y.shape(), vec![2, 3, 8, 8]);
    }

    #[test]
    fn fresh_adain_layer_is_nearly_plain_standardization() {
        let mut rng = stream(3, StreamTag::Init, 0);
        let layer = AdainLayer::<f64>::new(8, 4, &mut rng);
        let x = Var::constant(rt(&[1, 4, 6, 6], 14));
        let zero_style = Var::constant(Tensor::zeros(IxDyn(&[1, 8])));
        let y = layer.forward(&x, &zero_style);
        let base = instance_standardize(&x);
        let max_diff = (&*y.value() - &*base.value())
            .mapv(f64::abs)
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-12, "zero style should reduce to standardization");
    }

    #[test]
    fn ema_decay_zero_copies_and_one_freezes() {
        let sh = vec![("p".to_string(), Var::leaf(rt(&[3], 15)))];
        let lv = vec![("p".to_string(), Var::leaf(rt(&[3], 16)))];
        ema_update(&sh, &lv, 0.0).unwrap();
        assert_eq!(sh[0].1.value_clone(), lv[0].1.value_clone());
        let before = sh[0].1.value_clone();
        let lv2 = vec![("p".to_string(), Var::leaf(rt(&[3], 17)))];
        ema_update(&sh, &lv2, 1.0).unwrap();
        assert_eq!(sh[0].1.value_clone(), before);
    }

    #[test]
    fn ema_hundred_steps_matches_closed_form() {
        let sh = vec![("p".to_string(), Var::leaf(Tensor::zeros(IxDyn(&[2]))))];
        let lv = vec![("p".to_string(), Var::leaf(Tensor::ones(IxDyn(&[2]))))];
        for _ in 0..100 {
            ema_update(&sh, &lv, 0.999).unwrap();
        }
        let expect = 1.0 - 0.999f64.powi(100);
        for &v in sh[0].1.value().iter() {
            assert!((v - expect).abs() < 1e-10, "{v} vs {expect}");
        }
    }

    #[test]
    fn ema_rejects_structure_mismatch() {
        let sh = vec![("a".to_string(), Var::<f64>::leaf(Tensor::zeros(IxDyn(&[2]))))];
        let lv = vec![("b".to_string(), Var::<f64>::leaf(Tensor::zeros(IxDyn(&[2]))))];
        assert!(ema_update(&sh, &lv, 0.5).is_err());
        let lv2 = vec![("a".to_string(), Var::<f64>::leaf(Tensor::zeros(IxDyn(&[3]))))];
        assert!(ema_update(&sh, &lv2, 0.5).is_err());
    }

    #[test]
    fn normalize_rows_yields_unit_norm() {
        let v = Var::constant(rt(&[5, 7], 18));
        let n = normalize_rows(&v);
        for r in 0..5 {
            let norm: f64 = (0..7).map(|c| n.value()[[r, c]].powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5, "row {r} norm {norm}");
        }
    }
}
