//! Stochastic positive-view augmentation and random patch sampling.
//!
//! All operations act on single images laid out `[C, H, W]` in `[-1, 1]`
//! and are driven by an explicit RNG, so the whole pipeline is
//! bit-reproducible given equal seeds.

use crate::autograd::kernels;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Tensor;
use ndarray::IxDyn;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Smallest crop side ever produced; prevents degenerate 1-pixel crops.
pub const MIN_CROP_PX: usize = 8;

/// Knobs for the positive-view transformation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationPolicy {
    /// Crop side as a fraction of the image side, sampled uniformly.
    pub crop_scale_min: f64,
    pub crop_scale_max: f64,
    pub hflip_prob: f64,
    pub use_color: bool,
    pub use_affine: bool,
    pub rotation_max_deg: f64,
    pub shear_max_deg: f64,
    pub shift_max_frac: f64,
    /// Multiplier on the (0.4, 0.4, 0.4, 0.1) jitter baseline.
    pub color_jitter_strength: f64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            crop_scale_min: 0.125,
            crop_scale_max: 1.0,
            hflip_prob: 0.5,
            use_color: true,
            use_affine: true,
            rotation_max_deg: 15.0,
            shear_max_deg: 10.0,
            shift_max_frac: 0.1,
            color_jitter_strength: 1.0,
        }
    }
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.crop_scale_min > 0.0
            && self.crop_scale_min <= self.crop_scale_max
            && self.crop_scale_max <= 1.0)
        {
            return Err(Error::Config(format!(
                "crop scale range ({}, {}) must satisfy 0 < min <= max <= 1",
                self.crop_scale_min, self.crop_scale_max
            )));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config(format!(
                "hflip_prob {} must lie in [0, 1]",
                self.hflip_prob
            )));
        }
        for (name, v) in [
            ("rotation_max_deg", self.rotation_max_deg),
            ("shear_max_deg", self.shear_max_deg),
            ("shift_max_frac", self.shift_max_frac),
            ("color_jitter_strength", self.color_jitter_strength),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Crop-only variant used for the query view.
    pub fn crop_only(&self) -> AugmentationPolicy {
        AugmentationPolicy {
            hflip_prob: 0.0,
            use_color: false,
            use_affine: false,
            ..self.clone()
        }
    }
}

/// How many patches to sample and over which side-length range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchSpec {
    pub count: usize,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec { count: 4, scale_min: 0.125, scale_max: 1.0 }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("patch count must be at least 1".into()));
        }
        if !(self.scale_min > 0.0
            && self.scale_min <= self.scale_max
            && self.scale_max <= 1.0)
        {
            return Err(Error::Config(format!(
                "patch scale range ({}, {}) must satisfy 0 < min <= max <= 1",
                self.scale_min, self.scale_max
            )));
        }
        Ok(())
    }
}

/// A square crop window: (row offset, column offset, side length).
pub type CropBox = (usize, usize, usize);

fn chw(image: &Tensor<impl Scalar>) -> (usize, usize, usize) {
    let sh = image.shape();
    assert_eq!(sh.len(), 3, "augmentation expects a [C, H, W] image, got {sh:?}");
    (sh[0], sh[1], sh[2])
}

/// Sample one square crop window with side fraction uniform in
/// [scale_min, scale_max], clamped to at least [`MIN_CROP_PX`].
pub fn sample_crop_box<R: Rng>(
    h: usize,
    w: usize,
    scale_min: f64,
    scale_max: f64,
    rng: &mut R,
) -> CropBox {
    let short = h.min(w);
    let frac = rng.gen_range(scale_min..=scale_max);
    let side = ((frac * short as f64).round() as usize)
        .clamp(MIN_CROP_PX.min(short), short);
    let y = rng.gen_range(0..=h - side);
    let x = rng.gen_range(0..=w - side);
    (y, x, side)
}

/// Sample the crop windows for a patch batch without touching pixels, so
/// graph-level code can replay them on tracked tensors.
pub fn sample_patch_boxes<R: Rng>(
    h: usize,
    w: usize,
    spec: &PatchSpec,
    rng: &mut R,
) -> Result<Vec<CropBox>> {
    spec.validate()?;
    Ok((0..spec.count)
        .map(|_| sample_crop_box(h, w, spec.scale_min, spec.scale_max, rng))
        .collect())
}

fn crop_resize<S: Scalar>(image: &Tensor<S>, b: CropBox, oh: usize, ow: usize) -> Tensor<S> {
    let (c, _, _) = chw(image);
    let (y, x, side) = b;
    let cropped = kernels::slice_nd(image, &[0, y, x], &[c, side, side]);
    let batched = kernels::reshape(&cropped, &[1, c, side, side]);
    let resized = kernels::bilinear_resize(&batched, oh, ow, true);
    kernels::reshape(&resized, &[c, oh, ow])
}

/// Random resized crop back to the original resolution.
pub fn random_resized_crop<S: Scalar, R: Rng>(
    image: &Tensor<S>,
    scale_min: f64,
    scale_max: f64,
    rng: &mut R,
) -> Tensor<S> {
    let (_, h, w) = chw(image);
    let b = sample_crop_box(h, w, scale_min, scale_max, rng);
    crop_resize(image, b, h, w)
}

fn hflip<S: Scalar>(image: &Tensor<S>) -> Tensor<S> {
    let mut v = image.view();
    v.invert_axis(ndarray::Axis(2));
    v.as_standard_layout().into_owned()
}

/// Reflect an arbitrary integer coordinate into [0, n-1] (mirror padding
/// without edge repetition).
fn reflect(i: i64, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as i64 {
        m = period - m;
    }
    m as usize
}

/// Inverse-warp an image under the affine map dest = R(θ)·Sh(φ)·src + t
/// about the image center, sampling bilinearly with reflect padding.
fn affine_warp<S: Scalar>(
    image: &Tensor<S>,
    theta_deg: f64,
    shear_deg: f64,
    tx: f64,
    ty: f64,
) -> Tensor<S> {
    let (c, h, w) = chw(image);
    let th = theta_deg.to_radians();
    let sh = shear_deg.to_radians().tan();
    // Forward matrix A = R·Sh; invert analytically (det = 1 for both factors).
    let (a00, a01) = (th.cos(), th.cos() * sh - th.sin());
    let (a10, a11) = (th.sin(), th.sin() * sh + th.cos());
    let det = a00 * a11 - a01 * a10;
    let (i00, i01) = (a11 / det, -a01 / det);
    let (i10, i11) = (-a10 / det, a00 / det);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let src = image.as_slice().expect("affine input must be standard layout");
    let mut out = Tensor::<S>::zeros(IxDyn(&[c, h, w]));
    {
        let dst = out.as_slice_mut().unwrap();
        for oy in 0..h {
            let dy = oy as f64 - cy - ty;
            for ox in 0..w {
                let dx = ox as f64 - cx - tx;
                let sx = i00 * dx + i01 * dy + cx;
                let sy = i10 * dx + i11 * dy + cy;
                let x0 = sx.floor();
                let y0 = sy.floor();
                let fx = sx - x0;
                let fy = sy - y0;
                let xs = [reflect(x0 as i64, w), reflect(x0 as i64 + 1, w)];
                let ys = [reflect(y0 as i64, h), reflect(y0 as i64 + 1, h)];
                let wx = [1.0 - fx, fx];
                let wy = [1.0 - fy, fy];
                for ch in 0..c {
                    let base = ch * h * w;
                    let mut acc = 0.0;
                    for (yi, &yy) in ys.iter().enumerate() {
                        for (xi, &xx) in xs.iter().enumerate() {
                            acc += wy[yi] * wx[xi] * src[base + yy * w + xx].to_f64_();
                        }
                    }
                    dst[base + oy * w + ox] = S::from_f64(acc);
                }
            }
        }
    }
    out
}

/// Map `[-1,1]` pixels to `[0,1]` working space for color math.
fn to_unit(v: f64) -> f64 {
    ((v + 1.0) / 2.0).clamp(0.0, 1.0)
}

pub(crate) fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / d).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

pub(crate) fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Brightness/contrast/saturation/hue jitter plus random grayscale, in
/// the `[0,1]` working space, then mapped back to `[-1,1]`.
fn color_distort<S: Scalar, R: Rng>(image: &Tensor<S>, strength: f64, rng: &mut R) -> Tensor<S> {
    let (c, h, w) = chw(image);
    assert_eq!(c, 3, "color distortion expects RGB, got {c} channels");
    let (bj, cj, sj, hj) = (0.4 * strength, 0.4 * strength, 0.4 * strength, 0.1 * strength);
    let fb = rng.gen_range((1.0 - bj).max(0.0)..=1.0 + bj);
    let fc = rng.gen_range((1.0 - cj).max(0.0)..=1.0 + cj);
    let fs = rng.gen_range((1.0 - sj).max(0.0)..=1.0 + sj);
    let dh = rng.gen_range(-hj..=hj);
    let gray = rng.gen::<f64>() < 0.2;

    let src = image.as_slice().expect("color input must be standard layout");
    let n = h * w;
    let mut px: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| (to_unit(src[i].to_f64_()), to_unit(src[n + i].to_f64_()), to_unit(src[2 * n + i].to_f64_())))
        .collect();

    for p in px.iter_mut() {
        p.0 = (p.0 * fb).clamp(0.0, 1.0);
        p.1 = (p.1 * fb).clamp(0.0, 1.0);
        p.2 = (p.2 * fb).clamp(0.0, 1.0);
    }
    let mean_l = px.iter().map(|p| luma(p.0, p.1, p.2)).sum::<f64>() / n as f64;
    for p in px.iter_mut() {
        p.0 = (mean_l + fc * (p.0 - mean_l)).clamp(0.0, 1.0);
        p.1 = (mean_l + fc * (p.1 - mean_l)).clamp(0.0, 1.0);
        p.2 = (mean_l + fc * (p.2 - mean_l)).clamp(0.0, 1.0);
    }
    for p in px.iter_mut() {
        let l = luma(p.0, p.1, p.2);
        p.0 = (l + fs * (p.0 - l)).clamp(0.0, 1.0);
        p.1 = (l + fs * (p.1 - l)).clamp(0.0, 1.0);
        p.2 = (l + fs * (p.2 - l)).clamp(0.0, 1.0);
    }
    if dh != 0.0 {
        for p in px.iter_mut() {
            let (hh, ss, vv) = rgb_to_hsv(p.0, p.1, p.2);
            let (r, g, b) = hsv_to_rgb(hh + dh, ss, vv);
            *p = (r, g, b);
        }
    }
    if gray {
        for p in px.iter_mut() {
            let l = luma(p.0, p.1, p.2);
            *p = (l, l, l);
        }
    }

    let mut out = Tensor::<S>::zeros(IxDyn(&[c, h, w]));
    {
        let dst = out.as_slice_mut().unwrap();
        for (i, p) in px.iter().enumerate() {
            dst[i] = S::from_f64(p.0 * 2.0 - 1.0);
            dst[n + i] = S::from_f64(p.1 * 2.0 - 1.0);
            dst[2 * n + i] = S::from_f64(p.2 * 2.0 - 1.0);
        }
    }
    out
}

/// Produce the positive (key) view: random resized crop, then horizontal
/// flip, then affine jitter, then color distortion, clamped to `[-1,1]`.
pub fn augment<S: Scalar, R: Rng>(
    image: &Tensor<S>,
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> Tensor<S> {
    let mut out = random_resized_crop(image, policy.crop_scale_min, policy.crop_scale_max, rng);
    if rng.gen::<f64>() < policy.hflip_prob {
        out = hflip(&out);
    }
    if policy.use_affine {
        let (_, h, w) = chw(&out);
        let theta = rng.gen_range(-policy.rotation_max_deg..=policy.rotation_max_deg);
        let shear = rng.gen_range(-policy.shear_max_deg..=policy.shear_max_deg);
        let tx = rng.gen_range(-policy.shift_max_frac..=policy.shift_max_frac) * w as f64;
        let ty = rng.gen_range(-policy.shift_max_frac..=policy.shift_max_frac) * h as f64;
        out = affine_warp(&out, theta, shear, tx, ty);
    }
    if policy.use_color {
        out = color_distort(&out, policy.color_jitter_strength, rng);
    }
    let one = S::from_f64(1.0);
    out.mapv_inplace(|v| v.min(one).max(-one));
    out
}

/// Sample M square patches at random positions and sides, each resized to
/// the full input resolution.
pub fn sample_patches<S: Scalar, R: Rng>(
    image: &Tensor<S>,
    spec: &PatchSpec,
    rng: &mut R,
) -> Result<Vec<Tensor<S>>> {
    let (_, h, w) = chw(image);
    let boxes = sample_patch_boxes(h, w, spec, rng)?;
    Ok(boxes.into_iter().map(|b| crop_resize(image, b, h, w)).collect())
}
