//! Contrastive machinery: the (N+1)-way InfoNCE loss, the FIFO negative
//! dictionary, the momentum key encoder, and patch-mean style
//! representations.

use crate::augmentation::{augment, sample_patch_boxes, AugmentationPolicy, CropBox, PatchSpec};
use crate::autograd::ops::{concat0, logsumexp_rows};
use crate::autograd::{kernels, Var};
use crate::error::{Error, Result};
use crate::networks::Discriminator;
use crate::nn::{ema_update, normalize_rows};
use crate::scalar::Scalar;
use crate::Tensor;
use ndarray::IxDyn;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How far a row norm may drift from 1 before inputs are rejected.
pub const NORM_TOL: f64 = 1e-3;
/// Below this mean-vector norm, patch aggregation falls back to the
/// full-image representation.
pub const DEGENERATE_NORM: f64 = 1e-6;

/// Temperature, dictionary size, key-encoder momentum, and patch layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub queue_capacity: usize,
    pub key_momentum: f64,
    pub patch_spec: PatchSpec,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.07,
            queue_capacity: 2048,
            key_momentum: 0.999,
            patch_spec: PatchSpec::default(),
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.queue_capacity == 0 {
            return Err(Error::Config("queue_capacity must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.key_momentum) {
            return Err(Error::Config(format!(
                "key_momentum {} must lie in [0, 1]",
                self.key_momentum
            )));
        }
        self.patch_spec.validate()
    }
}

fn check_unit_rows<S: Scalar>(m: &Tensor<S>, what: &str) -> Result<()> {
    let sh = m.shape();
    assert_eq!(sh.len(), 2, "{what} must be a [rows, dim] matrix, got {sh:?}");
    for (i, row) in m.outer_iter().enumerate() {
        let norm = row.iter().map(|v| v.to_f64_().powi(2)).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Config(format!(
                "{what} row {i} has norm {norm:.6}, expected unit length"
            )));
        }
    }
    Ok(())
}

/// Ring buffer of past keys serving as negatives. Always structurally
/// full: cold slots hold random unit vectors until real keys displace
/// them, and [`NegativeDictionary::warmed`] reports when that has
/// happened once.
#[derive(Debug, Clone)]
pub struct NegativeDictionary<S: Scalar> {
    entries: Tensor<S>,
    cursor: usize,
    total_enqueued: u64,
}

impl<S: Scalar> NegativeDictionary<S> {
    /// Fresh dictionary seeded with random unit vectors.
    pub fn new_random<R: Rng>(capacity: usize, dim: usize, rng: &mut R) -> Self {
        assert!(capacity > 0 && dim > 0, "dictionary needs positive capacity and dim");
        let mut entries = Tensor::from_shape_simple_fn(IxDyn(&[capacity, dim]), || S::randn(rng));
        for mut row in entries.outer_iter_mut() {
            let norm = row.iter().map(|v| v.to_f64_().powi(2)).sum::<f64>().sqrt().max(1e-12);
            let inv = S::from_f64(1.0 / norm);
            row.mapv_inplace(|v| v * inv);
        }
        NegativeDictionary { entries, cursor: 0, total_enqueued: 0 }
    }

    /// Rebuild from checkpointed state.
    pub fn from_parts(entries: Tensor<S>, cursor: usize, total_enqueued: u64) -> Result<Self> {
        if entries.ndim() != 2 {
            return Err(Error::Checkpoint(format!(
                "dictionary entries must be 2-d, got {:?}",
                entries.shape()
            )));
        }
        if cursor >= entries.shape()[0] {
            return Err(Error::Checkpoint(format!(
                "dictionary cursor {cursor} out of range for capacity {}",
                entries.shape()[0]
            )));
        }
        check_unit_rows(&entries, "dictionary entry").map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(NegativeDictionary { entries, cursor, total_enqueued })
    }

    pub fn capacity(&self) -> usize {
        self.entries.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.entries.shape()[1]
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn total_enqueued(&self) -> u64 {
        self.total_enqueued
    }

    /// True once every cold-start slot has been overwritten by a real key.
    pub fn warmed(&self) -> bool {
        self.total_enqueued >= self.capacity() as u64
    }

    /// Raw entry matrix, [capacity, dim], physical (ring) order.
    pub fn entries(&self) -> &Tensor<S> {
        &self.entries
    }

    /// Entries as an untracked graph constant for use as negatives.
    pub fn negatives(&self) -> Var<S> {
        Var::constant(self.entries.clone())
    }

    /// Entries in insertion order, oldest first.
    pub fn snapshot_ordered(&self) -> Tensor<S> {
        let cap = self.capacity();
        let dim = self.dim();
        let mut out = Tensor::zeros(IxDyn(&[cap, dim]));
        for i in 0..cap {
            let src = (self.cursor + i) % cap;
            out.index_axis_mut(ndarray::Axis(0), i)
                .assign(&self.entries.index_axis(ndarray::Axis(0), src));
        }
        out
    }

    /// Append `keys` ([K, dim]) at the cursor, overwriting the oldest
    /// entries; the cursor advances modulo capacity.
    pub fn enqueue(&mut self, keys: &Tensor<S>) -> Result<()> {
        check_unit_rows(keys, "enqueued key")?;
        if keys.shape()[1] != self.dim() {
            return Err(Error::Config(format!(
                "key dim {} does not match dictionary dim {}",
                keys.shape()[1],
                self.dim()
            )));
        }
        let cap = self.capacity();
        for row in keys.outer_iter() {
            self.entries.index_axis_mut(ndarray::Axis(0), self.cursor).assign(&row);
            self.cursor = (self.cursor + 1) % cap;
            self.total_enqueued += 1;
        }
        Ok(())
    }
}

/// Momentum copy of the discriminator's trunk + contrastive branch that
/// produces gradient-free keys.
pub struct KeyEncoder<S: Scalar> {
    net: Discriminator<S>,
}

impl<S: Scalar> KeyEncoder<S> {
    /// Start as an exact copy of the live discriminator.
    pub fn new(live: &Discriminator<S>) -> Self {
        KeyEncoder { net: live.frozen() }
    }

    /// θ_k ← m·θ_k + (1−m)·θ_live over the trunk + contrastive branch.
    /// Momentum 0 makes the key encoder track the live network exactly.
    pub fn update(&mut self, live: &Discriminator<S>, momentum: f64) -> Result<()> {
        ema_update(&self.net.params_ct(), &live.params_ct(), S::from_f64(momentum))
    }

    /// Unit-norm keys, [B, rep_dim]; untracked by construction.
    pub fn rep(&self, x: &Var<S>) -> Var<S> {
        let r = self.net.rep(x);
        debug_assert!(!r.tracked(), "key encoder outputs must carry no graph");
        r
    }

    /// Named state for checkpointing (trunk + contrastive branch only).
    pub fn params(&self) -> Vec<(String, Var<S>)> {
        self.net.params_ct()
    }
}

/// Mean InfoNCE over a batch of query/key rows against shared negatives:
/// −log( e^{q·k/τ} / (e^{q·k/τ} + Σ_i e^{q·n_i/τ}) ), stable under large
/// logits via log-sum-exp.
pub fn info_nce_batch<S: Scalar>(
    query: &Var<S>,
    key: &Var<S>,
    negatives: &Var<S>,
    temperature: f64,
) -> Result<Var<S>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let (qs, ks, ns) = (query.shape(), key.shape(), negatives.shape());
    if ns.is_empty() || ns[0] == 0 {
        return Err(Error::Config("negatives must be non-empty".into()));
    }
    assert_eq!(qs, ks, "query and key batches must agree, got {qs:?} vs {ks:?}");
    assert_eq!(qs[1], ns[1], "representation dims must agree");
    check_unit_rows(&query.value(), "query")?;
    check_unit_rows(&key.value(), "key")?;
    check_unit_rows(&negatives.value(), "negative")?;

    let b = qs[0];
    let n = ns[0];
    let inv_t = S::from_f64(1.0 / temperature);
    let pos = query.mul(key).sum_axes(&[1], true).scale(inv_t); // [B,1]
    let neg = query.matmul(&negatives.transpose2()).scale(inv_t); // [B,N]
    let logits = concat0(&[pos.transpose2(), neg.transpose2()]) // [1+N, B]
        .transpose2()
        .reshape(&[b, n + 1]);
    let lse = logsumexp_rows(&logits); // [B]
    Ok(lse.sub(&pos.reshape(&[b])).mean_all())
}

/// Scalar InfoNCE for a single query/key pair ([dim] vectors) against a
/// [N, dim] negative matrix.
pub fn info_nce<S: Scalar>(
    query: &Tensor<S>,
    key: &Tensor<S>,
    negatives: &Tensor<S>,
    temperature: f64,
) -> Result<S> {
    assert_eq!(query.ndim(), 1, "query must be a vector");
    assert_eq!(key.ndim(), 1, "key must be a vector");
    let d = query.len();
    let q = Var::constant(kernels::reshape(query, &[1, d]));
    let k = Var::constant(kernels::reshape(key, &[1, d]));
    let n = Var::constant(negatives.clone());
    Ok(info_nce_batch(&q, &k, &n, temperature)?.scalar_value())
}

fn crop_resize_var<S: Scalar>(x: &Var<S>, sample: usize, b: CropBox, oh: usize, ow: usize) -> Var<S> {
    let c = x.shape()[1];
    let (y, xc, side) = b;
    x.slice_nd(&[sample, 0, y, xc], &[1, c, side, side])
        .bilinear_resize(oh, ow, true)
}

fn boxes_cover_everything(boxes: &[Vec<CropBox>], h: usize, w: usize) -> bool {
    h == w
        && boxes
            .iter()
            .flatten()
            .all(|&(y, x, side)| y == 0 && x == 0 && side == h)
}

/// Renormalize mean rows to unit length, substituting the full-image
/// representation wherever the mean has collapsed below
/// [`DEGENERATE_NORM`].
pub fn renormalize_with_fallback<S: Scalar>(mean: &Var<S>, full: &Var<S>) -> Var<S> {
    let sh = mean.shape();
    let b = sh[0];
    let mut mask = Tensor::<S>::zeros(IxDyn(&[b, 1]));
    let mut any_degenerate = false;
    {
        let mv = mean.value();
        for i in 0..b {
            let norm = (0..sh[1]).map(|j| mv[[i, j]].to_f64_().powi(2)).sum::<f64>().sqrt();
            if norm < DEGENERATE_NORM {
                any_degenerate = true;
            } else {
                mask[[i, 0]] = S::from_f64(1.0);
            }
        }
    }
    if !any_degenerate {
        return normalize_rows(mean);
    }
    let m = Var::constant(mask);
    let inv = m.neg().add_scalar(S::from_f64(1.0));
    normalize_rows(&mean.mul(&m).add(&full.mul(&inv)))
}

/// Patch-mean representation (boxes supplied): v = renorm((1/M)·Σ
/// D_ct(patch_i)) per sample. Skips the mean/renorm when it is exactly
/// the identity so full-image configurations are bit-identical to
/// `d.rep`.
pub fn aggregate_patch_rep_with_boxes<S: Scalar>(
    x: &Var<S>,
    boxes: &[Vec<CropBox>],
    d: &Discriminator<S>,
) -> Var<S> {
    let sh = x.shape();
    let (bsz, h, w) = (sh[0], sh[2], sh[3]);
    assert_eq!(boxes.len(), bsz, "one box list per sample required");
    let m = boxes[0].len();
    assert!(m >= 1 && boxes.iter().all(|bs| bs.len() == m), "ragged patch counts");

    if boxes_cover_everything(boxes, h, w) {
        // Every patch is the whole image: the mean of identical unit
        // vectors renormalizes to itself, so use the direct path.
        return d.rep(x);
    }
    let patches: Vec<Var<S>> = boxes
        .iter()
        .enumerate()
        .flat_map(|(i, bs)| bs.iter().map(move |&b| (i, b)))
        .map(|(i, b)| crop_resize_var(x, i, b, h, w))
        .collect();
    let reps = d.rep(&concat0(&patches)); // [B·M, dim]
    if m == 1 {
        return reps; // already unit-norm; mean over one vector is identity
    }
    let dim = reps.shape()[1];
    let mean = reps.reshape(&[bsz, m, dim]).mean_axes(&[1], false);
    renormalize_with_fallback(&mean, &d.rep(x))
}

/// Patch-mean representation with freshly sampled boxes.
pub fn aggregate_patch_rep<S: Scalar, R: Rng>(
    x: &Var<S>,
    spec: &PatchSpec,
    d: &Discriminator<S>,
    rng: &mut R,
) -> Result<Var<S>> {
    let sh = x.shape();
    let boxes: Vec<Vec<CropBox>> = (0..sh[0])
        .map(|_| sample_patch_boxes(sh[2], sh[3], spec, rng))
        .collect::<Result<_>>()?;
    Ok(aggregate_patch_rep_with_boxes(x, &boxes, d))
}

fn stack_images<S: Scalar>(images: &[Tensor<S>]) -> Tensor<S> {
    let refs: Vec<Tensor<S>> = images
        .iter()
        .map(|img| {
            let sh = img.shape().to_vec();
            kernels::reshape(img, &[1, sh[0], sh[1], sh[2]])
        })
        .collect();
    let views: Vec<&Tensor<S>> = refs.iter().collect();
    kernels::concat0(&views)
}

fn per_sample<S: Scalar>(x: &Tensor<S>, i: usize) -> Tensor<S> {
    let sh = x.shape();
    let img = kernels::slice_nd(x, &[i, 0, 0, 0], &[1, sh[1], sh[2], sh[3]]);
    kernels::reshape(&img, &[sh[1], sh[2], sh[3]])
}

/// Discriminator-side contrastive loss over a real batch: queries are
/// random crops pushed through the live contrastive head, keys are fully
/// augmented views through the key encoder (gradient-free). Returns the
/// mean loss and the detached keys for post-step enqueueing.
///
/// Draw order from `rng`: all query crops (per sample), then all key
/// augmentations (per sample).
pub fn discriminator_contrastive_loss<S: Scalar, R: Rng>(
    x_real: &Tensor<S>,
    policy: &AugmentationPolicy,
    dict: &NegativeDictionary<S>,
    d: &Discriminator<S>,
    key_encoder: &KeyEncoder<S>,
    cfg: &ContrastiveConfig,
    rng: &mut R,
) -> Result<(Var<S>, Tensor<S>)> {
    cfg.validate()?;
    policy.validate()?;
    let bsz = x_real.shape()[0];
    let crop_policy = policy.crop_only();
    let queries: Vec<Tensor<S>> = (0..bsz)
        .map(|i| augment(&per_sample(x_real, i), &crop_policy, rng))
        .collect();
    let keys: Vec<Tensor<S>> = (0..bsz)
        .map(|i| augment(&per_sample(x_real, i), policy, rng))
        .collect();
    let q_rep = d.rep(&Var::constant(stack_images(&queries)));
    let k_rep = key_encoder.rep(&Var::constant(stack_images(&keys)));
    let loss = info_nce_batch(&q_rep, &k_rep, &dict.negatives(), cfg.temperature)?;
    Ok((loss, k_rep.value_clone()))
}

/// Generator-side style-match loss: patch representations of the
/// generated image are pulled toward those of its reference against the
/// shared dictionary. One set of patch boxes per sample is drawn and used
/// for both images; gradients reach `x_g` only (pass a frozen
/// discriminator, the reference side is detached).
pub fn style_match_loss<S: Scalar, R: Rng>(
    x_g: &Var<S>,
    x_r: &Var<S>,
    dict: &NegativeDictionary<S>,
    spec: &PatchSpec,
    d: &Discriminator<S>,
    temperature: f64,
    rng: &mut R,
) -> Result<Var<S>> {
    let sh = x_g.shape();
    assert_eq!(sh, x_r.shape(), "generated and reference batches must agree");
    let boxes: Vec<Vec<CropBox>> = (0..sh[0])
        .map(|_| sample_patch_boxes(sh[2], sh[3], spec, rng))
        .collect::<Result<_>>()?;
    let v_g = aggregate_patch_rep_with_boxes(x_g, &boxes, d);
    let v_r = aggregate_patch_rep_with_boxes(x_r, &boxes, d).detach();
    info_nce_batch(&v_g, &v_r, &dict.negatives(), temperature)
}
