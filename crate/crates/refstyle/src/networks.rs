//! The three networks: dual-headed discriminator, style encoder, and
//! AdaIN generator, plus the plan arithmetic that maps a resolution and
//! channel budget onto concrete block stacks.

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::nn::{
    normalize_rows, AdainResBlock, Conv2d, Linear, ResBlock, LRELU_SLOPE,
};
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Scale knobs for all three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSpec {
    pub resolution: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub style_dim: usize,
    pub rep_dim: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            resolution: 128,
            base_channels: 64,
            max_channels: 512,
            style_dim: 128,
            rep_dim: 256,
        }
    }
}

impl NetworkSpec {
    /// Derive the concrete block layout, validating that the resolution
    /// supports the fixed downsampling structure (D/E must reach 4×4, G's
    /// bottleneck sits at 16×16).
    pub fn plan(&self) -> Result<ArchPlan> {
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return Err(Error::Config(format!(
                "channel budget invalid: base {} max {}",
                self.base_channels, self.max_channels
            )));
        }
        if self.style_dim == 0 || self.rep_dim == 0 {
            return Err(Error::Config("style_dim and rep_dim must be positive".into()));
        }
        let r = self.resolution;
        if r < 32 || !r.is_power_of_two() && (r % 4 != 0 || !(r / 4).is_power_of_two()) {
            return Err(Error::Config(format!(
                "resolution {r} cannot reach the 4x4 trunk output by repeated 2x downsampling"
            )));
        }
        if !(r / 4).is_power_of_two() || r < 32 {
            return Err(Error::Config(format!(
                "resolution {r} cannot reach the 4x4 trunk output by repeated 2x downsampling"
            )));
        }
        let cap = |c: usize| c.min(self.max_channels);
        let n_trunk = (r / 4).trailing_zeros() as usize; // r -> 4 halvings
        let trunk: Vec<(usize, usize)> = (0..n_trunk)
            .map(|i| (cap(self.base_channels << i), cap(self.base_channels << (i + 1))))
            .collect();
        let n_gdown = (r / 16).trailing_zeros() as usize; // r -> 16 halvings
        let g_down: Vec<(usize, usize)> = (0..n_gdown)
            .map(|i| (cap(self.base_channels << i), cap(self.base_channels << (i + 1))))
            .collect();
        let mid = cap(self.base_channels << n_gdown);
        let g_up: Vec<(usize, usize)> = (0..n_gdown)
            .map(|i| (cap(self.base_channels << (n_gdown - i)), cap(self.base_channels << (n_gdown - i - 1))))
            .collect();
        Ok(ArchPlan {
            resolution: r,
            in_channels: 3,
            stem: self.base_channels,
            trunk,
            g_down,
            g_mid_in: 2,
            g_mid_adain: 2,
            g_mid_width: mid,
            g_up,
            head_width: cap(self.base_channels << n_trunk),
            head_spatial: 4,
            style_dim: self.style_dim,
            rep_dim: self.rep_dim,
        })
    }
}

/// Concrete block layout. Normally produced by [`NetworkSpec::plan`];
/// constructed directly for miniature test networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchPlan {
    pub resolution: usize,
    pub in_channels: usize,
    /// Stem conv output channels.
    pub stem: usize,
    /// D/E residual blocks as (in, out); each downsamples 2×.
    pub trunk: Vec<(usize, usize)>,
    /// G downsampling blocks (IN).
    pub g_down: Vec<(usize, usize)>,
    /// Counts of intermediate blocks at the bottleneck.
    pub g_mid_in: usize,
    pub g_mid_adain: usize,
    pub g_mid_width: usize,
    /// G upsampling blocks (AdaIN).
    pub g_up: Vec<(usize, usize)>,
    /// Channels entering the heads (trunk output).
    pub head_width: usize,
    /// Spatial size at the trunk output; the head conv kernel covers it.
    pub head_spatial: usize,
    pub style_dim: usize,
    pub rep_dim: usize,
}

impl ArchPlan {
    /// Layout checks shared by every network constructor.
    pub fn validate(&self) -> Result<()> {
        let mut side = self.resolution;
        for _ in &self.trunk {
            if side % 2 != 0 {
                return Err(Error::Config(format!(
                    "trunk cannot halve odd spatial size {side}"
                )));
            }
            side /= 2;
        }
        if side != self.head_spatial {
            return Err(Error::Config(format!(
                "trunk reaches {side}x{side}, expected head spatial {0}x{0}",
                self.head_spatial
            )));
        }
        let mut gside = self.resolution;
        for _ in &self.g_down {
            if gside % 2 != 0 {
                return Err(Error::Config(format!(
                    "generator cannot halve odd spatial size {gside}"
                )));
            }
            gside /= 2;
        }
        for _ in &self.g_up {
            gside *= 2;
        }
        if gside != self.resolution {
            return Err(Error::Config(
                "generator up/down stacks do not restore the input resolution".into(),
            ));
        }
        Ok(())
    }
}

/// One (label, output shape) row of a network's layer listing; shapes use
/// the (H, W, C) convention of the reference tables, or [D...] for flat
/// tensors.
pub type LayerRow = (String, Vec<usize>);

fn head_rows(plan: &ArchPlan, fanout: usize, rows: &mut Vec<LayerRow>) {
    let s = plan.head_spatial;
    rows.push(("LReLU".into(), vec![s, s, plan.head_width]));
    rows.push((format!("Conv{s}x{s}"), vec![1, 1, plan.head_width]));
    rows.push(("LReLU".into(), vec![1, 1, plan.head_width]));
    rows.push(("Reshape".into(), vec![plan.head_width]));
    rows.push(("Linear".into(), vec![fanout]));
}

/// Discriminator: shared trunk, then an unshared contrastive branch
/// (unit-norm rep) and an unshared adversarial branch (scalar logit).
pub struct Discriminator<S: Scalar> {
    pub stem: Conv2d<S>,
    pub blocks: Vec<ResBlock<S>>,
    pub ct_conv: Conv2d<S>,
    pub ct_fc: Linear<S>,
    pub adv_conv: Conv2d<S>,
    pub adv_fc: Linear<S>,
    plan: ArchPlan,
}

impl<S: Scalar> Discriminator<S> {
    pub fn new<R: Rng>(plan: &ArchPlan, rng: &mut R) -> Result<Self> {
        plan.validate()?;
        let stem = Conv2d::new(plan.in_channels, plan.stem, 1, 0, true, rng);
        let blocks = plan
            .trunk
            .iter()
            .map(|&(cin, cout)| ResBlock::new(cin, cout, false, true, rng))
            .collect();
        let k = plan.head_spatial;
        let w = plan.head_width;
        Ok(Discriminator {
            stem,
            blocks,
            ct_conv: Conv2d::new(w, w, k, 0, true, rng),
            ct_fc: Linear::new(w, plan.rep_dim, rng),
            adv_conv: Conv2d::new(w, w, k, 0, true, rng),
            adv_fc: Linear::new(w, 1, rng),
            plan: plan.clone(),
        })
    }

    pub fn plan(&self) -> &ArchPlan {
        &self.plan
    }

    pub fn trunk(&self, x: &Var<S>) -> Var<S> {
        let mut h = self.stem.forward(x);
        for b in &self.blocks {
            h = b.forward(&h);
        }
        h
    }

    fn head(conv: &Conv2d<S>, fc: &Linear<S>, t: &Var<S>, width: usize) -> Var<S> {
        let slope = S::from_f64(LRELU_SLOPE);
        let b = t.shape()[0];
        let h = conv.forward(&t.lrelu(slope)).lrelu(slope).reshape(&[b, width]);
        fc.forward(&h)
    }

    /// Unit-norm contrastive representation, [B, rep_dim].
    pub fn rep(&self, x: &Var<S>) -> Var<S> {
        self.rep_from_trunk(&self.trunk(x))
    }

    pub fn rep_from_trunk(&self, t: &Var<S>) -> Var<S> {
        normalize_rows(&Self::head(&self.ct_conv, &self.ct_fc, t, self.plan.head_width))
    }

    /// Adversarial logit, [B, 1].
    pub fn logit(&self, x: &Var<S>) -> Var<S> {
        self.logit_from_trunk(&self.trunk(x))
    }

    pub fn logit_from_trunk(&self, t: &Var<S>) -> Var<S> {
        Self::head(&self.adv_conv, &self.adv_fc, t, self.plan.head_width)
    }

    /// Both heads off one shared trunk pass.
    pub fn forward(&self, x: &Var<S>) -> (Var<S>, Var<S>) {
        let t = self.trunk(x);
        (self.rep_from_trunk(&t), self.logit_from_trunk(&t))
    }

    pub fn params(&self) -> Vec<(String, Var<S>)> {
        let mut out = Vec::new();
        self.stem.params_into("stem", &mut out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.params_into(&format!("blocks.{i}"), &mut out);
        }
        self.ct_conv.params_into("ct_head.conv", &mut out);
        self.ct_fc.params_into("ct_head.fc", &mut out);
        self.adv_conv.params_into("adv_head.conv", &mut out);
        self.adv_fc.params_into("adv_head.fc", &mut out);
        out
    }

    /// Trunk + contrastive-branch parameters only (the key-encoder subset).
    pub fn params_ct(&self) -> Vec<(String, Var<S>)> {
        let mut out = Vec::new();
        self.stem.params_into("stem", &mut out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.params_into(&format!("blocks.{i}"), &mut out);
        }
        self.ct_conv.params_into("ct_head.conv", &mut out);
        self.ct_fc.params_into("ct_head.fc", &mut out);
        out
    }

    pub fn frozen(&self) -> Self {
        Discriminator {
            stem: self.stem.frozen(),
            blocks: self.blocks.iter().map(ResBlock::frozen).collect(),
            ct_conv: self.ct_conv.frozen(),
            ct_fc: self.ct_fc.frozen(),
            adv_conv: self.adv_conv.frozen(),
            adv_fc: self.adv_fc.frozen(),
            plan: self.plan.clone(),
        }
    }

    /// Layer listing in table form; branch rows cover one head with the
    /// final Linear fan-out given per head.
    pub fn layer_rows(&self) -> Vec<LayerRow> {
        let p = &self.plan;
        let mut rows = Vec::new();
        let mut side = p.resolution;
        rows.push(("Conv1x1".into(), vec![side, side, p.stem]));
        for &(_, cout) in &p.trunk {
            side /= 2;
            rows.push(("ResBlk+AvgPool".into(), vec![side, side, cout]));
        }
        head_rows(p, p.rep_dim, &mut rows);
        let n = rows.len();
        rows[n - 1] = ("Linear".into(), vec![p.rep_dim]); // contrastive head
        rows.push(("Linear(adv)".into(), vec![1]));
        rows
    }
}

/// Style encoder: discriminator-shaped trunk ending in a two-layer fully
/// connected head that emits an unnormalized style code.
pub struct StyleEncoder<S: Scalar> {
    pub stem: Conv2d<S>,
    pub blocks: Vec<ResBlock<S>>,
    pub head_conv: Conv2d<S>,
    pub fc1: Linear<S>,
    pub fc2: Linear<S>,
    plan: ArchPlan,
}

impl<S: Scalar> StyleEncoder<S> {
    pub fn new<R: Rng>(plan: &ArchPlan, rng: &mut R) -> Result<Self> {
        plan.validate()?;
        let stem = Conv2d::new(plan.in_channels, plan.stem, 1, 0, true, rng);
        let blocks = plan
            .trunk
            .iter()
            .map(|&(cin, cout)| ResBlock::new(cin, cout, false, true, rng))
            .collect();
        let k = plan.head_spatial;
        let w = plan.head_width;
        Ok(StyleEncoder {
            stem,
            blocks,
            head_conv: Conv2d::new(w, w, k, 0, true, rng),
            fc1: Linear::new(w, w, rng),
            fc2: Linear::new(w, plan.style_dim, rng),
            plan: plan.clone(),
        })
    }

    pub fn forward(&self, x: &Var<S>) -> Var<S> {
        let slope = S::from_f64(LRELU_SLOPE);
        let mut h = self.stem.forward(x);
        for b in &self.blocks {
            h = b.forward(&h);
        }
        let b = h.shape()[0];
        let h = self
            .head_conv
            .forward(&h.lrelu(slope))
            .lrelu(slope)
            .reshape(&[b, self.plan.head_width]);
        self.fc2.forward(&self.fc1.forward(&h).lrelu(slope))
    }

    pub fn params(&self) -> Vec<(String, Var<S>)> {
        let mut out = Vec::new();
        self.stem.params_into("stem", &mut out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.params_into(&format!("blocks.{i}"), &mut out);
        }
        self.head_conv.params_into("head.conv", &mut out);
        self.fc1.params_into("head.fc1", &mut out);
        self.fc2.params_into("head.fc2", &mut out);
        out
    }

    pub fn frozen(&self) -> Self {
        StyleEncoder {
            stem: self.stem.frozen(),
            blocks: self.blocks.iter().map(ResBlock::frozen).collect(),
            head_conv: self.head_conv.frozen(),
            fc1: self.fc1.frozen(),
            fc2: self.fc2.frozen(),
            plan: self.plan.clone(),
        }
    }

    pub fn layer_rows(&self) -> Vec<LayerRow> {
        let p = &self.plan;
        let mut rows = Vec::new();
        let mut side = p.resolution;
        rows.push(("Conv1x1".into(), vec![side, side, p.stem]));
        for &(_, cout) in &p.trunk {
            side /= 2;
            rows.push(("ResBlk+AvgPool".into(), vec![side, side, cout]));
        }
        head_rows(p, p.head_width, &mut rows);
        let n = rows.len();
        rows[n - 1] = ("Linear".into(), vec![p.head_width]);
        rows.push(("LReLU".into(), vec![p.head_width]));
        rows.push(("Linear".into(), vec![p.style_dim]));
        rows
    }
}

/// AdaIN generator: IN-normalized encoder, mixed intermediate stack, and a
/// style-conditioned decoder; output squashed to [-1, 1] by tanh.
pub struct Generator<S: Scalar> {
    pub stem: Conv2d<S>,
    pub down: Vec<ResBlock<S>>,
    pub mid_in: Vec<ResBlock<S>>,
    pub mid_adain: Vec<AdainResBlock<S>>,
    pub up: Vec<AdainResBlock<S>>,
    pub out_conv: Conv2d<S>,
    plan: ArchPlan,
}

impl<S: Scalar> Generator<S> {
    pub fn new<R: Rng>(plan: &ArchPlan, rng: &mut R) -> Result<Self> {
        plan.validate()?;
        let stem = Conv2d::new(plan.in_channels, plan.stem, 1, 0, true, rng);
        let down = plan
            .g_down
            .iter()
            .map(|&(cin, cout)| ResBlock::new(cin, cout, true, true, rng))
            .collect();
        let w = plan.g_mid_width;
        let mid_in = (0..plan.g_mid_in)
            .map(|_| ResBlock::new(w, w, true, false, rng))
            .collect();
        let mid_adain = (0..plan.g_mid_adain)
            .map(|_| AdainResBlock::new(w, w, plan.style_dim, false, rng))
            .collect();
        let up = plan
            .g_up
            .iter()
            .map(|&(cin, cout)| AdainResBlock::new(cin, cout, plan.style_dim, true, rng))
            .collect();
        let out_conv = Conv2d::new(plan.stem, plan.in_channels, 1, 0, true, rng);
        Ok(Generator { stem, down, mid_in, mid_adain, up, out_conv, plan: plan.clone() })
    }

    /// Translate `x` under style code `s` ([B, style_dim]).
    pub fn forward(&self, x: &Var<S>, s: &Var<S>) -> Var<S> {
        assert_eq!(
            s.shape(),
            &[x.shape()[0], self.plan.style_dim],
            "style code batch/dim mismatch"
        );
        let mut h = self.stem.forward(x);
        for b in &self.down {
            h = b.forward(&h);
        }
        for b in &self.mid_in {
            h = b.forward(&h);
        }
        for b in &self.mid_adain {
            h = b.forward(&h, s);
        }
        for b in &self.up {
            h = b.forward(&h, s);
        }
        self.out_conv.forward(&h).tanh()
    }

    pub fn params(&self) -> Vec<(String, Var<S>)> {
        let mut out = Vec::new();
        self.stem.params_into("stem", &mut out);
        for (i, b) in self.down.iter().enumerate() {
            b.params_into(&format!("down.{i}"), &mut out);
        }
        for (i, b) in self.mid_in.iter().enumerate() {
            b.params_into(&format!("mid_in.{i}"), &mut out);
        }
        for (i, b) in self.mid_adain.iter().enumerate() {
            b.params_into(&format!("mid_adain.{i}"), &mut out);
        }
        for (i, b) in self.up.iter().enumerate() {
            b.params_into(&format!("up.{i}"), &mut out);
        }
        self.out_conv.params_into("out_conv", &mut out);
        out
    }

    pub fn frozen(&self) -> Self {
        Generator {
            stem: self.stem.frozen(),
            down: self.down.iter().map(ResBlock::frozen).collect(),
            mid_in: self.mid_in.iter().map(ResBlock::frozen).collect(),
            mid_adain: self.mid_adain.iter().map(AdainResBlock::frozen).collect(),
            up: self.up.iter().map(AdainResBlock::frozen).collect(),
            out_conv: self.out_conv.frozen(),
            plan: self.plan.clone(),
        }
    }

    pub fn layer_rows(&self) -> Vec<LayerRow> {
        let p = &self.plan;
        let mut rows = Vec::new();
        let mut side = p.resolution;
        rows.push(("Conv1x1".into(), vec![side, side, p.stem]));
        for &(_, cout) in &p.g_down {
            side /= 2;
            rows.push(("ResBlk(IN)+AvgPool".into(), vec![side, side, cout]));
        }
        for _ in 0..p.g_mid_in {
            rows.push(("ResBlk(IN)".into(), vec![side, side, p.g_mid_width]));
        }
        for _ in 0..p.g_mid_adain {
            rows.push(("ResBlk(AdaIN)".into(), vec![side, side, p.g_mid_width]));
        }
        for &(_, cout) in &p.g_up {
            side *= 2;
            rows.push(("ResBlk(AdaIN)+Upsample".into(), vec![side, side, cout]));
        }
        rows.push(("Conv1x1".into(), vec![side, side, p.in_channels]));
        rows
    }
}

/// Miniature plan used by gradient and isolation tests: `blocks` trunk
/// stages on tiny images, everything else scaled to match.
pub fn miniature_plan(resolution: usize, blocks: usize, width: usize, style_dim: usize, rep_dim: usize) -> ArchPlan {
    let trunk: Vec<(usize, usize)> = (0..blocks).map(|_| (width, width)).collect();
    ArchPlan {
        resolution,
        in_channels: 3,
        stem: width,
        trunk,
        g_down: vec![(width, width)],
        g_mid_in: 1,
        g_mid_adain: 1,
        g_mid_width: width,
        g_up: vec![(width, width)],
        head_width: width,
        head_spatial: resolution >> blocks,
        style_dim,
        rep_dim,
    }
}
