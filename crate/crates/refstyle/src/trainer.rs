//! Training loop: batch splitting, alternating discriminator and
//! generator/encoder updates, key-encoder momentum, dictionary
//! maintenance, EMA shadows, CSV logging, checkpointing and resume.

use crate::autograd::{backward, kernels, Var};
use crate::checkpoint::Checkpoint;
use crate::contrastive::{self, ContrastiveConfig, KeyEncoder, NegativeDictionary};
use crate::data::{batch_indices, Dataset};
use crate::error::{Error, Result};
use crate::networks::{ArchPlan, Discriminator, Generator, StyleEncoder};
use crate::nn::ema_update;
use crate::objectives::{self, LossWeights};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{stream, StreamTag};
use crate::scalar::Scalar;
use crate::vis;
use crate::{augmentation::AugmentationPolicy, Tensor};
use ndarray::Axis;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

/// Hyperparameters of one training run. Defaults are the published
/// full-scale recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Full batch; the first half becomes inputs, the second references.
    pub batch_size: usize,
    pub total_iters: u64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub seed: u64,
    /// Shadow-parameter decay for G, E and D.
    pub ema_decay: f64,
    /// When true the discriminator's real term sees the whole batch; the
    /// default scores only the input half as real.
    pub adv_real_full_batch: bool,
    /// 0 disables periodic checkpoints (the final one is always written).
    pub checkpoint_every: u64,
    /// 0 disables CSV logging.
    pub log_every: u64,
    /// 0 disables periodic sample grids.
    pub sample_every: u64,
    pub loss_weights: LossWeights,
    pub contrastive: ContrastiveConfig,
    pub augmentation: AugmentationPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            total_iters: 100_000,
            lr: 5e-5,
            adam_beta1: 0.0,
            adam_beta2: 0.99,
            seed: 0,
            ema_decay: 0.999,
            adv_real_full_batch: false,
            checkpoint_every: 10_000,
            log_every: 100,
            sample_every: 0,
            loss_weights: LossWeights::default(),
            contrastive: ContrastiveConfig::default(),
            augmentation: AugmentationPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(Error::Config(format!(
                "batch_size {} must be even (the batch splits into input and reference halves)",
                self.batch_size
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} must lie in [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!(
                "ema_decay {} must lie in [0, 1]",
                self.ema_decay
            )));
        }
        self.loss_weights.validate()?;
        self.contrastive.validate()?;
        self.augmentation.validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            ..AdamConfig::default()
        }
    }
}

/// Per-step loss values. `r1` is `None` on steps where the lazy penalty
/// was not applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub step: u64,
    pub adv_d: f64,
    pub adv_g: f64,
    pub ct_d: f64,
    pub ct_g: f64,
    pub cyc: f64,
    pub r1: Option<f64>,
}

pub const CSV_HEADER: &str = "step,adv_d,adv_g,ct_d,ct_g,cyc,r1";

impl StepReport {
    pub fn csv_line(&self) -> String {
        let r1 = self.r1.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.adv_d, self.adv_g, self.ct_d, self.ct_g, self.cyc, r1
        )
    }
}

/// Everything mutable a run owns: live networks, EMA shadows, the key
/// encoder and negative dictionary, and both optimizers.
pub struct TrainState<S: Scalar> {
    pub step: u64,
    pub d: Discriminator<S>,
    pub e: StyleEncoder<S>,
    pub g: Generator<S>,
    pub ema_d: Discriminator<S>,
    pub ema_e: StyleEncoder<S>,
    pub ema_g: Generator<S>,
    pub key_enc: KeyEncoder<S>,
    pub dict: NegativeDictionary<S>,
    pub opt_d: Adam<S>,
    pub opt_ge: Adam<S>,
}

fn prefixed<S: Scalar>(prefix: &str, params: Vec<(String, Var<S>)>) -> Vec<(String, Var<S>)> {
    params.into_iter().map(|(n, v)| (format!("{prefix}.{n}"), v)).collect()
}

impl<S: Scalar> TrainState<S> {
    pub fn new(plan: &ArchPlan, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = stream(cfg.seed, StreamTag::Init, 0);
        let d = Discriminator::new(plan, &mut init)?;
        let e = StyleEncoder::new(plan, &mut init)?;
        let g = Generator::new(plan, &mut init)?;
        let key_enc = KeyEncoder::new(&d);
        let mut queue_rng = stream(cfg.seed, StreamTag::QueueInit, 0);
        let dict = NegativeDictionary::new_random(
            cfg.contrastive.queue_capacity,
            plan.rep_dim,
            &mut queue_rng,
        );
        Ok(TrainState {
            step: 0,
            ema_d: d.frozen(),
            ema_e: e.frozen(),
            ema_g: g.frozen(),
            key_enc,
            dict,
            opt_d: Adam::new(cfg.adam()),
            opt_ge: Adam::new(cfg.adam()),
            d,
            e,
            g,
        })
    }

    /// Discriminator parameters, as named for the optimizer/checkpoint.
    pub fn d_params(&self) -> Vec<(String, Var<S>)> {
        prefixed("d", self.d.params())
    }

    /// Generator + encoder parameters (updated jointly).
    pub fn ge_params(&self) -> Vec<(String, Var<S>)> {
        let mut out = prefixed("g", self.g.params());
        out.extend(prefixed("e", self.e.params()));
        out
    }
}

fn finite(value: f64, term: &'static str, step: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { step, term })
    }
}

fn split_batch<S: Scalar>(
    batch: &Tensor<S>,
    cfg: &TrainConfig,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let sh = batch.shape().to_vec();
    if sh.len() != 4 || sh[0] != cfg.batch_size {
        return Err(Error::Shape {
            op: "train_step",
            details: format!("expected [{}, 3, r, r], got {sh:?}", cfg.batch_size),
        });
    }
    let half = cfg.batch_size / 2;
    let (c, h, w) = (sh[1], sh[2], sh[3]);
    let x_o = kernels::slice_nd(batch, &[0, 0, 0, 0], &[half, c, h, w]);
    let x_r = kernels::slice_nd(batch, &[half, 0, 0, 0], &[half, c, h, w]);
    Ok((x_o, x_r))
}

/// Contrastive terms carry weight zero until the dictionary has been
/// filled once with real keys (cold-start gate).
fn effective_weights<S: Scalar>(state: &TrainState<S>, cfg: &TrainConfig) -> LossWeights {
    let mut w_eff = cfg.loss_weights;
    if !state.dict.warmed() {
        w_eff.lambda_ct_d = 0.0;
        w_eff.lambda_ct_g = 0.0;
    }
    w_eff
}

/// The discriminator-side loss graph of the current step, built before
/// any parameter moves. `keys` holds the momentum-encoder outputs to
/// enqueue once the update is done.
pub struct DLoss<S: Scalar> {
    pub total: Var<S>,
    pub adv: f64,
    pub ct: f64,
    /// Unscaled penalty value; present only on scheduled steps.
    pub r1: Option<f64>,
    pub keys: Tensor<S>,
}

/// Build the discriminator loss exactly as [`train_step`] evaluates it.
/// The fake batch comes from frozen copies of G and E, so no gradient
/// can reach them from this graph.
pub fn d_loss_graph<S: Scalar>(
    state: &TrainState<S>,
    batch: &Tensor<S>,
    cfg: &TrainConfig,
) -> Result<DLoss<S>> {
    let step = state.step;
    let (x_o, x_r) = split_batch(batch, cfg)?;
    let w_eff = effective_weights(state, cfg);

    let x_g_blocked = {
        let t_r = state.e.frozen().forward(&Var::constant(x_r));
        state.g.frozen().forward(&Var::constant(x_o.clone()), &t_r).value_clone()
    };
    let adv_real = if cfg.adv_real_full_batch { batch.clone() } else { x_o };

    let real_logits = state.d.logit(&Var::constant(adv_real.clone()));
    let fake_logits = state.d.logit(&Var::constant(x_g_blocked));
    let adv_d = objectives::adv_loss_d(&real_logits, &fake_logits);
    let adv = finite(adv_d.scalar_value().to_f64_(), "adv_d", step)?;

    let mut rng_ct = stream(cfg.seed, StreamTag::AugQuery, step);
    let (ct_d, keys) = contrastive::discriminator_contrastive_loss(
        batch,
        &cfg.augmentation,
        &state.dict,
        &state.d,
        &state.key_enc,
        &cfg.contrastive,
        &mut rng_ct,
    )?;
    let ct = finite(ct_d.scalar_value().to_f64_(), "ct_d", step)?;

    let on_r1_schedule =
        cfg.loss_weights.r1_gamma > 0.0 && step % cfg.loss_weights.r1_interval as u64 == 0;
    let (r1, r1_lazy) = if on_r1_schedule {
        let x_leaf = Var::leaf(adv_real);
        let penalty =
            objectives::r1_penalty(|x| state.d.logit(x), &x_leaf, cfg.loss_weights.r1_gamma);
        let value = finite(penalty.scalar_value().to_f64_(), "r1", step)?;
        // Lazy regularization: applied every r1_interval steps, scaled up
        // by the interval so the time-averaged strength is unchanged.
        (Some(value), Some(penalty.scale(S::from_f64(cfg.loss_weights.r1_interval as f64))))
    } else {
        (None, None)
    };

    let total = objectives::total_d_loss(&adv_d, &ct_d, r1_lazy.as_ref(), &w_eff);
    finite(total.scalar_value().to_f64_(), "d_total", step)?;
    Ok(DLoss { total, adv, ct, r1, keys })
}

/// The generator/encoder-side loss graph of the current step.
pub struct GeLoss<S: Scalar> {
    pub total: Var<S>,
    pub adv: f64,
    pub cyc: f64,
    pub ct: f64,
}

/// Build the generator/encoder loss exactly as [`train_step`] evaluates
/// it. The translation is recomputed so its graph reaches G and E; D is
/// a frozen copy here, so its parameters and the key encoder stay out of
/// reach.
pub fn ge_loss_graph<S: Scalar>(
    state: &TrainState<S>,
    batch: &Tensor<S>,
    cfg: &TrainConfig,
) -> Result<GeLoss<S>> {
    let step = state.step;
    let (x_o, x_r) = split_batch(batch, cfg)?;
    let w_eff = effective_weights(state, cfg);

    let d_frozen = state.d.frozen();
    let xo_c = Var::constant(x_o);
    let xr_c = Var::constant(x_r);
    let t_r = state.e.forward(&xr_c);
    let x_g = state.g.forward(&xo_c, &t_r);
    let adv_g = objectives::adv_loss_g(&d_frozen.logit(&x_g));
    let adv = finite(adv_g.scalar_value().to_f64_(), "adv_g", step)?;

    let t_o = state.e.forward(&xo_c);
    let x_cyc = state.g.forward(&x_g, &t_o);
    let cyc = objectives::cycle_loss(&xo_c, &x_cyc)?;
    let cyc_v = finite(cyc.scalar_value().to_f64_(), "cyc", step)?;

    let mut rng_patches = stream(cfg.seed, StreamTag::Patches, step);
    let ct_g = contrastive::style_match_loss(
        &x_g,
        &xr_c,
        &state.dict,
        &cfg.contrastive.patch_spec,
        &d_frozen,
        cfg.contrastive.temperature,
        &mut rng_patches,
    )?;
    let ct = finite(ct_g.scalar_value().to_f64_(), "ct_g", step)?;

    let total = objectives::total_ge_loss(&adv_g, &cyc, &ct_g, &w_eff);
    finite(total.scalar_value().to_f64_(), "ge_total", step)?;
    Ok(GeLoss { total, adv, cyc: cyc_v, ct })
}

/// One full iteration, in order: (1) split the batch, (2) translate with
/// gradient-blocked G/E, (3) update D, (4) update G and E on a
/// recomputed translation, (5) momentum-update the key encoder,
/// (6) enqueue the step's keys, (7) update the EMA shadows, (8) advance
/// the step counter.
pub fn train_step<S: Scalar>(
    state: &mut TrainState<S>,
    batch: &Tensor<S>,
    cfg: &TrainConfig,
) -> Result<StepReport> {
    let step = state.step;

    let d_loss = d_loss_graph(state, batch, cfg)?;
    let grads_d = backward(&d_loss.total);
    let d_params = state.d_params();
    state.opt_d.step(&d_params, &grads_d);

    let ge_loss = ge_loss_graph(state, batch, cfg)?;
    let grads_ge = backward(&ge_loss.total);
    let ge_params = state.ge_params();
    state.opt_ge.step(&ge_params, &grads_ge);

    // ---- Momentum, dictionary, EMA ----------------------------------
    state.key_enc.update(&state.d, cfg.contrastive.key_momentum)?;
    // One key per real image in the full batch: at capacity N and batch
    // B the dictionary is exactly full after N/B steps.
    state.dict.enqueue(&d_loss.keys)?;
    let decay = S::from_f64(cfg.ema_decay);
    ema_update(&state.ema_d.params(), &state.d.params(), decay)?;
    ema_update(&state.ema_e.params(), &state.e.params(), decay)?;
    ema_update(&state.ema_g.params(), &state.g.params(), decay)?;
    state.step += 1;

    Ok(StepReport {
        step,
        adv_d: d_loss.adv,
        adv_g: ge_loss.adv,
        ct_d: d_loss.ct,
        ct_g: ge_loss.ct,
        cyc: ge_loss.cyc,
        r1: d_loss.r1,
    })
}

/// Output directory layout of one run.
#[derive(Debug, Clone)]
pub struct RunDirs {
    pub root: PathBuf,
}

impl RunDirs {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDirs { root: root.into() }
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn samples(&self) -> PathBuf {
        self.root.join("samples")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn create(&self) -> Result<()> {
        for dir in [self.checkpoints(), self.samples(), self.metrics(), self.logs()] {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(())
    }

    pub fn checkpoint_path(&self, step: u64) -> PathBuf {
        self.checkpoints().join(format!("step_{step:07}.ckpt"))
    }
}

/// Run `train_step` until `cfg.total_iters`, drawing per-epoch shuffled
/// batches, logging losses to CSV, dumping sample grids and writing
/// checkpoints. Resumes cleanly from a restored state: batches, augment
/// streams and logging depend only on (seed, step).
pub fn fit<S: Scalar>(
    state: &mut TrainState<S>,
    dataset: &Dataset<S>,
    cfg: &TrainConfig,
    out: Option<&RunDirs>,
    config_echo: &str,
) -> Result<()> {
    cfg.validate()?;
    if dataset.len() < cfg.batch_size {
        return Err(Error::Data(format!(
            "dataset holds {} images but one batch needs {}",
            dataset.len(),
            cfg.batch_size
        )));
    }
    let mut csv = None;
    if let Some(dirs) = out {
        dirs.create()?;
        if cfg.log_every > 0 {
            let path = dirs.metrics().join("losses.csv");
            let fresh = !path.exists();
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            if fresh {
                writeln!(file, "{CSV_HEADER}").map_err(|e| Error::io(&path, e))?;
            }
            csv = Some((file, path));
        }
    }

    while state.step < cfg.total_iters {
        let indices = batch_indices(dataset.len(), cfg.batch_size, cfg.seed, state.step);
        let batch = dataset.batch(&indices);
        let report = train_step(state, &batch, cfg)?;
        if let Some((file, path)) = &mut csv {
            if report.step % cfg.log_every == 0 {
                writeln!(file, "{}", report.csv_line()).map_err(|e| Error::io(&*path, e))?;
            }
        }
        if let Some(dirs) = out {
            if cfg.checkpoint_every > 0
                && state.step % cfg.checkpoint_every == 0
                && state.step < cfg.total_iters
            {
                save_state(state, config_echo).save(&dirs.checkpoint_path(state.step))?;
            }
            if cfg.sample_every > 0 && state.step % cfg.sample_every == 0 {
                dump_samples(state, &batch, dirs)?;
            }
        }
    }

    if let Some(dirs) = out {
        dirs.create()?;
        save_state(state, config_echo).save(&dirs.checkpoint_path(state.step))?;
    }
    Ok(())
}

/// Translate the first few inputs of `batch` against the first few
/// references with the EMA networks and write the grid to samples/.
fn dump_samples<S: Scalar>(
    state: &TrainState<S>,
    batch: &Tensor<S>,
    dirs: &RunDirs,
) -> Result<()> {
    let sh = batch.shape();
    let half = sh[0] / 2;
    let k = half.min(4);
    let single = |i: usize| -> Tensor<S> {
        kernels::slice_nd(batch, &[i, 0, 0, 0], &[1, sh[1], sh[2], sh[3]])
    };
    let inputs: Vec<Tensor<S>> =
        (0..k).map(|i| single(i).index_axis(Axis(0), 0).to_owned()).collect();
    let references: Vec<Tensor<S>> =
        (0..k).map(|j| single(half + j).index_axis(Axis(0), 0).to_owned()).collect();
    let mut outputs = Vec::with_capacity(k);
    for i in 0..k {
        let mut row = Vec::with_capacity(k);
        for j in 0..k {
            let style = state.ema_e.forward(&Var::constant(single(half + j)));
            let out = state.ema_g.forward(&Var::constant(single(i)), &style);
            row.push(out.value().index_axis(Axis(0), 0).to_owned());
        }
        outputs.push(row);
    }
    let grid = vis::translation_grid(&inputs, &references, &outputs);
    vis::save_png(&dirs.samples().join(format!("step_{:07}.png", state.step)), &grid)
}

/// Serialize the full state (networks, shadows, key encoder, dictionary,
/// optimizers) into a checkpoint.
pub fn save_state<S: Scalar>(state: &TrainState<S>, config_echo: &str) -> Checkpoint<S> {
    let mut ck = Checkpoint::new(state.step, config_echo);
    let mut put = |prefix: &str, params: Vec<(String, Var<S>)>| {
        for (name, var) in params {
            ck.put_tensor(format!("{prefix}.{name}"), var.value_clone());
        }
    };
    put("d", state.d.params());
    put("e", state.e.params());
    put("g", state.g.params());
    put("ema_d", state.ema_d.params());
    put("ema_e", state.ema_e.params());
    put("ema_g", state.ema_g.params());
    put("k", state.key_enc.params());
    ck.put_tensor("dict.entries", state.dict.entries().clone());
    ck.put_scalar("dict.cursor", state.dict.cursor() as f64);
    ck.put_scalar("dict.total_enqueued", state.dict.total_enqueued() as f64);
    for (label, opt) in [("opt_d", &state.opt_d), ("opt_ge", &state.opt_ge)] {
        let (t, entries) = opt.export_state();
        ck.put_scalar(format!("{label}.t"), t as f64);
        for (name, m, v) in entries {
            ck.put_tensor(format!("{label}.m.{name}"), m);
            ck.put_tensor(format!("{label}.v.{name}"), v);
        }
    }
    ck
}

struct Consumer<'a, S: Scalar> {
    ck: &'a Checkpoint<S>,
    used: BTreeSet<String>,
}

impl<'a, S: Scalar> Consumer<'a, S> {
    fn tensor(&mut self, key: &str) -> Result<&'a Tensor<S>> {
        self.used.insert(key.to_string());
        self.ck
            .tensor(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key:?}")))
    }

    fn assign(&mut self, prefix: &str, params: &[(String, Var<S>)]) -> Result<()> {
        for (name, var) in params {
            let key = format!("{prefix}.{name}");
            let stored = self.tensor(&key)?;
            if stored.shape() != var.shape().as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {key:?} has shape {:?} but this architecture expects {:?}",
                    stored.shape(),
                    var.shape()
                )));
            }
            var.set_value(stored.clone());
        }
        Ok(())
    }

    fn opt_state(&mut self, label: &str) -> Result<(u64, Vec<(String, Tensor<S>, Tensor<S>)>)> {
        let t = self
            .ck
            .scalar(&format!("{label}.t"))
            .ok_or_else(|| Error::Checkpoint(format!("missing scalar {label}.t")))?
            as u64;
        let m_prefix = format!("{label}.m.");
        let names: Vec<String> = self
            .ck
            .tensor_names()
            .filter_map(|n| n.strip_prefix(&m_prefix).map(str::to_string))
            .collect();
        let mut entries = Vec::with_capacity(names.len());
        for name in names {
            let m = self.tensor(&format!("{label}.m.{name}"))?.clone();
            let v = self.tensor(&format!("{label}.v.{name}"))?.clone();
            entries.push((name, m, v));
        }
        Ok((t, entries))
    }

    fn finish(self) -> Result<()> {
        for name in self.ck.tensor_names() {
            if !self.used.contains(name) {
                return Err(Error::Checkpoint(format!(
                    "checkpoint contains tensor {name:?} which this configuration does not \
                     expect (architecture mismatch?)"
                )));
            }
        }
        Ok(())
    }
}

/// Rebuild a [`TrainState`] from a checkpoint. The plan and config must
/// describe the same architecture the checkpoint was saved from; every
/// stored tensor must be consumed and every expected tensor present.
pub fn restore_state<S: Scalar>(
    plan: &ArchPlan,
    cfg: &TrainConfig,
    ck: &Checkpoint<S>,
) -> Result<TrainState<S>> {
    let mut state = TrainState::new(plan, cfg)?;
    state.step = ck.step;
    let mut consume = Consumer { ck, used: BTreeSet::new() };
    consume.assign("d", &state.d.params())?;
    consume.assign("e", &state.e.params())?;
    consume.assign("g", &state.g.params())?;
    consume.assign("ema_d", &state.ema_d.params())?;
    consume.assign("ema_e", &state.ema_e.params())?;
    consume.assign("ema_g", &state.ema_g.params())?;
    consume.assign("k", &state.key_enc.params())?;

    let entries = consume.tensor("dict.entries")?.clone();
    let cursor = ck
        .scalar("dict.cursor")
        .ok_or_else(|| Error::Checkpoint("missing scalar dict.cursor".into()))?;
    let total = ck
        .scalar("dict.total_enqueued")
        .ok_or_else(|| Error::Checkpoint("missing scalar dict.total_enqueued".into()))?;
    state.dict = NegativeDictionary::from_parts(entries, cursor as usize, total as u64)?;

    let (t, opt_entries) = consume.opt_state("opt_d")?;
    state.opt_d.load_state(t, opt_entries);
    let (t, opt_entries) = consume.opt_state("opt_ge")?;
    state.opt_ge.load_state(t, opt_entries);
    consume.finish()?;
    Ok(state)
}
