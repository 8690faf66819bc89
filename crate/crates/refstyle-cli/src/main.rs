//! `refstyle` — command-line driver for reference-guided image-to-image
//! translation: train, translate, interpolate, search, evaluate and
//! make-synthetic, all driven by one declarative TOML config with
//! dotted-key overrides.

use clap::{Parser, Subcommand};
use refstyle::autograd::Var;
use refstyle::checkpoint::Checkpoint;
use refstyle::config::{self, RunConfig};
use refstyle::data::load_dataset;
use refstyle::evaluation::{
    evaluate_translation, interpolate_styles, similarity_search, translate_single,
    OracleClassifier, RandomConvFeatures,
};
use refstyle::synthetic::{write_synthetic_dataset, MeanColorOracle};
use refstyle::trainer::{fit, restore_state, TrainState};
use refstyle::vis;
use refstyle::{Error, Result, Tensor};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Runtime precision of the shipped binary.
type S = f32;

#[derive(Parser)]
#[command(
    name = "refstyle",
    version,
    about = "Reference-guided image-to-image translation toolkit"
)]
struct Cli {
    /// Run configuration (TOML). Inference commands fall back to the
    /// config embedded in the checkpoint; otherwise defaults apply.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override every seed in the config (train, eval, synthetic).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dotted-key config override, e.g. --set train.batch_size=8
    /// (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from scratch or resume from a checkpoint.
    Train {
        /// Resume from this checkpoint instead of initializing fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Translate every input with the style of every reference and
    /// assemble a reference-grid image.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input image files or directories (repeatable).
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Reference image files or directories (repeatable).
        #[arg(long, required = true, num_args = 1..)]
        reference: Vec<PathBuf>,
        /// Output directory (default: `<run>/samples/translate`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Blend an input's own style toward a reference style in even steps.
    Interpolate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Number of frames, endpoints included.
        #[arg(long, default_value_t = 8)]
        steps: usize,
        /// Output directory (default: `<run>/samples/interpolate`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rank corpus images by style similarity to a query image.
    Search {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// Corpus image files or directories (repeatable).
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        /// How many hits to print.
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Compute FID, mFID and oracle accuracy on the configured dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render the synthetic shapes-and-hues dataset from the config.
    MakeSynthetic {
        /// Output directory (default: `dataset.root` from the config).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Image { .. } | Error::Io { .. } => 3,
        Error::Checkpoint(_) => 4,
        Error::NonFinite { .. } => 5,
        _ => 1,
    }
}

/// Resolve the effective config: explicit `--config` wins, otherwise the
/// echo embedded in a checkpoint, otherwise defaults; then `--set`,
/// `--seed` and `--out` apply on top.
fn load_config(cli: &Cli, embedded: Option<&str>) -> Result<RunConfig> {
    let base = match (&cli.config, embedded) {
        (Some(path), _) => config::parse_config(path)?,
        (None, Some(text)) if !text.trim().is_empty() => {
            config::parse_config_str(text).map_err(|e| match e {
                Error::Config(msg) => {
                    Error::Config(format!("config embedded in checkpoint: {msg}"))
                }
                other => other,
            })?
        }
        _ => RunConfig::default(),
    };
    let sets: Vec<(String, String)> = cli
        .set
        .iter()
        .map(|s| config::parse_set_arg(s))
        .collect::<Result<_>>()?;
    let mut cfg = config::with_overrides(&base, &sets)?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.eval.seed = seed;
        cfg.synthetic.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn restore(cfg: &RunConfig, path: &Path) -> Result<(TrainState<S>, Checkpoint<S>)> {
    let ck = Checkpoint::load(path)?;
    let plan = cfg.network.plan()?;
    let state = restore_state(&plan, &cfg.train, &ck)?;
    Ok((state, ck))
}

/// Expand files and flat directories into a sorted list of image paths.
fn collect_image_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut in_dir = Vec::new();
            let entries = std::fs::read_dir(p).map_err(|e| Error::io(p, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(p, e))?.path();
                let ext = path
                    .extension()
                    .and_then(|e| e.to_str())
                    .map(|e| e.to_ascii_lowercase());
                if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
                    in_dir.push(path);
                }
            }
            in_dir.sort();
            files.extend(in_dir);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::Data("no images found among the given paths".into()));
    }
    Ok(files)
}

/// Load an image and require it to be square at the network resolution.
fn load_at_resolution(path: &Path, res: usize) -> Result<Tensor<S>> {
    let img = vis::load_image::<S>(path)?;
    let sh = img.shape().to_vec();
    if sh != [3, res, res] {
        return Err(Error::Config(format!(
            "{}: resolution {}x{} does not match the network's {res}x{res}",
            path.display(),
            sh[2],
            sh[1],
        )));
    }
    Ok(img)
}

fn load_many(paths: &[PathBuf], res: usize) -> Result<Vec<(PathBuf, Tensor<S>)>> {
    paths
        .iter()
        .map(|p| Ok((p.clone(), load_at_resolution(p, res)?)))
        .collect()
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "img".into())
}

/// Write the effective config next to the run outputs so every artifact
/// records how it was produced.
fn echo_config(cfg: &RunConfig) -> Result<()> {
    let dirs = cfg.run_dirs();
    dirs.create()?;
    let path = dirs.root.join("config.toml");
    std::fs::write(&path, cfg.echo()).map_err(|e| Error::io(&path, e))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { resume } => cmd_train(&cli, resume.as_deref()),
        Command::Translate { checkpoint, input, reference, output } => {
            cmd_translate(&cli, checkpoint, input, reference, output.as_deref())
        }
        Command::Interpolate { checkpoint, input, reference, steps, output } => {
            cmd_interpolate(&cli, checkpoint, input, reference, *steps, output.as_deref())
        }
        Command::Search { checkpoint, query, corpus, k } => {
            cmd_search(&cli, checkpoint, query, corpus, *k)
        }
        Command::Evaluate { checkpoint } => cmd_evaluate(&cli, checkpoint),
        Command::MakeSynthetic { output } => cmd_make_synthetic(&cli, output.as_deref()),
    }
}

fn cmd_train(cli: &Cli, resume: Option<&Path>) -> Result<()> {
    let cfg = load_config(cli, None)?;
    let plan = cfg.network.plan()?;
    let (dataset, skipped) = load_dataset::<S>(&cfg.dataset)?;
    if skipped > 0 {
        log::warn!("skipped {skipped} unreadable images");
    }
    let mut state = match resume {
        Some(path) => {
            let ck = Checkpoint::<S>::load(path)?;
            log::info!("resuming from {} at step {}", path.display(), ck.step);
            restore_state(&plan, &cfg.train, &ck)?
        }
        None => TrainState::new(&plan, &cfg.train)?,
    };
    echo_config(&cfg)?;
    let dirs = cfg.run_dirs();
    log::info!(
        "training {} images at {}x{} for {} iterations (batch {})",
        dataset.len(),
        cfg.network.resolution,
        cfg.network.resolution,
        cfg.train.total_iters,
        cfg.train.batch_size
    );
    fit(&mut state, &dataset, &cfg.train, Some(&dirs), &cfg.echo())?;
    println!(
        "done: step {} — checkpoint {}",
        state.step,
        dirs.checkpoint_path(state.step).display()
    );
    Ok(())
}

fn cmd_translate(
    cli: &Cli,
    checkpoint: &Path,
    input: &[PathBuf],
    reference: &[PathBuf],
    output: Option<&Path>,
) -> Result<()> {
    let ck_probe = Checkpoint::<S>::load(checkpoint)?;
    let cfg = load_config(cli, Some(&ck_probe.config))?;
    let (state, _) = restore(&cfg, checkpoint)?;
    let res = cfg.network.resolution;
    let inputs = load_many(&collect_image_paths(input)?, res)?;
    let references = load_many(&collect_image_paths(reference)?, res)?;

    let out_dir = match output {
        Some(p) => p.to_path_buf(),
        None => {
            echo_config(&cfg)?;
            cfg.run_dirs().samples().join("translate")
        }
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut rows = Vec::with_capacity(inputs.len());
    for (i, (in_path, x_o)) in inputs.iter().enumerate() {
        let mut row = Vec::with_capacity(references.len());
        for (j, (ref_path, x_r)) in references.iter().enumerate() {
            let out = translate_single(&state.ema_g, &state.ema_e, x_o, x_r);
            let name = format!("{:03}x{:03}_{}__{}.png", i, j, stem(in_path), stem(ref_path));
            vis::save_png(&out_dir.join(name), &out)?;
            row.push(out);
        }
        rows.push(row);
    }
    let input_imgs: Vec<Tensor<S>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let ref_imgs: Vec<Tensor<S>> = references.iter().map(|(_, t)| t.clone()).collect();
    let grid = vis::translation_grid(&input_imgs, &ref_imgs, &rows);
    vis::save_png(&out_dir.join("grid.png"), &grid)?;
    println!(
        "wrote {} translations + grid.png to {}",
        inputs.len() * references.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_interpolate(
    cli: &Cli,
    checkpoint: &Path,
    input: &Path,
    reference: &Path,
    steps: usize,
    output: Option<&Path>,
) -> Result<()> {
    let ck_probe = Checkpoint::<S>::load(checkpoint)?;
    let cfg = load_config(cli, Some(&ck_probe.config))?;
    let (state, _) = restore(&cfg, checkpoint)?;
    let res = cfg.network.resolution;
    let x_o = load_at_resolution(input, res)?;
    let x_r = load_at_resolution(reference, res)?;
    let frames = interpolate_styles(&x_o, &x_r, steps, &state.ema_g, &state.ema_e)?;

    let out_dir = match output {
        Some(p) => p.to_path_buf(),
        None => {
            echo_config(&cfg)?;
            cfg.run_dirs().samples().join("interpolate")
        }
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    for (i, frame) in frames.iter().enumerate() {
        vis::save_png(&out_dir.join(format!("step_{i:02}.png")), frame)?;
    }
    let strip = vis::grid(&frames, frames.len());
    vis::save_png(&out_dir.join("strip.png"), &strip)?;
    println!("wrote {steps} frames + strip.png to {}", out_dir.display());
    Ok(())
}

fn cmd_search(
    cli: &Cli,
    checkpoint: &Path,
    query: &Path,
    corpus: &[PathBuf],
    k: usize,
) -> Result<()> {
    let ck_probe = Checkpoint::<S>::load(checkpoint)?;
    let cfg = load_config(cli, Some(&ck_probe.config))?;
    let (state, _) = restore(&cfg, checkpoint)?;
    let res = cfg.network.resolution;
    let q = load_at_resolution(query, res)?;
    let corpus_imgs = load_many(&collect_image_paths(corpus)?, res)?;
    let tensors: Vec<Tensor<S>> = corpus_imgs.iter().map(|(_, t)| t.clone()).collect();
    let hits = similarity_search(&q, &tensors, &state.ema_e, k);
    println!("rank  similarity  path");
    for (rank, hit) in hits.iter().enumerate() {
        println!(
            "{:<4}  {:+.6}   {}",
            rank + 1,
            hit.similarity,
            corpus_imgs[hit.index].0.display()
        );
    }
    Ok(())
}

fn cmd_evaluate(cli: &Cli, checkpoint: &Path) -> Result<()> {
    let ck_probe = Checkpoint::<S>::load(checkpoint)?;
    let cfg = load_config(cli, Some(&ck_probe.config))?;
    let (state, ck) = restore(&cfg, checkpoint)?;
    let (test, skipped) = load_dataset::<S>(&cfg.dataset)?;
    if skipped > 0 {
        log::warn!("skipped {skipped} unreadable images");
    }
    let extractor = RandomConvFeatures::<S>::new(cfg.network.resolution, cfg.eval.seed)?;
    let oracle: Option<MeanColorOracle> = match &test.labels {
        Some(labels) => {
            let classes = labels.iter().max().map_or(0, |m| m + 1);
            if classes < 2 {
                return Err(Error::Config(format!(
                    "labeled test set has {classes} class(es); the mean-color \
                     oracle needs at least 2"
                )));
            }
            Some(MeanColorOracle::new(classes))
        }
        None => None,
    };
    let g = &state.ema_g;
    let e = &state.ema_e;
    let model = |x: &Tensor<S>, r: &Tensor<S>| -> Tensor<S> {
        let style = e.forward(&Var::constant(r.clone()));
        g.forward(&Var::constant(x.clone()), &style).value_clone()
    };
    let report = evaluate_translation(
        model,
        &test,
        oracle.as_ref().map(|o| o as &dyn OracleClassifier<S>),
        &extractor,
        &cfg.eval,
    )?;
    println!("{report}");
    echo_config(&cfg)?;
    let dirs = cfg.run_dirs();
    let path = dirs.metrics().join(format!("report_step_{:07}.json", ck.step));
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("serialize report: {e}")))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    println!("report written to {}", path.display());
    Ok(())
}

fn cmd_make_synthetic(cli: &Cli, output: Option<&Path>) -> Result<()> {
    let cfg = load_config(cli, None)?;
    let dir = output.unwrap_or(&cfg.dataset.root).to_path_buf();
    let labels = write_synthetic_dataset::<S>(&cfg.synthetic, &dir)?;
    println!(
        "wrote {} images ({} styles, {}x{}) to {} — labels in {}",
        cfg.synthetic.num_images,
        cfg.synthetic.num_styles,
        cfg.synthetic.resolution,
        cfg.synthetic.resolution,
        dir.display(),
        labels.display()
    );
    Ok(())
}
