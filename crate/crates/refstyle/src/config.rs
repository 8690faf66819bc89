//! Declarative run configuration: one TOML file describes the network,
//! dataset, training recipe and evaluation settings. Unknown keys are
//! rejected with the offending key and line; defaults reproduce the
//! published full-scale recipe; the echoed effective config parses back
//! to the identical value.

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::evaluation::EvalOptions;
use crate::networks::NetworkSpec;
use crate::synthetic::SyntheticStyleSpec;
use crate::trainer::{RunDirs, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Name of the run; output lands in `<out_dir>/<experiment>/`.
    pub experiment: String,
    pub out_dir: PathBuf,
    pub network: NetworkSpec,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub synthetic: SyntheticStyleSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: "run".into(),
            out_dir: PathBuf::from("runs"),
            network: NetworkSpec::default(),
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            synthetic: SyntheticStyleSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experiment.is_empty() {
            return Err(Error::Config("experiment name must not be empty".into()));
        }
        self.network.plan()?;
        self.dataset.validate()?;
        self.train.validate()?;
        self.synthetic.validate()?;
        if self.eval.references_per_input == 0 || self.eval.batch == 0 {
            return Err(Error::Config(
                "eval.references_per_input and eval.batch must be positive".into(),
            ));
        }
        if self.dataset.resolution != self.network.resolution {
            return Err(Error::Config(format!(
                "dataset.resolution {} does not match network.resolution {}",
                self.dataset.resolution, self.network.resolution
            )));
        }
        Ok(())
    }

    /// Output directory layout of this run.
    pub fn run_dirs(&self) -> RunDirs {
        RunDirs::new(self.out_dir.join(&self.experiment))
    }

    /// Serialize the effective config; parsing the result reproduces
    /// `self` exactly.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(self).expect("a validated config always serializes")
    }
}

/// Parse and validate a config from TOML text. Syntax errors, unknown
/// keys and type mismatches surface with the key name and line.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// [`parse_config_str`] for a file, with the path attached to errors.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Split a `--set key.path=value` argument.
pub fn parse_set_arg(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((key, value)) if !key.trim().is_empty() => {
            Ok((key.trim().to_string(), value.trim().to_string()))
        }
        _ => Err(Error::Config(format!(
            "override {arg:?} must have the form key.path=value"
        ))),
    }
}

fn parse_literal(literal: &str) -> toml::Value {
    // Interpret the right-hand side as a TOML literal (so numbers, bools
    // and arrays work), falling back to a bare string.
    toml::from_str::<toml::Value>(&format!("v = {literal}"))
        .ok()
        .and_then(|v| v.get("v").cloned())
        .unwrap_or_else(|| toml::Value::String(literal.to_string()))
}

fn set_dotted(root: &mut toml::Value, path: &str, literal: &str) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {path:?} has an empty segment")));
    }
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        let table = cur.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override key {path:?} descends into a non-table value"))
        })?;
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = cur.as_table_mut().ok_or_else(|| {
        Error::Config(format!("override key {path:?} descends into a non-table value"))
    })?;
    table.insert(parts[parts.len() - 1].to_string(), parse_literal(literal));
    Ok(())
}

/// Apply dotted-key overrides (`key.path=value`) on top of a base config,
/// re-validating the result. Unknown keys are rejected by name.
pub fn with_overrides(base: &RunConfig, sets: &[(String, String)]) -> Result<RunConfig> {
    if sets.is_empty() {
        return Ok(base.clone());
    }
    let mut value =
        toml::Value::try_from(base).map_err(|e| Error::Config(format!("serialize: {e}")))?;
    for (path, literal) in sets {
        set_dotted(&mut value, path, literal)?;
    }
    let cfg: RunConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_materializes_the_published_defaults() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg.train.contrastive.temperature, 0.07);
        assert_eq!(cfg.train.contrastive.queue_capacity, 2048);
        assert_eq!(cfg.train.contrastive.patch_spec.count, 4);
        assert_eq!(cfg.train.loss_weights.lambda_cyc, 1.0);
        assert_eq!(cfg.train.loss_weights.lambda_ct_d, 0.1);
        assert_eq!(cfg.train.loss_weights.lambda_ct_g, 0.1);
        assert_eq!(cfg.train.lr, 5e-5);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.network.resolution, 128);
        assert_eq!(cfg.dataset.resolution, 128);
        assert_eq!(cfg.experiment, "run");
    }

    #[test]
    fn echo_round_trips_exactly() {
        let mut cfg = RunConfig::default();
        cfg.experiment = "ablation-m8".into();
        cfg.train.contrastive.patch_spec.count = 8;
        cfg.train.seed = 123;
        cfg.dataset.center_crop = Some(178);
        cfg.validate().unwrap();
        let echoed = cfg.echo();
        let reparsed = parse_config_str(&echoed).unwrap();
        assert_eq!(reparsed, cfg, "echo must parse back to the identical config");
    }

    #[test]
    fn unknown_keys_are_named_with_their_line() {
        let err = parse_config_str("[train]\nbatch_size = 32\nbogus_key = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus_key"), "must name the key, got: {msg}");
        assert!(msg.contains("line 3"), "must name the line, got: {msg}");
    }

    #[test]
    fn type_mismatches_are_located() {
        let err = parse_config_str("[train]\nlr = \"fast\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "got: {msg}");
    }

    #[test]
    fn invariant_violations_are_rejected() {
        let err = parse_config_str("[train]\nbatch_size = 31\n").unwrap_err();
        assert!(err.to_string().contains("31"), "odd batch must be rejected: {err}");

        let err = parse_config_str("[dataset]\nresolution = 64\n").unwrap_err();
        assert!(
            err.to_string().contains("does not match network.resolution"),
            "resolution cross-check: {err}"
        );
    }

    #[test]
    fn dotted_overrides_reach_nested_fields() {
        let base = RunConfig::default();
        let sets = vec![
            ("train.contrastive.patch_spec.count".to_string(), "8".to_string()),
            ("train.augmentation.crop_scale_min".to_string(), "0.5".to_string()),
            ("experiment".to_string(), "m8".to_string()),
        ];
        let cfg = with_overrides(&base, &sets).unwrap();
        assert_eq!(cfg.train.contrastive.patch_spec.count, 8);
        assert_eq!(cfg.train.augmentation.crop_scale_min, 0.5);
        assert_eq!(cfg.experiment, "m8");

        let bad_key = vec![("train.bogus".to_string(), "1".to_string())];
        let err = with_overrides(&base, &bad_key).unwrap_err();
        assert!(err.to_string().contains("bogus"), "got: {err}");

        let bad_value = vec![("train.batch_size".to_string(), "true".to_string())];
        assert!(with_overrides(&base, &bad_value).is_err());

        let invalid = vec![("train.batch_size".to_string(), "31".to_string())];
        assert!(with_overrides(&base, &invalid).is_err(), "overrides are re-validated");
    }

    #[test]
    fn set_argument_syntax() {
        assert_eq!(
            parse_set_arg("a.b=3").unwrap(),
            ("a.b".to_string(), "3".to_string())
        );
        assert_eq!(
            parse_set_arg("name = \"x y\"").unwrap(),
            ("name".to_string(), "\"x y\"".to_string())
        );
        assert!(parse_set_arg("no-equals").is_err());
        assert!(parse_set_arg("=3").is_err());
    }

    #[test]
    fn run_dirs_layout() {
        let mut cfg = RunConfig::default();
        cfg.out_dir = PathBuf::from("/tmp/exp");
        cfg.experiment = "alpha".into();
        let dirs = cfg.run_dirs();
        assert_eq!(dirs.checkpoints(), PathBuf::from("/tmp/exp/alpha/checkpoints"));
        assert_eq!(dirs.samples(), PathBuf::from("/tmp/exp/alpha/samples"));
        assert_eq!(dirs.metrics(), PathBuf::from("/tmp/exp/alpha/metrics"));
        assert_eq!(dirs.logs(), PathBuf::from("/tmp/exp/alpha/logs"));
    }
}
