use std::path::Path;

use anyhow::{bail, Context, Result};
use quadmotion::synthdata::CorpusConfig;
use quadmotion::trainer::{ReconstructionMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::Invalid;

/// Name of the effective configuration written next to every command's output.
pub const ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Motions drawn per invocation.
    pub count: usize,
    /// Segments per motion; more than one joins them with optimized transitions.
    pub segments: usize,
    /// Frames per segment; `0` uses `train.frames`.
    pub frames: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            count: 1400,
            segments: 1,
            frames: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub mode: ReconstructionMode,
    /// Prior samples scored against the held-out clips by motion chamfer distance.
    pub samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: ReconstructionMode::Vae,
            samples: 1400,
        }
    }
}

/// Everything a command may read from the configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for data generation, sampling and evaluation; training uses `train.seed`.
    pub seed: u64,
    pub data: CorpusConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        if self.sample.count == 0 {
            bail!(Invalid("sample.count must be positive".into()));
        }
        if self.sample.segments == 0 {
            bail!(Invalid("sample.segments must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_frames(&self) -> usize {
        if self.sample.frames == 0 {
            self.train.frames
        } else {
            self.sample.frames
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing configuration")
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `key` (dotted path) in `root`. Every path segment must already exist.
pub fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            toml::Value::Table(t) => match t.get_mut(part) {
                Some(v) => v,
                None => bail!(Invalid(format!("unknown configuration key `{key}`"))),
            },
            _ => bail!(Invalid(format!(
                "`{key}` does not name a configuration field"
            ))),
        };
    }
    if node.is_table() {
        bail!(Invalid(format!(
            "`{key}` is a section; set one of its fields instead"
        )));
    }
    *node = parse_value(raw);
    Ok(())
}

/// Reads `file` (or the defaults), applies `key=value` overrides and validates the result.
pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let base = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
            let cfg: RunConfig =
                toml::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
            cfg
        }
        None => RunConfig::default(),
    };
    let mut tree = toml::Value::try_from(&base).context("converting configuration")?;
    for item in overrides {
        let Some((key, value)) = item.split_once('=') else {
            bail!(Invalid(format!(
                "override `{item}` is not of the form key=value"
            )));
        };
        apply_override(&mut tree, key.trim(), value.trim())?;
    }
    let cfg: RunConfig = tree
        .try_into()
        .map_err(|e: toml::de::Error| Invalid(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn echo(cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(ECHO_FILE), cfg.to_toml()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = load(
            None,
            &[
                "train.weights.kl=0.01".into(),
                "seed=7".into(),
                "eval.mode=\"single_frame\"".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.weights.kl, 0.01);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.eval.mode, ReconstructionMode::SingleFrame);
    }

    #[test]
    fn bare_words_are_strings() {
        let cfg = load(None, &["eval.mode=vae".into()]).unwrap();
        assert_eq!(cfg.eval.mode, ReconstructionMode::Vae);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [
            "train.weights.klx=1",
            "nope=1",
            "train.weights=1",
            "seed.x=1",
        ] {
            let err = load(None, &[bad.into()]).unwrap_err();
            assert!(err.downcast_ref::<Invalid>().is_some(), "{bad}: {err}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let cfg = load(None, &["train.frames=6".into(), "data.frames=6".into()]).unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
