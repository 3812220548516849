//! JSON run configuration. Unknown keys are rejected at every level; missing
//! keys take their defaults, so `{}` is a complete configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::gan::TrainConfig;
use crate::generator::GeneratorConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub steps: u64,
    /// Generator checkpoint interval in steps; 0 writes only the final one.
    pub checkpoint_every: u64,
    /// Sample grid interval in steps; 0 disables periodic samples.
    pub sample_every: u64,
    pub sample_count: usize,
    pub output_dir: PathBuf,
    /// Generator weights to start from instead of a fresh initialisation.
    pub init_checkpoint: Option<PathBuf>,
    /// Freeze the shape branch (fine-tune the appearance branch only).
    pub freeze_nerf: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generator: GeneratorConfig::default(),
            train: TrainConfig::default(),
            steps: 500,
            checkpoint_every: 100,
            sample_every: 100,
            sample_count: 4,
            output_dir: PathBuf::from("runs/default"),
            init_checkpoint: None,
            freeze_nerf: false,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.train.validate()?;
        ensure!(self.sample_count > 0, Config, "sample_count must be positive");
        ensure!(
            !self.output_dir.as_os_str().is_empty(),
            Config,
            "output_dir must not be empty"
        );
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(RunConfig::parse("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected_at_any_depth() {
        assert!(RunConfig::parse(r#"{"stepz": 3}"#).is_err());
        assert!(RunConfig::parse(r#"{"train": {"lr": 0.1}}"#).is_err());
        assert!(RunConfig::parse(r#"{"generator": {"nerf": {"width": 4}}}"#).is_err());
        assert!(RunConfig::parse(r#"{"train": {"pitch": {"kind": "fixed", "value": 1, "x": 2}}}"#).is_err());
    }

    #[test]
    fn too_many_rays_rejected() {
        let text = r#"{"train": {"schedule": [{"start_step": 0, "resolution": 4, "n_r": 17}]}}"#;
        let err = RunConfig::parse(text).unwrap_err().to_string();
        assert!(err.contains("n_r"), "{err}");
    }

    #[test]
    fn partial_override() {
        let c = RunConfig::parse(r#"{"steps": 7, "train": {"batch_size": 2, "seed": 9}}"#).unwrap();
        assert_eq!((c.steps, c.train.batch_size, c.train.seed), (7, 2, 9));
        assert_eq!(c.train.lr_g, TrainConfig::default().lr_g);
    }
}
