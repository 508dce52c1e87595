use std::path::Path;

use serde::{Deserialize, Serialize};
use tst_core::backbone::{BackboneConfig, TrainConfig};
use tst_core::segmenter::PipelineConfig;
use tst_core::{Error, Result};

/// Backbone settings not implied by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub stage_channels: Vec<usize>,
    /// Weight initialization seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let b = BackboneConfig::default();
        Self {
            stage_channels: b.stage_channels,
            seed: b.seed,
        }
    }
}

/// Effective configuration of a run: built-in defaults, then the config
/// file, then command-line flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn backbone(&self) -> BackboneConfig {
        self.pipeline
            .backbone_config(self.model.stage_channels.clone(), self.model.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.backbone().validate()?;
        self.train.optimizer.validate()?;
        if self.train.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("run_config.json");
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })
    }
}
