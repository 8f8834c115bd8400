//! Pipeline configuration, loaded from JSON or TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::SequencerConfig;
use crate::anomaly::{default_screening, ScreeningVariable, DEFAULT_UNUSABLE_FRACTION};
use crate::error::{Error, Result};
use crate::hmm::{default_pool, ModelConfig};
use crate::ingest::DEFAULT_EPOCH_LENGTH;
use crate::sessions::SessionConfig;
use crate::DAY_SECONDS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub epoch_length: f64,
    pub screening: Vec<ScreeningVariable>,
    /// Subjects whose abnormal share exceeds this are flagged unusable.
    pub unusable_fraction: f64,
    pub hmm_pool: Vec<ModelConfig>,
    /// End of the HMM bootstrap window, in seconds after each subject's origin.
    pub initial_end_seconds: f64,
    pub sequencer: SequencerConfig,
    pub sessions: SessionConfig,
    /// Wall-clock hour at the origin for subjects whose manifest entry omits it.
    pub origin_clock_hours: f64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Worker threads for subject-level parallelism; all cores when absent.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            epoch_length: DEFAULT_EPOCH_LENGTH,
            screening: default_screening(),
            unusable_fraction: DEFAULT_UNUSABLE_FRACTION,
            hmm_pool: default_pool(),
            initial_end_seconds: DAY_SECONDS,
            sequencer: SequencerConfig::default(),
            sessions: SessionConfig::default(),
            origin_clock_hours: 0.0,
            seed: 0,
            output_dir: None,
            workers: None,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML when the extension is `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epoch_length > 0.0 && self.epoch_length.is_finite()) {
            return Err(Error::Config(format!(
                "epoch length must be positive, got {}",
                self.epoch_length
            )));
        }
        if !(0.0..=1.0).contains(&self.unusable_fraction) {
            return Err(Error::Config("unusable fraction must lie in [0, 1]".into()));
        }
        if self.hmm_pool.is_empty() {
            return Err(Error::Config("HMM config pool is empty".into()));
        }
        for m in &self.hmm_pool {
            m.validate()?;
        }
        if !(self.initial_end_seconds > self.epoch_length) {
            return Err(Error::Config("initial window must span more than one epoch".into()));
        }
        self.sequencer.in_epochs(self.epoch_length)?;
        self.sessions.validate()?;
        if !(0.0..24.0).contains(&self.origin_clock_hours) {
            return Err(Error::Config("origin clock hour must lie in [0, 24)".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
