//! Run artifacts: the versioned JSON checkpoint, the per-epoch JSONL
//! stream and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{AdamState, Encoder};
use crate::error::{Error, Result};
use crate::linalg::{RngState, RNG_ALGORITHM};
use crate::trainer::{EpochReport, TrainConfig, TrainOutcome};

pub const CHECKPOINT_FORMAT: &str = "cluster-contrast-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EPOCHS_FILE: &str = "epochs.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub encoder: Encoder,
    pub rng_algorithm: String,
    pub rng: RngState,
    pub optimizer: AdamState,
    pub reports: Vec<EpochReport>,
}

impl Checkpoint {
    pub fn from_outcome(config: &TrainConfig, outcome: &TrainOutcome) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            encoder: outcome.encoder.clone(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            rng: outcome.rng,
            optimizer: outcome.optimizer.clone(),
            reports: outcome.reports.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

/// Appends one JSON object per line.
pub struct EpochLog {
    path: PathBuf,
    file: fs::File,
}

impl EpochLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(EpochLog {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, report: &EpochReport) -> Result<()> {
        let line = serde_json::to_string(report)?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_epochs(path: &Path) -> Result<Vec<EpochReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_dir: PathBuf,
    pub command: String,
    pub config: serde_json::Value,
    pub version: String,
    pub git: Option<String>,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
    pub outcome: String,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
