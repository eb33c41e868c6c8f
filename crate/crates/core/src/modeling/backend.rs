use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backends::{
    AntiOracleBackend, ConstantBackend, ExternalBackend, ExternalSpec, OracleBackend, ScriptedBackend, ToyConfig,
    ToySeq2Seq,
};
use super::TaskSpec;
use crate::corpus::{LabeledExample, Language};
use crate::prompt::{InputFormat, PromptError, PromptInstance};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("fit_step called with an empty batch")]
    EmptyBatch,
    #[error("checkpoint payload is not valid for this backend: {0}")]
    BadPayload(String),
    #[error("adapter process: {0}")]
    Adapter(String),
    #[error("{0}")]
    Internal(String),
}

/// Output of one generation request: the raw string, or a per-item failure.
pub type GenOutput = Result<String, String>;

/// A trainable text-to-text model.
///
/// `fit_step` takes one optimisation step on the batch at learning rate
/// `lr` and returns the batch mean negative log-likelihood of the targets.
/// `generate` decodes greedily and returns exactly one entry per input, in
/// input order. The optimiser is the backend's business; the caller only
/// supplies the learning rate.
pub trait Backend: Send + Sync {
    fn spec(&self) -> BackendSpec;

    fn fit_step(&mut self, batch: &[PromptInstance], lr: f64) -> Result<f64, BackendError>;

    fn generate(&self, inputs: &[String]) -> Vec<GenOutput>;

    /// Serialises the current parameters.
    fn snapshot(&self) -> Result<Vec<u8>, BackendError>;

    /// Replaces the current parameters with a snapshot.
    fn restore(&mut self, payload: &[u8]) -> Result<(), BackendError>;
}

pub(crate) fn check_batch(batch: &[PromptInstance]) -> Result<(), BackendError> {
    if batch.is_empty() {
        Err(BackendError::EmptyBatch)
    } else {
        Ok(())
    }
}

/// Which backend to build, with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Emits the gold verbalization of every known input.
    Oracle,
    /// Emits the wrong verbalization of every known input.
    AntiOracle,
    /// Emits the same string for every input.
    Constant { output: String },
    /// Answers the k-th generate call with accuracy `scores[k]` (the last
    /// entry repeats).
    Scripted { scores: Vec<f64> },
    /// The built-in hashed-feature sequence model.
    Toy(ToyConfig),
    /// A model served by an external process over the line protocol.
    External(ExternalSpec),
}

impl BackendSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BackendSpec::Oracle => "oracle",
            BackendSpec::AntiOracle => "anti_oracle",
            BackendSpec::Constant { .. } => "constant",
            BackendSpec::Scripted { .. } => "scripted",
            BackendSpec::Toy(_) => "toy",
            BackendSpec::External(_) => "external",
        }
    }

    /// True for the harness doubles that answer from a gold table.
    pub fn needs_gold(&self) -> bool {
        matches!(
            self,
            BackendSpec::Oracle | BackendSpec::AntiOracle | BackendSpec::Scripted { .. }
        )
    }

    /// Everything else in this crate is deterministic; external models
    /// depend on the adapter.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, BackendSpec::External(_))
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            BackendSpec::Scripted { scores } if scores.is_empty() => Err("backend.scores: must not be empty".into()),
            BackendSpec::Scripted { scores } if scores.iter().any(|s| !(0.0..=1.0).contains(s)) => {
                Err("backend.scores: entries must lie in [0, 1]".into())
            }
            BackendSpec::Toy(cfg) => cfg.validate(),
            BackendSpec::External(ext) if ext.command.is_empty() => Err("backend.command: must not be empty".into()),
            _ => Ok(()),
        }
    }

    /// Builds a fresh backend. Gold-answering doubles read `gold`; the
    /// others ignore it.
    pub fn instantiate(&self, gold: &GoldTable) -> Result<Box<dyn Backend>, BackendError> {
        Ok(match self {
            BackendSpec::Oracle => Box::new(OracleBackend::new(gold.clone())),
            BackendSpec::AntiOracle => Box::new(AntiOracleBackend::new(gold.clone())),
            BackendSpec::Constant { output } => Box::new(ConstantBackend::new(output.clone())),
            BackendSpec::Scripted { scores } => Box::new(ScriptedBackend::new(scores.clone(), gold.clone())),
            BackendSpec::Toy(cfg) => Box::new(ToySeq2Seq::new(cfg.clone())),
            BackendSpec::External(ext) => Box::new(ExternalBackend::spawn(ext.clone())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntry {
    pub correct: String,
    pub wrong: Option<String>,
}

/// Prompt-to-answer table consulted by the oracle-style doubles.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldTable {
    entries: HashMap<String, GoldEntry>,
}

impl GoldTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, input: String, correct: String, wrong: Option<String>) {
        self.entries.insert(input, GoldEntry { correct, wrong });
    }

    pub fn add_examples(&mut self, format: &InputFormat, examples: &[LabeledExample]) -> Result<(), PromptError> {
        for ex in examples {
            let input = format.input(ex.figure, &ex.text)?;
            let correct = format.target(ex.label, ex.figure).to_string();
            let wrong = format.target(ex.label.flip(), ex.figure).to_string();
            self.insert(input, correct, Some(wrong));
        }
        Ok(())
    }

    pub fn add_instances(&mut self, instances: &[PromptInstance], format: &InputFormat) {
        for inst in instances {
            let wrong = format.target(inst.label.flip(), inst.origin.task.figure).to_string();
            self.insert(inst.input_text.clone(), inst.target_text.clone(), Some(wrong));
        }
    }

    pub fn get(&self, input: &str) -> Option<&GoldEntry> {
        self.entries.get(input)
    }

    pub fn merge(&mut self, other: &GoldTable) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by input, for stable serialisation.
    pub fn sorted(&self) -> Vec<(&String, &GoldEntry)> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

/// Sidecar metadata stored next to every checkpoint payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub backend: BackendSpec,
    pub step: u64,
    pub best_score: Option<f64>,
    pub config_hash: String,
    pub training_tasks: Vec<TaskSpec>,
}

impl CheckpointMeta {
    pub fn training_languages(&self) -> Vec<Language> {
        let mut langs: Vec<Language> = self.training_tasks.iter().map(|t| t.language).collect();
        langs.sort();
        langs.dedup();
        langs
    }
}

/// Trained backend state plus metadata. The payload is opaque outside the
/// backend that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendCheckpoint {
    pub meta: CheckpointMeta,
    pub payload: Vec<u8>,
}

pub const CHECKPOINT_PAYLOAD: &str = "checkpoint.bin";
pub const CHECKPOINT_META: &str = "checkpoint.json";

impl BackendCheckpoint {
    /// Rebuilds the backend and loads the payload into it.
    pub fn load(&self, gold: &GoldTable) -> Result<Box<dyn Backend>, BackendError> {
        let mut backend = self.meta.backend.instantiate(gold)?;
        backend.restore(&self.payload)?;
        Ok(backend)
    }

    /// Writes `checkpoint.bin` and `checkpoint.json` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let payload = dir.join(CHECKPOINT_PAYLOAD);
        let meta = dir.join(CHECKPOINT_META);
        fs::write(&payload, &self.payload)?;
        let mut json = serde_json::to_vec_pretty(&self.meta).map_err(std::io::Error::other)?;
        json.push(b'\n');
        fs::write(&meta, json)?;
        Ok((payload, meta))
    }

    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let payload = fs::read(dir.join(CHECKPOINT_PAYLOAD))?;
        let meta: CheckpointMeta =
            serde_json::from_slice(&fs::read(dir.join(CHECKPOINT_META))?).map_err(std::io::Error::other)?;
        Ok(BackendCheckpoint { meta, payload })
    }
}
