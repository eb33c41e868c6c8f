//! Deterministic test doubles.

use std::f64::consts::LN_2;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::modeling::backend::{check_batch, Backend, BackendError, BackendSpec, GenOutput, GoldTable};
use crate::prompt::PromptInstance;

const NO_GOLD: &str = "input not in gold table";

fn empty_payload(payload: &[u8]) -> Result<(), BackendError> {
    if payload.is_empty() {
        Ok(())
    } else {
        Err(BackendError::BadPayload(format!(
            "expected empty payload, got {} bytes",
            payload.len()
        )))
    }
}

/// Answers every known input with its gold verbalization.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    gold: GoldTable,
}

impl OracleBackend {
    pub fn new(gold: GoldTable) -> Self {
        OracleBackend { gold }
    }
}

impl Backend for OracleBackend {
    fn spec(&self) -> BackendSpec {
        BackendSpec::Oracle
    }

    fn fit_step(&mut self, batch: &[PromptInstance], _lr: f64) -> Result<f64, BackendError> {
        check_batch(batch)?;
        for inst in batch {
            if self.gold.get(&inst.input_text).is_none() {
                self.gold
                    .insert(inst.input_text.clone(), inst.target_text.clone(), None);
            }
        }
        Ok(0.0)
    }

    fn generate(&self, inputs: &[String]) -> Vec<GenOutput> {
        inputs
            .iter()
            .map(|i| {
                self.gold
                    .get(i)
                    .map(|g| g.correct.clone())
                    .ok_or_else(|| NO_GOLD.to_string())
            })
            .collect()
    }

    fn snapshot(&self) -> Result<Vec<u8>, BackendError> {
        Ok(Vec::new())
    }

    fn restore(&mut self, payload: &[u8]) -> Result<(), BackendError> {
        empty_payload(payload)
    }
}

/// Answers every known input with the opposite verbalization.
#[derive(Debug, Clone)]
pub struct AntiOracleBackend {
    gold: GoldTable,
}

impl AntiOracleBackend {
    pub fn new(gold: GoldTable) -> Self {
        AntiOracleBackend { gold }
    }
}

impl Backend for AntiOracleBackend {
    fn spec(&self) -> BackendSpec {
        BackendSpec::AntiOracle
    }

    fn fit_step(&mut self, batch: &[PromptInstance], _lr: f64) -> Result<f64, BackendError> {
        check_batch(batch)?;
        Ok(LN_2)
    }

    fn generate(&self, inputs: &[String]) -> Vec<GenOutput> {
        inputs
            .iter()
            .map(|i| {
                self.gold
                    .get(i)
                    .and_then(|g| g.wrong.clone())
                    .ok_or_else(|| NO_GOLD.to_string())
            })
            .collect()
    }

    fn snapshot(&self) -> Result<Vec<u8>, BackendError> {
        Ok(Vec::new())
    }

    fn restore(&mut self, payload: &[u8]) -> Result<(), BackendError> {
        empty_payload(payload)
    }
}

/// Emits the same string for every input.
#[derive(Debug, Clone)]
pub struct ConstantBackend {
    output: String,
}

impl ConstantBackend {
    pub fn new(output: String) -> Self {
        ConstantBackend { output }
    }
}

impl Backend for ConstantBackend {
    fn spec(&self) -> BackendSpec {
        BackendSpec::Constant {
            output: self.output.clone(),
        }
    }

    fn fit_step(&mut self, batch: &[PromptInstance], _lr: f64) -> Result<f64, BackendError> {
        check_batch(batch)?;
        Ok(LN_2)
    }

    fn generate(&self, inputs: &[String]) -> Vec<GenOutput> {
        inputs.iter().map(|_| Ok(self.output.clone())).collect()
    }

    fn snapshot(&self) -> Result<Vec<u8>, BackendError> {
        Ok(Vec::new())
    }

    fn restore(&mut self, payload: &[u8]) -> Result<(), BackendError> {
        empty_payload(payload)
    }
}

#[derive(Serialize, Deserialize)]
struct ScriptState {
    calls: usize,
}

/// Replays a fixed accuracy curve: the k-th `generate` call answers the
/// first `round(scores[k] * n)` inputs correctly and the rest wrongly.
/// Calls past the end of the script reuse the last score.
#[derive(Debug)]
pub struct ScriptedBackend {
    scores: Vec<f64>,
    gold: GoldTable,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(scores: Vec<f64>, gold: GoldTable) -> Self {
        ScriptedBackend {
            scores,
            gold,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for ScriptedBackend {
    fn spec(&self) -> BackendSpec {
        BackendSpec::Scripted {
            scores: self.scores.clone(),
        }
    }

    fn fit_step(&mut self, batch: &[PromptInstance], _lr: f64) -> Result<f64, BackendError> {
        check_batch(batch)?;
        Ok(LN_2)
    }

    fn generate(&self, inputs: &[String]) -> Vec<GenOutput> {
        let k = self.calls.fetch_add(1, Ordering::SeqCst);
        let score = self.scores.get(k).or(self.scores.last()).copied().unwrap_or(0.0);
        let n_right = (score * inputs.len() as f64).round() as usize;
        inputs
            .iter()
            .enumerate()
            .map(|(i, input)| {
                let g = self.gold.get(input).ok_or_else(|| NO_GOLD.to_string())?;
                if i < n_right {
                    Ok(g.correct.clone())
                } else {
                    g.wrong.clone().ok_or_else(|| "no wrong answer recorded".to_string())
                }
            })
            .collect()
    }

    fn snapshot(&self) -> Result<Vec<u8>, BackendError> {
        serde_json::to_vec(&ScriptState { calls: self.calls() }).map_err(|e| BackendError::Internal(e.to_string()))
    }

    fn restore(&mut self, payload: &[u8]) -> Result<(), BackendError> {
        let state: ScriptState =
            serde_json::from_slice(payload).map_err(|e| BackendError::BadPayload(e.to_string()))?;
        self.calls.store(state.calls, Ordering::SeqCst);
        Ok(())
    }
}
