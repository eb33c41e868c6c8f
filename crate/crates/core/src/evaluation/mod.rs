//! Scoring, the evaluation protocols and report rendering.

mod protocols;
mod render;
mod score;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusSource, Label, Split};
use crate::modeling::{Backend, CheckpointMeta, TaskSpec};
use crate::prompt::{InputFormat, Prediction, PromptError, TemplateRegistry};

pub use protocols::{
    cross_figurative_compare, prompt_diff, transfer_matrix, valid_test_gap, zero_shot_protocol, CrossFigurativeRow,
    CrossFigurativeTable, GapRow, GapTable, PromptDiffEntry, PromptDiffReport, TransferMatrix, TransferRow,
};
pub use render::{heatmap_svg, render_reports, ColorScale, ResultsTable};
pub use score::{score, score_with, Confusion, Score};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} labels but {parsed} predictions were given")]
    LengthMismatch { gold: usize, parsed: usize },
    #[error("nothing to score")]
    Empty,
    #[error("{task} {split}: {source}")]
    MissingSplit {
        task: TaskSpec,
        split: Split,
        #[source]
        source: CorpusError,
    },
    #[error("{task}: {source}")]
    Prompt {
        task: TaskSpec,
        #[source]
        source: PromptError,
    },
    #[error("missing transfer-matrix rows: {}", .0.join(", "))]
    MissingRows(Vec<String>),
    #[error("report sets do not cover the same cells; unmatched: {}", .0.join(", "))]
    CellMismatch(Vec<String>),
    #[error("duplicate report for {0}")]
    DuplicateReport(String),
}

/// A backend together with the metadata of the checkpoint it was loaded
/// from.
pub struct LoadedModel {
    pub meta: CheckpointMeta,
    pub backend: Box<dyn Backend>,
}

impl std::fmt::Debug for LoadedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedModel")
            .field("meta", &self.meta)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerExample {
    pub id: String,
    pub gold: Label,
    /// Raw generated text; absent when generation failed for this input.
    pub predicted_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub parsed: Prediction,
}

/// Result of evaluating one model on one split of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskSpec,
    pub split: Split,
    pub template_id: String,
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub confusion_row_percent: [[f64; 2]; 2],
    pub unparsed_count: u64,
    pub generation_errors: u64,
    /// True when the model never saw the task's language in training.
    pub zero_shot: bool,
    pub checkpoint: CheckpointMeta,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_example: Option<Vec<PerExample>>,
}

impl EvalReport {
    /// Accuracy in percent, rounded to two decimals as in the printed tables.
    pub fn accuracy_percent(&self) -> f64 {
        (self.accuracy * 10_000.0).round() / 100.0
    }

    /// `figure-language` key shared by reports of the same task under
    /// different templates.
    pub fn cell(&self) -> String {
        self.task.key()
    }

    /// Recomputes the score from the per-example dump, if present.
    pub fn rescore(&self) -> Option<Result<Score, EvalError>> {
        let dump = self.per_example.as_ref()?;
        let gold: Vec<Label> = dump.iter().map(|p| p.gold).collect();
        let parsed: Vec<Prediction> = dump.iter().map(|p| p.parsed).collect();
        Some(score(&gold, &parsed))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Keep the per-example dump in the report.
    pub keep_examples: bool,
}

/// Renders the split's examples, generates, parses and scores.
pub fn evaluate(
    model: &LoadedModel,
    task: &TaskSpec,
    split: Split,
    corpus: &dyn CorpusSource,
    registry: &TemplateRegistry,
    options: EvalOptions,
) -> Result<EvalReport, EvalError> {
    let examples = corpus
        .load(task.figure, task.language, split)
        .map_err(|source| EvalError::MissingSplit {
            task: task.clone(),
            split,
            source,
        })?;
    let prompt_err = |source| EvalError::Prompt {
        task: task.clone(),
        source,
    };
    let format = InputFormat::for_task(registry, task).map_err(prompt_err)?;
    let inputs: Vec<String> = examples
        .iter()
        .map(|ex| format.input(task.figure, &ex.text))
        .collect::<Result<_, _>>()
        .map_err(prompt_err)?;
    let outputs = model.backend.generate(&inputs);
    let dump: Vec<PerExample> = examples
        .iter()
        .zip(outputs)
        .map(|(ex, out)| match out {
            Ok(raw) => PerExample {
                id: ex.id.clone(),
                gold: ex.label,
                parsed: format.parse(&raw, task.figure),
                predicted_raw: Some(raw),
                error: None,
            },
            Err(e) => PerExample {
                id: ex.id.clone(),
                gold: ex.label,
                predicted_raw: None,
                error: Some(e),
                parsed: Prediction::Unparsed,
            },
        })
        .collect();
    let gold: Vec<Label> = dump.iter().map(|p| p.gold).collect();
    let parsed: Vec<Prediction> = dump.iter().map(|p| p.parsed).collect();
    let s = score(&gold, &parsed)?;
    let zero_shot = !model.meta.training_languages().contains(&task.language);
    Ok(EvalReport {
        task: task.clone(),
        split,
        template_id: format.template_id(),
        n: s.n,
        correct: s.correct,
        accuracy: s.accuracy,
        confusion: s.confusion,
        confusion_row_percent: s.confusion.row_percent(),
        unparsed_count: s.unparsed_count,
        generation_errors: dump.iter().filter(|p| p.error.is_some()).count() as u64,
        zero_shot,
        checkpoint: model.meta.clone(),
        config_hash: model.meta.config_hash.clone(),
        per_example: options.keep_examples.then_some(dump),
    })
}
