pub mod analysis;
pub mod evaluate;
pub mod prepare;
pub mod report;
pub mod serve;
pub mod train;

use std::path::{Path, PathBuf};

use figdetect::corpus::{CorpusSource, FileDigest, PreparedCorpus};
use figdetect::evaluation::{EvalReport, LoadedModel};
use figdetect::modeling::{BackendCheckpoint, GoldTable, TaskSpec};
use figdetect::prompt::InputFormat;
use figdetect::{Split, TemplateRegistry};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelPlan, Setting};
use crate::error::{CliError, Result};
use crate::run::{digest, read_json};

pub const PLAN_FILE: &str = "plan.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRAINING_LOG: &str = "training_log.jsonl";
pub const REPORTS_DIR: &str = "reports";

/// Record of one `train` invocation, stored as
/// `<out>/experiments/<name>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub setting: Setting,
    pub en_only: bool,
    pub runs: Vec<RunRef>,
    /// Imported accuracies in percent, keyed by `figure-language`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<std::collections::BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRef {
    pub hash: String,
    pub template: String,
    pub training_tasks: Vec<String>,
    pub eval_tasks: Vec<String>,
}

/// A trained run directory.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub plan: ModelPlan,
    pub config: ExperimentConfig,
}

impl RunDir {
    pub fn open(path: &Path) -> Result<Self> {
        if !path.join(CHECKPOINT_DIR).is_dir() {
            return Err(CliError::Data(format!(
                "{} is not a trained run directory (no checkpoint)",
                path.display()
            )));
        }
        let plan: ModelPlan = read_json(&path.join(PLAN_FILE))?;
        let text = std::fs::read_to_string(path.join(CONFIG_FILE))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.join(CONFIG_FILE).display())))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.join(CONFIG_FILE).display())))?;
        Ok(RunDir {
            path: path.to_path_buf(),
            plan,
            config,
        })
    }

    pub fn hash(&self) -> String {
        self.plan.hash()
    }

    pub fn checkpoint_inputs(&self) -> Result<Vec<FileDigest>> {
        let dir = self.path.join(CHECKPOINT_DIR);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| CliError::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        files.iter().map(|p| digest(p)).collect()
    }

    /// Loads the best checkpoint. Gold-answering doubles get the gold
    /// answers of `tasks` over every split.
    pub fn load(
        &self,
        tasks: &[TaskSpec],
        corpus: &dyn CorpusSource,
        registry: &TemplateRegistry,
    ) -> Result<LoadedModel> {
        let ckpt = BackendCheckpoint::load_dir(&self.path.join(CHECKPOINT_DIR))
            .map_err(|e| CliError::Data(format!("{}: {e}", self.path.join(CHECKPOINT_DIR).display())))?;
        let gold = if ckpt.meta.backend.needs_gold() {
            gold_for(tasks, corpus, registry)?
        } else {
            GoldTable::new()
        };
        let backend = ckpt.load(&gold)?;
        Ok(LoadedModel {
            meta: ckpt.meta,
            backend,
        })
    }
}

/// Gold answers of `tasks` over every split that exists.
pub fn gold_for(tasks: &[TaskSpec], corpus: &dyn CorpusSource, registry: &TemplateRegistry) -> Result<GoldTable> {
    let mut gold = GoldTable::new();
    for task in tasks {
        let format = InputFormat::for_task(registry, task)?;
        for split in Split::ALL {
            if let Ok(examples) = corpus.load(task.figure, task.language, *split) {
                gold.add_examples(&format, &examples)?;
            }
        }
    }
    Ok(gold)
}

/// Digests of the prepared files `tasks` read, failing with every missing
/// file named.
pub fn corpus_inputs(corpus: &PreparedCorpus, tasks: &[TaskSpec], splits: &[Split]) -> Result<Vec<FileDigest>> {
    let mut paths = Vec::new();
    for t in tasks {
        for s in splits {
            paths.push(corpus.split_path(t.figure, t.language, *s));
        }
        if splits.contains(&Split::Train) {
            let up = corpus.upsampled_path(t.figure, t.language);
            if up.is_file() {
                paths.push(up);
            }
        }
    }
    paths.sort();
    paths.dedup();
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "missing prepared files (run `figdetect prepare` first): {}",
            missing.join(", ")
        )));
    }
    paths.iter().map(|p| digest(p)).collect()
}

pub fn open_corpus(data: &Path) -> Result<PreparedCorpus> {
    let root =
        std::fs::canonicalize(data).map_err(|e| CliError::Data(format!("prepared corpus {}: {e}", data.display())))?;
    Ok(PreparedCorpus::new(root))
}

/// Every `EvalReport` JSON file directly inside `dir`, sorted by task.
pub fn read_reports(dir: &Path) -> Result<Vec<EvalReport>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.ends_with(crate::run::MANIFEST))
        .collect();
    paths.sort();
    let reports: Vec<EvalReport> = paths.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
    if reports.is_empty() {
        return Err(CliError::Data(format!("no reports in {}", dir.display())));
    }
    Ok(reports)
}

pub fn parse_tasks(list: &[String], template: &figdetect::prompt::TemplateRef) -> Result<Vec<TaskSpec>> {
    list.iter()
        .map(|s| {
            s.parse::<crate::config::TaskKey>()
                .map(|k| k.with_template(template))
                .map_err(|e| CliError::Config(format!("tasks: {e}")))
        })
        .collect()
}
