use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use figdetect::corpus::{CorpusSource, FileDigest, PreparedCorpus};
use figdetect::evaluation::{evaluate, render_reports, EvalOptions, LoadedModel};
use figdetect::modeling::{build_mixture, BackendSpec, GoldTable, LogEvent, TrainError, TrainingLog, ValidationSet};
use figdetect::reference::{MAIN_RESULTS, TASK_ORDER, ZERO_SHOT_RESULTS};
use figdetect::{Split, TemplateRegistry};
use log::{info, warn};

use super::{
    corpus_inputs, gold_for, open_corpus, ExperimentRecord, RunRef, CHECKPOINT_DIR, CONFIG_FILE, PLAN_FILE,
    REPORTS_DIR, TRAINING_LOG,
};
use crate::config::{resolve, BaselineSource, ExperimentConfig, ModelPlan, Overrides, TaskKey};
use crate::error::{CliError, Result};
use crate::run::{pretty_json, unix_now, Artifacts, DirLock, RunManifest, MANIFEST};

/// Experiment selection shared by `train` and `config`.
#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment file (TOML). Its keys override the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset; overrides `preset` in the file.
    #[arg(long)]
    pub preset: Option<String>,
    /// Experiment name, used for the record under `<out>/experiments/`.
    #[arg(long)]
    pub name: Option<String>,
    /// Comma-separated `figure-language` tasks.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
    /// Comma-separated template ids (`vanilla` for the vanilla settings).
    #[arg(long, value_delimiter = ',')]
    pub template: Option<Vec<String>>,
    /// Backend kind: oracle, anti_oracle, constant, scripted, toy, external.
    #[arg(long)]
    pub backend: Option<String>,
    /// Adapter command line for the external backend, split on whitespace.
    #[arg(long)]
    pub adapter: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Prepared corpus directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output root; runs go to `<out>/runs/<config-hash>/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let flags = Overrides {
            preset: self.preset.clone(),
            name: self.name.clone(),
            tasks: self.tasks.clone(),
            templates: self.template.clone(),
            backend: self.backend.clone(),
            adapter: self
                .adapter
                .as_ref()
                .map(|a| a.split_whitespace().map(String::from).collect()),
            seed: self.seed,
            max_steps: self.max_steps,
            data: self.data.clone(),
            out: self.out.clone(),
        };
        resolve(self.config.as_deref(), &flags)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Retrain runs whose manifest is current.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Also list the models the experiment trains, with their run hashes.
    #[arg(long)]
    pub plans: bool,
}

pub fn show_config(args: ConfigArgs) -> Result<()> {
    let config = args.experiment.resolve()?;
    print!("{}", config.to_toml());
    if args.plans {
        println!();
        for p in config.plans() {
            let tasks: Vec<String> = p.training_tasks.iter().map(|t| t.key()).collect();
            println!(
                "# run {}  template {}  trains on {}",
                p.hash(),
                p.template,
                tasks.join(",")
            );
        }
    }
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut config = args.experiment.resolve()?;
    let record = if config.setting.trains() {
        let corpus = open_corpus(&config.data)?;
        config.data = corpus.root().to_path_buf();
        let plans = config.plans();
        // every input is checked before anything is written
        let inputs: Vec<Vec<FileDigest>> = plans.iter().map(|p| plan_inputs(&corpus, p)).collect::<Result<_>>()?;
        let registry = TemplateRegistry::builtin();
        let mut runs = Vec::new();
        for (plan, inputs) in plans.iter().zip(inputs) {
            runs.push(train_one(plan, inputs, &config, &corpus, &registry, args.force)?);
        }
        ExperimentRecord {
            name: config.name.clone(),
            setting: config.setting,
            en_only: config.en_only,
            runs,
            baseline: None,
        }
    } else {
        ExperimentRecord {
            name: config.name.clone(),
            setting: config.setting,
            en_only: config.en_only,
            runs: Vec::new(),
            baseline: Some(import_baseline(&config)?),
        }
    };
    let path = config.out.join("experiments").join(format!("{}.json", config.name));
    std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| CliError::io(&path, e))?;
    std::fs::write(&path, pretty_json(&record)).map_err(|e| CliError::io(&path, e))?;
    info!("experiment record written to {}", path.display());
    Ok(())
}

fn plan_inputs(corpus: &PreparedCorpus, plan: &ModelPlan) -> Result<Vec<FileDigest>> {
    let mut v = corpus_inputs(corpus, &plan.training_tasks, &[Split::Train, Split::Valid])?;
    v.extend(corpus_inputs(corpus, &plan.eval_tasks, &plan.eval_splits)?);
    v.sort_by(|a, b| a.path.cmp(&b.path));
    v.dedup();
    Ok(v)
}

fn keys(tasks: &[figdetect::modeling::TaskSpec]) -> Vec<String> {
    tasks.iter().map(|t| t.key()).collect()
}

fn train_one(
    plan: &ModelPlan,
    inputs: Vec<FileDigest>,
    config: &ExperimentConfig,
    corpus: &PreparedCorpus,
    registry: &TemplateRegistry,
    force: bool,
) -> Result<RunRef> {
    let hash = plan.hash();
    let run_ref = RunRef {
        hash: hash.clone(),
        template: plan.template.to_string(),
        training_tasks: keys(&plan.training_tasks),
        eval_tasks: keys(&plan.eval_tasks),
    };
    let dir = config.out.join("runs").join(&hash);
    if !force && RunManifest::is_current(&dir, &hash, &inputs) {
        println!("run {hash}: up to date ({})", dir.display());
        return Ok(run_ref);
    }
    let _lock = DirLock::acquire(&dir)?;
    let _ = std::fs::remove_file(dir.join(MANIFEST));
    let started = unix_now();
    info!(
        "run {hash}: training on {} with template {}",
        run_ref.training_tasks.join(","),
        plan.template
    );
    let mut art = Artifacts::new(&dir);
    art.write(PLAN_FILE, &pretty_json(plan))?;
    art.write(CONFIG_FILE, config.to_toml().as_bytes())?;

    let mixture = build_mixture(&plan.training_tasks, plan.mixture, plan.train.seed, corpus, registry)?;
    let valid: Vec<ValidationSet> = plan
        .training_tasks
        .iter()
        .map(|t| {
            let examples = corpus.load(t.figure, t.language, Split::Valid)?;
            Ok(ValidationSet::new(t.clone(), &examples, registry)?)
        })
        .collect::<Result<_>>()?;
    let gold = if plan.backend.needs_gold() {
        gold_for(&plan.all_tasks(), corpus, registry)?
    } else {
        GoldTable::new()
    };
    let mut spec = plan.backend.clone();
    if let BackendSpec::External(ext) = &mut spec {
        if ext.checkpoint_dir.is_none() {
            let abs = std::fs::canonicalize(&dir).map_err(|e| CliError::io(&dir, e))?;
            ext.checkpoint_dir = Some(abs.join("adapter-checkpoints"));
        }
    }
    let mut backend = spec.instantiate(&gold)?;
    let mut observer = |e: &LogEvent| match e {
        LogEvent::Eval {
            step, score, improved, ..
        } => {
            info!(
                "step {step}: validation accuracy {score:.4}{}",
                if *improved { " (best so far)" } else { "" }
            )
        }
        LogEvent::Stop { step, reason, .. } => info!("stopped at step {step}: {reason:?}"),
        LogEvent::Step { .. } => {}
    };
    let (ckpt, log) = match figdetect::modeling::train_observed(
        backend.as_mut(),
        &mixture,
        &valid,
        &plan.train,
        &hash,
        &mut observer,
    ) {
        Ok(r) => r,
        Err(TrainError::Abort { step, source, log }) => {
            write_log(&mut art, &log)?;
            return Err(CliError::Backend(format!(
                "run {hash} aborted at step {step}: {source}"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_log(&mut art, &log)?;
    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    let (payload, meta) = ckpt.save_dir(&ckpt_dir).map_err(|e| CliError::io(&ckpt_dir, e))?;
    for p in [payload, meta] {
        art.adopt(p.strip_prefix(&dir).unwrap_or(&p))?;
    }

    backend.restore(&ckpt.payload)?;
    let model = LoadedModel {
        meta: ckpt.meta.clone(),
        backend,
    };
    let mut reports = Vec::new();
    for split in &plan.eval_splits {
        for task in &plan.eval_tasks {
            let report = evaluate(
                &model,
                task,
                *split,
                corpus,
                registry,
                EvalOptions { keep_examples: true },
            )?;
            let rel = Path::new(REPORTS_DIR)
                .join(split.code())
                .join(format!("{}.json", task.key()));
            art.write(rel, &pretty_json(&report))?;
            reports.push(report);
        }
    }
    let summary = render_reports(&reports);
    art.write(Path::new(REPORTS_DIR).join("summary.txt"), summary.as_bytes())?;
    drop(model);
    RunManifest::new("train", &hash, inputs, started).finish(art)?;
    println!(
        "run {hash}: {:?} at step {}, best step {} (validation {:.4})",
        log.stop_reason.unwrap_or(figdetect::modeling::StopReason::MaxSteps),
        log.last_step(),
        ckpt.meta.step,
        ckpt.meta.best_score.unwrap_or(f64::NAN)
    );
    print!("{summary}");
    Ok(run_ref)
}

fn write_log(art: &mut Artifacts, log: &TrainingLog) -> Result<()> {
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf).map_err(|e| CliError::Other(e.to_string()))?;
    art.write(TRAINING_LOG, &buf)?;
    Ok(())
}

fn import_baseline(config: &ExperimentConfig) -> Result<BTreeMap<String, f64>> {
    let all: BTreeMap<String, f64> = match &config.baseline {
        BaselineSource::Reference => {
            let table = if config.en_only {
                &ZERO_SHOT_RESULTS
            } else {
                &MAIN_RESULTS
            };
            let row = table
                .iter()
                .find(|(name, _)| *name == "baseline")
                .expect("reference has a baseline row")
                .1;
            TASK_ORDER
                .iter()
                .zip(row)
                .map(|((f, l), v)| (format!("{f}-{l}"), v))
                .collect()
        }
        BaselineSource::File { path } => read_baseline_csv(path)?,
    };
    let wanted: Vec<String> = config.tasks.iter().map(TaskKey::to_string).collect();
    let missing: Vec<&String> = wanted.iter().filter(|k| !all.contains_key(*k)).collect();
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|s| s.as_str()).collect();
        return Err(CliError::Data(format!(
            "baseline has no accuracy for {}",
            names.join(", ")
        )));
    }
    let extra = all.keys().filter(|k| !wanted.contains(k)).count();
    if extra > 0 {
        warn!("ignoring {extra} baseline entries outside the configured tasks");
    }
    Ok(all.into_iter().filter(|(k, _)| wanted.contains(k)).collect())
}

fn read_baseline_csv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let data = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| data(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| data(e.to_string()))?;
        let line = i + 2;
        let (Some(task), Some(acc)) = (row.get(0), row.get(1)) else {
            return Err(data(format!("line {line}: expected `task,accuracy`")));
        };
        let key: TaskKey = task.parse().map_err(|e| data(format!("line {line}: {e}")))?;
        let acc: f64 = acc
            .trim()
            .parse()
            .map_err(|e| data(format!("line {line}: accuracy: {e}")))?;
        if !(0.0..=100.0).contains(&acc) {
            return Err(data(format!("line {line}: accuracy {acc} is not a percentage")));
        }
        if out.insert(key.to_string(), acc).is_some() {
            return Err(data(format!("line {line}: {key} listed twice")));
        }
    }
    Ok(out)
}
