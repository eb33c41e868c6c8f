use std::collections::BTreeMap;
use std::io::Write;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{Backend, BackendCheckpoint, BackendError, CheckpointMeta};
use super::mixture::Mixture;
use super::schedule::{lr_schedule, TrainConfig};
use super::TaskSpec;
use crate::corpus::LabeledExample;
use crate::prompt::{InputFormat, PromptError, PromptInstance, TemplateRegistry};

/// Validation data of one task, already rendered.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub task: TaskSpec,
    pub format: InputFormat,
    pub instances: Vec<PromptInstance>,
}

impl ValidationSet {
    pub fn new(task: TaskSpec, examples: &[LabeledExample], registry: &TemplateRegistry) -> Result<Self, PromptError> {
        let format = InputFormat::for_task(registry, &task)?;
        let instances = format.instances(examples, &task)?;
        Ok(ValidationSet {
            task,
            format,
            instances,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxSteps,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Step {
        step: u64,
        lr: f64,
        loss: f64,
    },
    Eval {
        step: u64,
        score: f64,
        per_task: BTreeMap<String, f64>,
        improved: bool,
    },
    Stop {
        step: u64,
        reason: StopReason,
        best_step: Option<u64>,
        best_score: Option<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub config_hash: String,
    pub events: Vec<LogEvent>,
    pub stop_reason: Option<StopReason>,
    pub best_step: Option<u64>,
    pub best_score: Option<f64>,
}

impl TrainingLog {
    pub fn losses(&self) -> Vec<(u64, f64)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                LogEvent::Step { step, loss, .. } => Some((*step, *loss)),
                _ => None,
            })
            .collect()
    }

    pub fn evaluations(&self) -> Vec<(u64, f64)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                LogEvent::Eval { step, score, .. } => Some((*step, *score)),
                _ => None,
            })
            .collect()
    }

    pub fn last_step(&self) -> u64 {
        self.events
            .iter()
            .rev()
            .find_map(|e| match e {
                LogEvent::Step { step, .. } => Some(*step),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// One JSON object per event, in order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(src: &str) -> Result<Self, serde_json::Error> {
        let mut log = TrainingLog::default();
        for line in src.lines().filter(|l| !l.trim().is_empty()) {
            let e: LogEvent = serde_json::from_str(line)?;
            match &e {
                LogEvent::Eval {
                    step,
                    score,
                    improved: true,
                    ..
                } => {
                    log.best_step = Some(*step);
                    log.best_score = Some(*score);
                }
                LogEvent::Stop { reason, .. } => log.stop_reason = Some(*reason),
                _ => {}
            }
            log.events.push(e);
        }
        Ok(log)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no validation data")]
    NoValidation,
    #[error("validation set for {0} is empty")]
    EmptyValidation(TaskSpec),
    #[error("backend failed at step {step}: {source}")]
    Abort {
        step: u64,
        #[source]
        source: BackendError,
        log: Box<TrainingLog>,
    },
}

/// Mean per-task accuracy of `backend` on the validation sets, plus the
/// per-task values keyed by task. All inputs go out in one `generate` call.
pub fn validation_score(backend: &dyn Backend, valid: &[ValidationSet]) -> (f64, BTreeMap<String, f64>) {
    let inputs: Vec<String> = valid
        .iter()
        .flat_map(|v| v.instances.iter().map(|i| i.input_text.clone()))
        .collect();
    let outputs = backend.generate(&inputs);
    let mut per_task = BTreeMap::new();
    let mut offset = 0;
    let mut sum = 0.0;
    for v in valid {
        let n = v.instances.len();
        let correct = v
            .instances
            .iter()
            .zip(&outputs[offset..offset + n])
            .filter(|(inst, out)| match out {
                Ok(raw) => v.format.parse(raw, inst.origin.task.figure).label() == Some(inst.label),
                Err(_) => false,
            })
            .count();
        let acc = correct as f64 / n as f64;
        per_task.insert(v.task.to_string(), acc);
        sum += acc;
        offset += n;
    }
    (sum / valid.len() as f64, per_task)
}

/// Trains until early stopping, `max_steps`, or `max_epochs`.
///
/// Steps count from 1. After every `eval_interval` steps the validation
/// score is computed; a strictly higher score than every earlier one
/// snapshots the backend. Training stops once `patience` evaluations in a
/// row fail to improve. The returned checkpoint is the best snapshot; if no
/// evaluation ran it is the final state, with no score.
pub fn train(
    backend: &mut dyn Backend,
    mixture: &Mixture,
    valid: &[ValidationSet],
    config: &TrainConfig,
    config_hash: &str,
) -> Result<(BackendCheckpoint, TrainingLog), TrainError> {
    train_observed(backend, mixture, valid, config, config_hash, &mut |_| {})
}

/// [`train`], calling `observer` on each log event as it happens.
pub fn train_observed(
    backend: &mut dyn Backend,
    mixture: &Mixture,
    valid: &[ValidationSet],
    config: &TrainConfig,
    config_hash: &str,
    observer: &mut dyn FnMut(&LogEvent),
) -> Result<(BackendCheckpoint, TrainingLog), TrainError> {
    config.validate().map_err(TrainError::InvalidConfig)?;
    if valid.is_empty() {
        return Err(TrainError::NoValidation);
    }
    if let Some(v) = valid.iter().find(|v| v.instances.is_empty()) {
        return Err(TrainError::EmptyValidation(v.task.clone()));
    }
    let mut log = TrainingLog {
        config_hash: config_hash.to_string(),
        ..Default::default()
    };
    let mut push = |log: &mut TrainingLog, e: LogEvent| {
        observer(&e);
        log.events.push(e);
    };
    let meta = |backend: super::BackendSpec, step: u64, best: Option<f64>| CheckpointMeta {
        backend,
        step,
        best_score: best,
        config_hash: config_hash.to_string(),
        training_tasks: mixture.tasks(),
    };
    let abort = |step: u64, source: BackendError, log: &TrainingLog| TrainError::Abort {
        step,
        source,
        log: Box::new(log.clone()),
    };

    let mut best: Option<(u64, f64, Vec<u8>)> = None;
    let mut since_best = 0usize;
    let mut step = 0u64;
    let mut batches = mixture.batches(config.batch_size, config.max_epochs);
    let reason = loop {
        if config.max_steps.is_some_and(|m| step >= m) {
            break StopReason::MaxSteps;
        }
        let Some(batch) = batches.next() else {
            break StopReason::Exhausted;
        };
        step += 1;
        let lr = lr_schedule(step, config);
        let loss = backend.fit_step(&batch, lr).map_err(|e| abort(step, e, &log))?;
        debug!("step {step} lr {lr:.3e} loss {loss:.5}");
        push(&mut log, LogEvent::Step { step, lr, loss });

        if step.is_multiple_of(config.eval_interval) {
            let (score, per_task) = validation_score(&*backend, valid);
            let improved = best.as_ref().is_none_or(|(_, b, _)| score > *b);
            info!(
                "step {step}: validation {score:.4}{}",
                if improved { " (best)" } else { "" }
            );
            if improved {
                let payload = backend.snapshot().map_err(|e| abort(step, e, &log))?;
                best = Some((step, score, payload));
                since_best = 0;
            } else {
                since_best += 1;
            }
            push(
                &mut log,
                LogEvent::Eval {
                    step,
                    score,
                    per_task,
                    improved,
                },
            );
            if since_best >= config.patience {
                break StopReason::EarlyStop;
            }
        }
    };

    let checkpoint = match best {
        Some((best_step, score, payload)) => {
            log.best_step = Some(best_step);
            log.best_score = Some(score);
            BackendCheckpoint {
                meta: meta(backend.spec(), best_step, Some(score)),
                payload,
            }
        }
        None => {
            warn!("training stopped at step {step} before any evaluation; keeping the final state");
            let payload = backend.snapshot().map_err(|e| abort(step, e, &log))?;
            BackendCheckpoint {
                meta: meta(backend.spec(), step, None),
                payload,
            }
        }
    };
    log.stop_reason = Some(reason);
    let stop = LogEvent::Stop {
        step,
        reason,
        best_step: log.best_step,
        best_score: log.best_score,
    };
    push(&mut log, stop);
    Ok((checkpoint, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{example, Figure, InMemoryCorpus, Label, Language, Split};
    use crate::modeling::{build_mixture, BackendSpec, GoldTable, MixturePolicy};
    use crate::prompt::TemplateRef;

    fn setup(n: usize) -> (Mixture, Vec<ValidationSet>, GoldTable) {
        let reg = TemplateRegistry::builtin();
        let task = TaskSpec::new(Figure::Idiom, Language::En, TemplateRef::id("A")).unwrap();
        let ex: Vec<_> = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Literal } else { Label::Figurative };
                example(
                    &format!("e{i}"),
                    &format!("sentence number {i}"),
                    Figure::Idiom,
                    Language::En,
                    label,
                )
            })
            .collect();
        let mut src = InMemoryCorpus::new();
        src.insert(Figure::Idiom, Language::En, Split::Train, ex.clone());
        let m = build_mixture(std::slice::from_ref(&task), MixturePolicy::ConcatShuffle, 1, &src, &reg).unwrap();
        let v = ValidationSet::new(task, &ex, &reg).unwrap();
        let mut gold = GoldTable::new();
        gold.add_instances(&v.instances, &v.format);
        (m, vec![v], gold)
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            eval_interval: 10,
            warmup_steps: 10,
            decay_steps: 100,
            batch_size: 4,
            ..Default::default()
        }
    }

    #[test]
    fn oracle_stops_after_patience() {
        let (m, v, gold) = setup(10);
        let mut b = BackendSpec::Oracle.instantiate(&gold).unwrap();
        let (ckpt, log) = train(b.as_mut(), &m, &v, &quick(), "h").unwrap();
        assert_eq!(log.stop_reason, Some(StopReason::EarlyStop));
        assert_eq!(log.best_score, Some(1.0));
        assert_eq!(ckpt.meta.step, 10);
        assert_eq!(log.evaluations().len(), 6);
        assert_eq!(log.last_step(), 60);
    }

    #[test]
    fn constant_with_patience_one_stops_at_second_eval() {
        let (m, v, gold) = setup(10);
        let mut b = BackendSpec::Constant {
            output: "Literal".into(),
        }
        .instantiate(&gold)
        .unwrap();
        let cfg = TrainConfig { patience: 1, ..quick() };
        let (ckpt, log) = train(b.as_mut(), &m, &v, &cfg, "h").unwrap();
        assert_eq!(log.evaluations(), vec![(10, 0.5), (20, 0.5)]);
        assert_eq!(ckpt.meta.best_score, Some(0.5));
        assert_eq!(
            ckpt.meta.backend,
            BackendSpec::Constant {
                output: "Literal".into()
            }
        );
    }

    #[test]
    fn max_steps_and_exhaustion() {
        let (m, v, gold) = setup(10);
        let mut b = BackendSpec::Oracle.instantiate(&gold).unwrap();
        let cfg = TrainConfig {
            max_steps: Some(15),
            ..quick()
        };
        let (_, log) = train(b.as_mut(), &m, &v, &cfg, "h").unwrap();
        assert_eq!(log.stop_reason, Some(StopReason::MaxSteps));
        assert_eq!(log.last_step(), 15);

        let cfg = TrainConfig {
            max_epochs: Some(2),
            ..quick()
        };
        let (ckpt, log) = train(b.as_mut(), &m, &v, &cfg, "h").unwrap();
        assert_eq!(log.stop_reason, Some(StopReason::Exhausted));
        // 20 examples in batches of 4
        assert_eq!(log.last_step(), 5);
        assert_eq!(ckpt.meta.best_score, None);
    }

    #[test]
    fn log_round_trips_through_jsonl() {
        let (m, v, gold) = setup(10);
        let mut b = BackendSpec::Oracle.instantiate(&gold).unwrap();
        let (_, log) = train(b.as_mut(), &m, &v, &quick(), "h").unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let back = TrainingLog::read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.events, log.events);
        assert_eq!(back.best_step, log.best_step);
        assert_eq!(back.stop_reason, log.stop_reason);
    }
}
