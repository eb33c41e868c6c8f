use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TaskSpec;
use crate::corpus::CorpusSource;
use crate::prompt::{InputFormat, PromptError, PromptInstance, TemplateRegistry};
use crate::util::PortableRng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixturePolicy {
    /// Every example once per epoch, in a fresh seeded permutation.
    #[default]
    ConcatShuffle,
    /// Each draw picks a task with probability proportional to its weight,
    /// then an example of that task uniformly.
    Proportional,
}

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("a mixture needs at least one task")]
    NoTasks,
    #[error("task {task} listed twice")]
    DuplicateTask { task: TaskSpec },
    #[error("cannot resolve training data for {task}: {reason}")]
    Unresolvable { task: TaskSpec, reason: String },
    #[error("task {task}: {source}")]
    Prompt {
        task: TaskSpec,
        #[source]
        source: PromptError,
    },
    #[error("task {task}: weight must be positive and finite, got {weight}")]
    BadWeight { task: TaskSpec, weight: f64 },
}

#[derive(Debug, Clone)]
pub struct MixtureEntry {
    pub task: TaskSpec,
    pub instances: Arc<Vec<PromptInstance>>,
    pub weight: f64,
}

/// A set of tasks trained jointly.
#[derive(Debug, Clone)]
pub struct Mixture {
    entries: Vec<MixtureEntry>,
    policy: MixturePolicy,
    seed: u64,
}

/// Position of one example inside a mixture: `(entry, index)`.
pub type Slot = (usize, usize);

impl Mixture {
    pub fn new(entries: Vec<MixtureEntry>, policy: MixturePolicy, seed: u64) -> Result<Self, MixtureError> {
        if entries.is_empty() {
            return Err(MixtureError::NoTasks);
        }
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|p| p.task == e.task) {
                return Err(MixtureError::DuplicateTask { task: e.task.clone() });
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(MixtureError::BadWeight {
                    task: e.task.clone(),
                    weight: e.weight,
                });
            }
            if e.instances.is_empty() {
                return Err(MixtureError::Unresolvable {
                    task: e.task.clone(),
                    reason: "dataset is empty".into(),
                });
            }
        }
        Ok(Mixture { entries, policy, seed })
    }

    pub fn entries(&self) -> &[MixtureEntry] {
        &self.entries
    }

    pub fn tasks(&self) -> Vec<TaskSpec> {
        self.entries.iter().map(|e| e.task.clone()).collect()
    }

    pub fn policy(&self) -> MixturePolicy {
        self.policy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of examples scheduled per epoch: the size of the union.
    pub fn epoch_size(&self) -> usize {
        self.entries.iter().map(|e| e.instances.len()).sum()
    }

    pub fn instance(&self, (entry, idx): Slot) -> &PromptInstance {
        &self.entries[entry].instances[idx]
    }

    /// Schedule for epoch `epoch`. Depends only on the seed, the policy and
    /// the entry sizes.
    pub fn epoch(&self, epoch: u64) -> Vec<Slot> {
        let mut rng = PortableRng::with_stream(self.seed, epoch);
        match self.policy {
            MixturePolicy::ConcatShuffle => {
                let mut slots: Vec<Slot> = self
                    .entries
                    .iter()
                    .enumerate()
                    .flat_map(|(e, entry)| (0..entry.instances.len()).map(move |i| (e, i)))
                    .collect();
                rng.shuffle(&mut slots);
                slots
            }
            MixturePolicy::Proportional => {
                let total: f64 = self.entries.iter().map(|e| e.weight).sum();
                let cumulative: Vec<f64> = self
                    .entries
                    .iter()
                    .scan(0.0, |acc, e| {
                        *acc += e.weight / total;
                        Some(*acc)
                    })
                    .collect();
                (0..self.epoch_size())
                    .map(|_| {
                        let u = rng.unit();
                        let e = cumulative.iter().position(|c| u < *c).unwrap_or(self.entries.len() - 1);
                        (e, rng.below(self.entries[e].instances.len()))
                    })
                    .collect()
            }
        }
    }

    /// Batches of `batch_size` drawn across epochs. With `max_epochs` the
    /// stream ends after that many epochs; the last batch may be short.
    pub fn batches(&self, batch_size: usize, max_epochs: Option<u64>) -> BatchStream<'_> {
        BatchStream {
            mixture: self,
            batch_size: batch_size.max(1),
            max_epochs,
            epoch: 0,
            order: self.epoch(0),
            pos: 0,
        }
    }
}

pub struct BatchStream<'a> {
    mixture: &'a Mixture,
    batch_size: usize,
    max_epochs: Option<u64>,
    epoch: u64,
    order: Vec<Slot>,
    pos: usize,
}

impl BatchStream<'_> {
    /// Epoch the next batch starts in.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Vec<PromptInstance>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut batch = Vec::with_capacity(self.batch_size);
        while batch.len() < self.batch_size {
            if self.pos == self.order.len() {
                if self.max_epochs.is_some_and(|m| self.epoch + 1 >= m) {
                    break;
                }
                self.epoch += 1;
                self.order = self.mixture.epoch(self.epoch);
                self.pos = 0;
            }
            batch.push(self.mixture.instance(self.order[self.pos]).clone());
            self.pos += 1;
        }
        if batch.is_empty() {
            None
        } else {
            Some(batch)
        }
    }
}

/// Renders every task's training data through its input format and wraps
/// them into a mixture. Each entry's weight is its dataset size.
pub fn build_mixture(
    tasks: &[TaskSpec],
    policy: MixturePolicy,
    seed: u64,
    source: &dyn CorpusSource,
    registry: &TemplateRegistry,
) -> Result<Mixture, MixtureError> {
    if tasks.is_empty() {
        return Err(MixtureError::NoTasks);
    }
    let mut entries = Vec::with_capacity(tasks.len());
    for task in tasks {
        let examples = source
            .train_examples(task.figure, task.language)
            .map_err(|e| MixtureError::Unresolvable {
                task: task.clone(),
                reason: e.to_string(),
            })?;
        let format = InputFormat::for_task(registry, task).map_err(|source| MixtureError::Prompt {
            task: task.clone(),
            source,
        })?;
        let instances = format
            .instances(&examples, task)
            .map_err(|source| MixtureError::Prompt {
                task: task.clone(),
                source,
            })?;
        entries.push(MixtureEntry {
            task: task.clone(),
            weight: instances.len() as f64,
            instances: Arc::new(instances),
        });
    }
    Mixture::new(entries, policy, seed)
}
