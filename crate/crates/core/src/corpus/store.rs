//! Access to prepared splits.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::interchange::read_examples_file;
use super::{CorpusError, Figure, LabeledExample, Language, Split};

/// File name of the upsampled training split written next to `train.jsonl`.
pub const UPSAMPLED_TRAIN: &str = "train_upsampled.jsonl";

/// Anything that can hand out the examples of one split of one task.
pub trait CorpusSource: Sync {
    fn load(&self, figure: Figure, language: Language, split: Split) -> Result<Vec<LabeledExample>, CorpusError>;

    /// Examples used for training. Defaults to the train split.
    fn train_examples(&self, figure: Figure, language: Language) -> Result<Vec<LabeledExample>, CorpusError> {
        self.load(figure, language, Split::Train)
    }
}

/// Splits held in memory.
#[derive(Debug, Clone, Default)]
pub struct InMemoryCorpus {
    data: HashMap<(Figure, Language, Split), Vec<LabeledExample>>,
}

impl InMemoryCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, figure: Figure, language: Language, split: Split, examples: Vec<LabeledExample>) {
        self.data.insert((figure, language, split), examples);
    }

    /// Files every example under its own figure, language and split.
    pub fn from_examples(examples: impl IntoIterator<Item = LabeledExample>) -> Self {
        let mut corpus = Self::new();
        for ex in examples {
            corpus
                .data
                .entry((ex.figure, ex.language, ex.split))
                .or_default()
                .push(ex);
        }
        corpus
    }

    pub fn get(&self, figure: Figure, language: Language, split: Split) -> Option<&[LabeledExample]> {
        self.data.get(&(figure, language, split)).map(Vec::as_slice)
    }
}

impl CorpusSource for InMemoryCorpus {
    fn load(&self, figure: Figure, language: Language, split: Split) -> Result<Vec<LabeledExample>, CorpusError> {
        self.data
            .get(&(figure, language, split))
            .cloned()
            .ok_or_else(|| CorpusError::MissingSplit {
                location: format!("{figure}/{language}/{split}"),
            })
    }
}

/// A directory written by the prepare step:
/// `<root>/<figure>/<language>/<split>.jsonl`, plus `train_upsampled.jsonl`
/// where the training split was upsampled.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    root: PathBuf,
}

impl PreparedCorpus {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        PreparedCorpus { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn split_path(&self, figure: Figure, language: Language, split: Split) -> PathBuf {
        self.root
            .join(figure.code())
            .join(language.code())
            .join(format!("{split}.jsonl"))
    }

    pub fn upsampled_path(&self, figure: Figure, language: Language) -> PathBuf {
        self.root
            .join(figure.code())
            .join(language.code())
            .join(UPSAMPLED_TRAIN)
    }
}

impl CorpusSource for PreparedCorpus {
    fn load(&self, figure: Figure, language: Language, split: Split) -> Result<Vec<LabeledExample>, CorpusError> {
        let path = self.split_path(figure, language, split);
        if !path.exists() {
            return Err(CorpusError::MissingSplit {
                location: path.display().to_string(),
            });
        }
        read_examples_file(&path)
    }

    fn train_examples(&self, figure: Figure, language: Language) -> Result<Vec<LabeledExample>, CorpusError> {
        let up = self.upsampled_path(figure, language);
        if up.exists() {
            read_examples_file(&up)
        } else {
            self.load(figure, language, Split::Train)
        }
    }
}
