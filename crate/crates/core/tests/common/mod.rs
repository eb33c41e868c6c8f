#![allow(dead_code)]

use std::path::{Path, PathBuf};

use figdetect::corpus::{prepare, CorpusSource, PrepareOptions, PrepareReport, PreparedCorpus, TASK_PAIRS};
use figdetect::evaluation::LoadedModel;
use figdetect::modeling::{BackendSpec, CheckpointMeta, GoldTable, TaskSpec};
use figdetect::prompt::{InputFormat, TemplateRef};
use figdetect::{Figure, Language, Split, TemplateRegistry};
use tempfile::TempDir;

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/data")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// `(literal, figurative)` for train, valid and test.
pub type SplitCounts = [(usize, usize); 3];

/// Counted by hand from the fixture files.
pub const FIXTURE_COUNTS: [(Figure, Language, SplitCounts); 10] = [
    (Figure::Hyperbole, Language::En, [(4, 6), (3, 3), (2, 2)]),
    (Figure::Hyperbole, Language::Zh, [(2, 2), (2, 2), (2, 2)]),
    (Figure::Idiom, Language::En, [(5, 5), (4, 4), (2, 5)]),
    (Figure::Idiom, Language::De, [(2, 2), (2, 2), (1, 3)]),
    (Figure::Idiom, Language::Es, [(2, 2), (2, 2), (2, 4)]),
    (Figure::Idiom, Language::It, [(2, 2), (1, 1), (1, 3)]),
    (Figure::Metaphor, Language::En, [(2, 3), (2, 2), (3, 3)]),
    (Figure::Metaphor, Language::Es, [(2, 2), (2, 2), (2, 2)]),
    (Figure::Metaphor, Language::Fa, [(2, 2), (1, 1), (3, 2)]),
    (Figure::Metaphor, Language::Ru, [(2, 2), (1, 1), (2, 2)]),
];

/// One malformed idiom record (de train), one unparsable score (es valid)
/// and three score-1 metaphor rows (en train, en test, fa test).
pub const FIXTURE_REJECTED: usize = 5;
pub const FIXTURE_DROPPED_BY_POLICY: usize = 3;

pub fn fixture_counts(figure: Figure, language: Language, split: Split) -> (usize, usize) {
    let i = Split::ALL.iter().position(|s| *s == split).unwrap();
    FIXTURE_COUNTS
        .iter()
        .find(|(f, l, _)| (*f, *l) == (figure, language))
        .unwrap()
        .2[i]
}

pub struct Prepared {
    pub dir: TempDir,
    pub report: PrepareReport,
    pub corpus: PreparedCorpus,
}

pub fn prepare_fixtures_with(options: &PrepareOptions) -> Prepared {
    let dir = tempfile::tempdir().unwrap();
    let report = prepare(&fixture_root(), dir.path(), options).unwrap();
    let corpus = PreparedCorpus::new(dir.path());
    Prepared { dir, report, corpus }
}

pub fn prepare_fixtures() -> Prepared {
    prepare_fixtures_with(&PrepareOptions::default())
}

pub fn all_tasks(template: &str) -> Vec<TaskSpec> {
    TASK_PAIRS
        .iter()
        .map(|(f, l)| TaskSpec::new(*f, *l, TemplateRef::from(template)).unwrap())
        .collect()
}

/// Gold answers for every split of `tasks`.
pub fn gold_for(tasks: &[TaskSpec], corpus: &dyn CorpusSource, registry: &TemplateRegistry) -> GoldTable {
    let mut gold = GoldTable::new();
    for task in tasks {
        let format = InputFormat::for_task(registry, task).unwrap();
        for split in Split::ALL {
            let examples = corpus.load(task.figure, task.language, *split).unwrap();
            gold.add_examples(&format, &examples).unwrap();
        }
    }
    gold
}

pub fn loaded(spec: BackendSpec, gold: &GoldTable, training_tasks: Vec<TaskSpec>) -> LoadedModel {
    LoadedModel {
        backend: spec.instantiate(gold).unwrap(),
        meta: CheckpointMeta {
            backend: spec,
            step: 0,
            best_score: None,
            config_hash: "fixture".into(),
            training_tasks,
        },
    }
}
