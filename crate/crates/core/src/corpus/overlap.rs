use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Label, LabeledExample};
use crate::par::Exec;
use crate::util::normalize_whitespace;

fn normalize(s: &str) -> String {
    normalize_whitespace(s).to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOverlap {
    pub sentences: usize,
    pub matched: usize,
    /// Percentage in `[0, 100]`; `None` when the class has no sentences.
    pub ratio: Option<f64>,
}

impl ClassOverlap {
    fn new(sentences: usize, matched: usize) -> Self {
        let ratio = (sentences > 0).then(|| 100.0 * matched as f64 / sentences as f64);
        ClassOverlap {
            sentences,
            matched,
            ratio,
        }
    }
}

/// Share of probe sentences, per gold class, that contain at least one
/// expression seen in a figurative training sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub expressions: usize,
    pub literal: ClassOverlap,
    pub figurative: ClassOverlap,
}

/// Normalised (case-folded, whitespace-collapsed) expression surfaces of the
/// figurative training examples.
pub fn expression_set(train: &[LabeledExample]) -> BTreeSet<String> {
    train
        .iter()
        .filter(|e| e.label == Label::Figurative)
        .flat_map(|e| e.span_texts())
        .map(|s| normalize(&s))
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn expression_overlap(train: &[LabeledExample], probe: &[LabeledExample], exec: Exec) -> OverlapReport {
    let expressions: Vec<String> = expression_set(train).into_iter().collect();
    let hits = exec.map(probe, |ex| {
        let text = normalize(&ex.text);
        expressions.iter().any(|e| text.contains(e.as_str()))
    });
    let class = |label: Label| {
        let (n, m) = probe
            .iter()
            .zip(&hits)
            .filter(|(e, _)| e.label == label)
            .fold((0, 0), |(n, m), (_, hit)| (n + 1, m + usize::from(*hit)));
        ClassOverlap::new(n, m)
    };
    OverlapReport {
        expressions: expressions.len(),
        literal: class(Label::Literal),
        figurative: class(Label::Figurative),
    }
}
