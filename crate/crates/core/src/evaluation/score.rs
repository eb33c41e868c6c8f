use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Label;
use crate::par::Exec;
use crate::prompt::Prediction;

const CHUNK: usize = 4096;

/// 2x2 counts indexed `[gold][predicted]` over (literal, figurative).
///
/// An unparsed output is counted in its gold row's wrong column, so every
/// row sums to the number of gold examples of that class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Confusion(pub [[u64; 2]; 2]);

impl Confusion {
    pub fn get(&self, gold: Label, predicted: Label) -> u64 {
        self.0[gold.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn row_total(&self, gold: Label) -> u64 {
        self.0[gold.index()].iter().sum()
    }

    /// Each row as percentages of its total; empty rows are all zero.
    pub fn row_percent(&self) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for (r, row) in self.0.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total > 0 {
                for c in 0..2 {
                    out[r][c] = 100.0 * row[c] as f64 / total as f64;
                }
            }
        }
        out
    }

    fn merge(mut self, other: Confusion) -> Confusion {
        for r in 0..2 {
            for c in 0..2 {
                self.0[r][c] += other.0[r][c];
            }
        }
        self
    }
}

/// Core figures of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub unparsed_count: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    confusion: Confusion,
    unparsed: u64,
}

fn tally(chunk: &[(Label, Prediction)]) -> Tally {
    let mut t = Tally::default();
    for (gold, pred) in chunk {
        let col = match pred.label() {
            Some(p) => p.index(),
            None => {
                t.unparsed += 1;
                gold.flip().index()
            }
        };
        t.confusion.0[gold.index()][col] += 1;
    }
    t
}

/// Accuracy and confusion of parsed predictions against gold labels.
pub fn score(gold: &[Label], parsed: &[Prediction]) -> Result<Score, EvalError> {
    score_with(gold, parsed, Exec::default())
}

pub fn score_with(gold: &[Label], parsed: &[Prediction], exec: Exec) -> Result<Score, EvalError> {
    if gold.len() != parsed.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            parsed: parsed.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let pairs: Vec<(Label, Prediction)> = gold.iter().copied().zip(parsed.iter().copied()).collect();
    let t = exec.fold_chunks(
        &pairs,
        CHUNK,
        Tally::default(),
        |acc, chunk| {
            let t = tally(chunk);
            Tally {
                confusion: acc.confusion.merge(t.confusion),
                unparsed: acc.unparsed + t.unparsed,
            }
        },
        |a, b| Tally {
            confusion: a.confusion.merge(b.confusion),
            unparsed: a.unparsed + b.unparsed,
        },
    );
    let n = gold.len() as u64;
    let correct = t.confusion.correct();
    Ok(Score {
        n,
        correct,
        accuracy: correct as f64 / n as f64,
        confusion: t.confusion,
        unparsed_count: t.unparsed,
    })
}
