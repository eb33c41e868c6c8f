use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Figure, Label, LabeledExample, Language, Split, TASK_PAIRS};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub total: usize,
    pub literal: usize,
    pub figurative: usize,
}

impl LabelCounts {
    pub fn add(&mut self, label: Label) {
        self.total += 1;
        match label {
            Label::Literal => self.literal += 1,
            Label::Figurative => self.figurative += 1,
        }
    }

    pub fn merge(&mut self, other: LabelCounts) {
        self.total += other.total;
        self.literal += other.literal;
        self.figurative += other.figurative;
    }

    pub fn is_balanced(&self) -> bool {
        self.literal == self.figurative
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRow {
    pub figure: Figure,
    pub language: Language,
    pub split: Split,
    #[serde(flatten)]
    pub counts: LabelCounts,
}

/// Label counts per (figure, language, split). Cells absent from the map
/// are zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<StatsRow>", into = "Vec<StatsRow>")]
pub struct CorpusStats {
    cells: BTreeMap<(Figure, Language, Split), LabelCounts>,
}

impl From<Vec<StatsRow>> for CorpusStats {
    fn from(rows: Vec<StatsRow>) -> Self {
        let mut stats = CorpusStats::default();
        for r in rows {
            stats
                .cells
                .entry((r.figure, r.language, r.split))
                .or_default()
                .merge(r.counts);
        }
        stats
    }
}

impl From<CorpusStats> for Vec<StatsRow> {
    fn from(stats: CorpusStats) -> Self {
        stats.rows().collect()
    }
}

pub fn compute_stats(examples: &[LabeledExample]) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for ex in examples {
        stats
            .cells
            .entry((ex.figure, ex.language, ex.split))
            .or_default()
            .add(ex.label);
    }
    stats
}

impl CorpusStats {
    pub fn get(&self, figure: Figure, language: Language, split: Split) -> LabelCounts {
        self.cells.get(&(figure, language, split)).copied().unwrap_or_default()
    }

    /// Sum over all splits of one task.
    pub fn task_total(&self, figure: Figure, language: Language) -> LabelCounts {
        let mut c = LabelCounts::default();
        for split in Split::ALL {
            c.merge(self.get(figure, language, *split));
        }
        c
    }

    pub fn total(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for v in self.cells.values() {
            c.merge(*v);
        }
        c
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        for (k, v) in &other.cells {
            self.cells.entry(*k).or_default().merge(*v);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.values().all(|c| c.total == 0)
    }

    pub fn rows(&self) -> impl Iterator<Item = StatsRow> + '_ {
        self.cells.iter().map(|(&(figure, language, split), &counts)| StatsRow {
            figure,
            language,
            split,
            counts,
        })
    }

    /// Plain-text table with one line per task; unbalanced cells carry their
    /// `[literal/figurative]` breakdown.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:<4} {:>18} {:>18} {:>18}",
            "Form", "Lang", "Train", "Valid", "Test"
        );
        let mut figure = None;
        for &(f, l) in TASK_PAIRS.iter() {
            if self.task_total(f, l).total == 0 {
                continue;
            }
            let name = if figure != Some(f) {
                figure = Some(f);
                f.code()
            } else {
                ""
            };
            let cell = |s: Split| {
                let c = self.get(f, l, s);
                if c.is_balanced() {
                    format_count(c.total)
                } else {
                    format!("{} [{}/{}]", format_count(c.total), c.literal, c.figurative)
                }
            };
            let _ = writeln!(
                out,
                "{:<10} {:<4} {:>18} {:>18} {:>18}",
                name,
                l.code().to_uppercase(),
                cell(Split::Train),
                cell(Split::Valid),
                cell(Split::Test)
            );
        }
        out
    }
}

/// Thousands separator, e.g. `12,238`.
pub(crate) fn format_count(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::example;
    use proptest::prelude::*;

    #[test]
    fn empty_corpus_all_zero() {
        let s = compute_stats(&[]);
        assert!(s.is_empty());
        assert_eq!(s.get(Figure::Idiom, Language::Es, Split::Test), LabelCounts::default());
        assert_eq!(s.total().total, 0);
    }

    #[test]
    fn counts_and_table() {
        let mut exs = Vec::new();
        for i in 0..10 {
            let label = if i < 6 { Label::Figurative } else { Label::Literal };
            exs.push(example(&i.to_string(), "x", Figure::Hyperbole, Language::En, label));
        }
        let s = compute_stats(&exs);
        let c = s.get(Figure::Hyperbole, Language::En, Split::Train);
        assert_eq!((c.total, c.literal, c.figurative), (10, 4, 6));
        assert!(s.render_table().contains("10 [4/6]"));
    }

    #[test]
    fn thousands() {
        assert_eq!(format_count(0), "0");
        assert_eq!(format_count(300), "300");
        assert_eq!(format_count(3352), "3,352");
        assert_eq!(format_count(1234567), "1,234,567");
    }

    #[test]
    fn json_round_trip() {
        let exs = vec![example("a", "x", Figure::Idiom, Language::De, Label::Literal)];
        let s = compute_stats(&exs);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.starts_with('['));
        assert_eq!(serde_json::from_str::<CorpusStats>(&json).unwrap(), s);
    }

    fn arb_example() -> impl Strategy<Value = LabeledExample> {
        (0usize..10, any::<bool>(), 0usize..3).prop_map(|(task, fig, split)| {
            let (f, l) = TASK_PAIRS[task];
            let mut ex = example("e", "t", f, l, if fig { Label::Figurative } else { Label::Literal });
            ex.split = Split::ALL[split];
            ex
        })
    }

    proptest! {
        #[test]
        fn row_sums(exs in proptest::collection::vec(arb_example(), 0..200)) {
            let s = compute_stats(&exs);
            let mut sum = 0;
            for row in s.rows() {
                prop_assert_eq!(row.counts.literal + row.counts.figurative, row.counts.total);
                sum += row.counts.total;
            }
            prop_assert_eq!(sum, exs.len());
            let by_task: usize = TASK_PAIRS.iter().map(|(f, l)| s.task_total(*f, *l).total).sum();
            prop_assert_eq!(by_task, exs.len());
        }
    }
}
