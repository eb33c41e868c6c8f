//! Synthetic separable detection data for smoke tests and the toy backend.
//!
//! Sentences are random draws from a filler vocabulary. Figurative ones
//! additionally contain a marker word at a random position, so a bag of
//! words separates the classes exactly.

use crate::corpus::{Figure, Label, LabeledExample, Language, Provenance, Split};
use crate::util::PortableRng;

const FILLER: &[&str] = &[
    "the",
    "a",
    "river",
    "market",
    "morning",
    "walked",
    "quiet",
    "letter",
    "window",
    "green",
    "table",
    "carried",
    "old",
    "city",
    "light",
    "bread",
    "paper",
    "under",
    "across",
    "teacher",
    "garden",
    "small",
    "stone",
    "yesterday",
    "opened",
    "train",
    "blue",
    "road",
    "sister",
    "kitchen",
    "evening",
    "found",
    "warm",
    "field",
    "door",
    "busy",
    "bridge",
    "music",
    "cold",
    "friend",
    "house",
    "boat",
    "wrote",
    "empty",
    "hill",
    "station",
    "coffee",
    "near",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub figure: Figure,
    pub language: Language,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub keyword: String,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        SyntheticTask {
            figure: Figure::Idiom,
            language: Language::En,
            train: 200,
            valid: 100,
            test: 100,
            keyword: "zorblat".into(),
            min_words: 4,
            max_words: 10,
            seed: 7,
        }
    }
}

impl SyntheticTask {
    fn sentence(&self, rng: &mut PortableRng, label: Label) -> String {
        let len = self.min_words + rng.below(self.max_words - self.min_words + 1);
        let mut words: Vec<&str> = (0..len).map(|_| FILLER[rng.below(FILLER.len())]).collect();
        if label == Label::Figurative {
            let at = rng.below(words.len() + 1);
            words.insert(at, &self.keyword);
        }
        words.join(" ")
    }

    fn split(&self, split: Split, n: usize) -> Vec<LabeledExample> {
        let stream = match split {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        };
        let mut rng = PortableRng::with_stream(self.seed, stream);
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Literal } else { Label::Figurative };
                let record = format!("{split}-{i:05}");
                LabeledExample {
                    id: format!("{}/{}/{split}/synthetic/{record}", self.figure, self.language),
                    text: self.sentence(&mut rng, label),
                    language: self.language,
                    figure: self.figure,
                    label,
                    split,
                    spans: Vec::new(),
                    source: Provenance {
                        dataset: "synthetic".into(),
                        record,
                    },
                }
            })
            .collect()
    }

    /// Balanced `(train, valid, test)` splits, alternating literal and
    /// figurative.
    pub fn generate(&self) -> (Vec<LabeledExample>, Vec<LabeledExample>, Vec<LabeledExample>) {
        (
            self.split(Split::Train, self.train),
            self.split(Split::Valid, self.valid),
            self.split(Split::Test, self.test),
        )
    }
}
