//! Corpus ingestion, normalisation and diagnostics.
//!
//! Every source format is converted into [`LabeledExample`] records and from
//! there into the canonical line-record interchange format (one JSON object
//! per line, see [`interchange`]). Downstream modules never see the source
//! formats.

mod ingest;
pub mod interchange;
mod overlap;
mod prepare;
pub mod readers;
mod stats;
mod store;
mod upsample;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{
    ingest_hyperbole, ingest_idiom_word_level, ingest_metaphor_lcc, BinarizationPolicy, HyperboleRow, IngestOutcome,
    RejectReason, Rejection, ScoredRow, SourceInfo, TaggedSentence, TaggedToken,
};
pub use overlap::{expression_overlap, expression_set, ClassOverlap, OverlapReport};
pub use prepare::{
    discover_task, prepare, rejection_summary, FileDigest, PrepareOptions, PrepareReport, SourceFailure, SourceFile,
    DATA_ROOT_ENV,
};
pub use stats::{compute_stats, CorpusStats, LabelCounts, StatsRow};
pub use store::{CorpusSource, InMemoryCorpus, PreparedCorpus, UPSAMPLED_TRAIN};
pub use upsample::{upsample, UPSAMPLE_ALGORITHM};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("({figure}, {language}) is not a supported task")]
    UnsupportedTask { figure: Figure, language: Language },
    #[error("invalid example {id}: {reason}")]
    InvalidExample { id: String, reason: String },
    #[error("cannot upsample an empty example list")]
    EmptyUpsample,
    #[error("upsample target {target} is smaller than the input size {len}")]
    UpsampleBelowInput { target: usize, len: usize },
    #[error("invalid binarization threshold {0}: must be 1, 2 or 3")]
    InvalidThreshold(u8),
    #[error("split not found: {location}")]
    MissingSplit { location: String },
}

macro_rules! code_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $code:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn code(self) -> &'static str {
                match self { $($name::$variant => $code),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.code())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let lower = s.trim().to_ascii_lowercase();
                $(if lower == $code { return Ok($name::$variant); })+
                Err(format!("unknown {} `{}`", stringify!($name).to_ascii_lowercase(), s))
            }
        }
    };
}

code_enum!(
    /// Task languages.
    Language {
        En => "en",
        Zh => "zh",
        De => "de",
        Es => "es",
        It => "it",
        Fa => "fa",
        Ru => "ru",
    }
);

code_enum!(
    /// Figures of speech.
    Figure {
        Hyperbole => "hyperbole",
        Idiom => "idiom",
        Metaphor => "metaphor",
    }
);

code_enum!(
    /// Binary sentence label. `Literal < Figurative`.
    Label {
        Literal => "literal",
        Figurative => "figurative",
    }
);

code_enum!(
    Split {
        Train => "train",
        Valid => "valid",
        Test => "test",
    }
);

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Literal => 0,
            Label::Figurative => 1,
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Literal => Label::Figurative,
            Label::Figurative => Label::Literal,
        }
    }
}

/// The ten (figure, language) combinations with data.
pub const TASK_PAIRS: [(Figure, Language); 10] = [
    (Figure::Hyperbole, Language::En),
    (Figure::Hyperbole, Language::Zh),
    (Figure::Idiom, Language::En),
    (Figure::Idiom, Language::De),
    (Figure::Idiom, Language::Es),
    (Figure::Idiom, Language::It),
    (Figure::Metaphor, Language::En),
    (Figure::Metaphor, Language::Es),
    (Figure::Metaphor, Language::Fa),
    (Figure::Metaphor, Language::Ru),
];

pub fn is_supported(figure: Figure, language: Language) -> bool {
    TASK_PAIRS.contains(&(figure, language))
}

/// Languages with data for `figure`, in registry order.
pub fn languages_for(figure: Figure) -> Vec<Language> {
    TASK_PAIRS
        .iter()
        .filter(|(f, _)| *f == figure)
        .map(|(_, l)| *l)
        .collect()
}

/// Where a record came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub record: String,
}

/// One sentence-level example in the canonical form.
///
/// `spans` holds `(start, end)` character offsets (Unicode scalar values,
/// end exclusive) of idiomatic expressions; it is empty for every other
/// source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub figure: Figure,
    pub label: Label,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spans: Vec<(usize, usize)>,
    pub source: Provenance,
}

impl LabeledExample {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidExample {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.text.split_whitespace().next().is_none() {
            return Err(invalid("empty text".into()));
        }
        if !is_supported(self.figure, self.language) {
            return Err(invalid(format!(
                "({}, {}) is not a supported task",
                self.figure, self.language
            )));
        }
        let len = self.text.chars().count();
        let mut prev_end = 0;
        for (i, &(start, end)) in self.spans.iter().enumerate() {
            if start >= end || end > len {
                return Err(invalid(format!("span {i} ({start}, {end}) out of bounds")));
            }
            if i > 0 && start < prev_end {
                return Err(invalid(format!("span {i} overlaps or is unsorted")));
            }
            prev_end = end;
        }
        Ok(())
    }

    /// Surface strings of the expression spans.
    pub fn span_texts(&self) -> Vec<String> {
        let chars: Vec<char> = self.text.chars().collect();
        self.spans
            .iter()
            .filter(|(s, e)| s < e && *e <= chars.len())
            .map(|&(s, e)| chars[s..e].iter().collect())
            .collect()
    }
}

#[cfg(test)]
pub(crate) fn example(id: &str, text: &str, figure: Figure, language: Language, label: Label) -> LabeledExample {
    LabeledExample {
        id: id.into(),
        text: text.into(),
        language,
        figure,
        label,
        split: Split::Train,
        spans: Vec::new(),
        source: Provenance {
            dataset: "test".into(),
            record: id.into(),
        },
    }
}
