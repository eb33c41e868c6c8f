use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{is_supported, CorpusError, Figure, Label, LabeledExample, Language, Provenance, Split};
use crate::par::Exec;
use crate::util::normalize_whitespace;

/// Dataset name, language and split shared by every record of one source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceInfo {
    pub dataset: String,
    pub language: Language,
    pub split: Split,
}

impl SourceInfo {
    pub fn new(dataset: impl Into<String>, language: Language, split: Split) -> Self {
        SourceInfo {
            dataset: dataset.into(),
            language,
            split,
        }
    }

    fn example_id(&self, figure: Figure, record: &str) -> String {
        format!(
            "{}/{}/{}/{}/{}",
            figure, self.language, self.split, self.dataset, record
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectReason {
    MissingText,
    UnrecognizedLabel {
        value: String,
    },
    UnknownTag {
        token: usize,
        tag: String,
    },
    /// Inside-tag without an opening begin-tag.
    InconsistentTags {
        token: usize,
        tag: String,
    },
    EmptyToken {
        token: usize,
    },
    ScoreOutOfRange {
        value: String,
    },
    /// Score between literal and the figurative threshold.
    DroppedByPolicy {
        score: u8,
    },
    /// A second record with the id of an earlier one in the same split.
    DuplicateId {
        id: String,
    },
    Invalid {
        message: String,
    },
}

impl RejectReason {
    pub fn is_policy_drop(&self) -> bool {
        matches!(self, RejectReason::DroppedByPolicy { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub dataset: String,
    pub record: String,
    #[serde(flatten)]
    pub reason: RejectReason,
}

/// Result of ingesting one source: `accepted.len() + rejected.len()` always
/// equals the number of input records, and `accepted` keeps input order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub accepted: Vec<LabeledExample>,
    pub rejected: Vec<Rejection>,
}

impl IngestOutcome {
    pub fn dropped_by_policy(&self) -> usize {
        self.rejected.iter().filter(|r| r.reason.is_policy_drop()).count()
    }

    pub fn extend(&mut self, other: IngestOutcome) {
        self.accepted.extend(other.accepted);
        self.rejected.extend(other.rejected);
    }

    fn collect(source: &SourceInfo, results: Vec<(String, Result<LabeledExample, RejectReason>)>) -> Self {
        let mut out = IngestOutcome::default();
        for (record, result) in results {
            match result {
                Ok(ex) => out.accepted.push(ex),
                Err(reason) => {
                    if reason.is_policy_drop() {
                        debug!("{}: record {record} dropped: {reason:?}", source.dataset);
                    } else {
                        warn!("{}: record {record} rejected: {reason:?}", source.dataset);
                    }
                    out.rejected.push(Rejection {
                        dataset: source.dataset.clone(),
                        record,
                        reason,
                    });
                }
            }
        }
        out
    }
}

fn build(
    source: &SourceInfo,
    figure: Figure,
    record: &str,
    text: String,
    label: Label,
    spans: Vec<(usize, usize)>,
) -> Result<LabeledExample, RejectReason> {
    let ex = LabeledExample {
        id: source.example_id(figure, record),
        text,
        language: source.language,
        figure,
        label,
        split: source.split,
        spans,
        source: Provenance {
            dataset: source.dataset.clone(),
            record: record.to_string(),
        },
    };
    ex.validate()
        .map_err(|e| RejectReason::Invalid { message: e.to_string() })?;
    Ok(ex)
}

fn check_task(figure: Figure, language: Language) -> Result<(), CorpusError> {
    if is_supported(figure, language) {
        Ok(())
    } else {
        Err(CorpusError::UnsupportedTask { figure, language })
    }
}

/// A hyperbole source row. Paired sources are flattened by the reader into
/// one row per side of each pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperboleRow {
    pub id: String,
    pub text: Option<String>,
    pub label: String,
}

fn hyperbole_label(indicator: &str) -> Option<Label> {
    match indicator.trim().to_lowercase().as_str() {
        "1" | "hyperbole" | "hyperbolic" | "figurative" | "yes" | "true" => Some(Label::Figurative),
        "0" | "literal" | "non-hyperbolic" | "no" | "false" => Some(Label::Literal),
        _ => None,
    }
}

pub fn ingest_hyperbole(rows: &[HyperboleRow], source: &SourceInfo, exec: Exec) -> Result<IngestOutcome, CorpusError> {
    check_task(Figure::Hyperbole, source.language)?;
    let results = exec.map(rows, |row| {
        let result = (|| {
            let text = row
                .text
                .as_deref()
                .map(normalize_whitespace)
                .filter(|t| !t.is_empty())
                .ok_or(RejectReason::MissingText)?;
            let label = hyperbole_label(&row.label).ok_or_else(|| RejectReason::UnrecognizedLabel {
                value: row.label.clone(),
            })?;
            build(source, Figure::Hyperbole, &row.id, text, label, Vec::new())
        })();
        (row.id.clone(), result)
    });
    Ok(IngestOutcome::collect(source, results))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub token: String,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub id: String,
    pub tokens: Vec<TaggedToken>,
}

enum Tag {
    Outside,
    Begin,
    Inside,
}

fn parse_tag(tag: &str) -> Option<Tag> {
    let t = tag.trim();
    if t == "O" {
        Some(Tag::Outside)
    } else if t == "B" || t.starts_with("B-") {
        Some(Tag::Begin)
    } else if t == "I" || t.starts_with("I-") {
        Some(Tag::Inside)
    } else {
        None
    }
}

/// Joins tokens with single spaces and converts begin/inside runs into
/// character spans over the joined text.
fn convert_tagged(sentence: &TaggedSentence) -> Result<(String, Vec<(usize, usize)>), RejectReason> {
    let mut text = String::new();
    let mut chars = 0usize;
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, tt) in sentence.tokens.iter().enumerate() {
        let token = normalize_whitespace(&tt.token);
        if token.is_empty() {
            return Err(RejectReason::EmptyToken { token: i });
        }
        let tag = parse_tag(&tt.tag).ok_or_else(|| RejectReason::UnknownTag {
            token: i,
            tag: tt.tag.clone(),
        })?;
        if !text.is_empty() {
            text.push(' ');
            chars += 1;
        }
        let start = chars;
        text.push_str(&token);
        chars += token.chars().count();
        match tag {
            Tag::Outside => spans.extend(open.take()),
            Tag::Begin => {
                spans.extend(open.take());
                open = Some((start, chars));
            }
            Tag::Inside => match open.as_mut() {
                Some(span) => span.1 = chars,
                None => {
                    return Err(RejectReason::InconsistentTags {
                        token: i,
                        tag: tt.tag.clone(),
                    })
                }
            },
        }
    }
    spans.extend(open);
    Ok((text, spans))
}

/// Word-level idiom tags to sentence labels: figurative iff at least one
/// token is inside an idiom span.
pub fn ingest_idiom_word_level(
    sentences: &[TaggedSentence],
    source: &SourceInfo,
    exec: Exec,
) -> Result<IngestOutcome, CorpusError> {
    check_task(Figure::Idiom, source.language)?;
    let results = exec.map(sentences, |s| {
        let result = (|| {
            if s.tokens.is_empty() {
                return Err(RejectReason::MissingText);
            }
            let (text, spans) = convert_tagged(s)?;
            let label = if spans.is_empty() {
                Label::Literal
            } else {
                Label::Figurative
            };
            build(source, Figure::Idiom, &s.id, text, label, spans)
        })();
        (s.id.clone(), result)
    });
    Ok(IngestOutcome::collect(source, results))
}

/// Maps the four-point metaphoricity scale onto labels: 0 is literal, scores
/// at or above `threshold` are figurative, anything in between is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarizationPolicy {
    pub threshold: u8,
}

impl Default for BinarizationPolicy {
    fn default() -> Self {
        BinarizationPolicy { threshold: 2 }
    }
}

impl BinarizationPolicy {
    pub fn new(threshold: u8) -> Result<Self, CorpusError> {
        if (1..=3).contains(&threshold) {
            Ok(BinarizationPolicy { threshold })
        } else {
            Err(CorpusError::InvalidThreshold(threshold))
        }
    }

    /// `None` means the score is dropped.
    pub fn label(&self, score: u8) -> Option<Label> {
        if score == 0 {
            Some(Label::Literal)
        } else if score >= self.threshold {
            Some(Label::Figurative)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredRow {
    pub id: String,
    pub sentence: Option<String>,
    pub score: String,
}

fn parse_score(raw: &str) -> Option<u8> {
    let t = raw.trim();
    if let Ok(v) = t.parse::<u8>() {
        return (v <= 3).then_some(v);
    }
    let f: f64 = t.parse().ok()?;
    (f.fract() == 0.0 && (0.0..=3.0).contains(&f)).then_some(f as u8)
}

pub fn ingest_metaphor_lcc(
    rows: &[ScoredRow],
    source: &SourceInfo,
    policy: BinarizationPolicy,
    exec: Exec,
) -> Result<IngestOutcome, CorpusError> {
    check_task(Figure::Metaphor, source.language)?;
    BinarizationPolicy::new(policy.threshold)?;
    let results = exec.map(rows, |row| {
        let result = (|| {
            let text = row
                .sentence
                .as_deref()
                .map(normalize_whitespace)
                .filter(|t| !t.is_empty())
                .ok_or(RejectReason::MissingText)?;
            let score = parse_score(&row.score).ok_or_else(|| RejectReason::ScoreOutOfRange {
                value: row.score.clone(),
            })?;
            let label = policy.label(score).ok_or(RejectReason::DroppedByPolicy { score })?;
            build(source, Figure::Metaphor, &row.id, text, label, Vec::new())
        })();
        (row.id.clone(), result)
    });
    Ok(IngestOutcome::collect(source, results))
}
