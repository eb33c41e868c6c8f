//! Prompt rendering, label verbalization and prediction parsing.

mod registry;
mod template;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Figure, Label, LabeledExample, Language};
use crate::modeling::TaskSpec;

pub use registry::TemplateRegistry;
pub use template::{PromptTemplate, TaskName, TemplateSpec, Verbalizer, TASK_PLACEHOLDER, TEXT_PLACEHOLDER};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {id} ({language}): {reason}")]
    InvalidTemplate {
        id: String,
        language: Language,
        reason: String,
    },
    #[error("template {id} has no entry for {figure}")]
    UnknownFigure { id: String, figure: Figure },
    #[error("no template `{id}` for language {language}")]
    UnknownTemplate { id: String, language: Language },
    #[error("duplicate template `{id}` for language {language}")]
    DuplicateTemplate { id: String, language: Language },
    #[error("template registry: {0}")]
    Registry(String),
}

/// Which input formatting a task uses: a registry template, or the raw
/// sentence with no instruction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum TemplateRef {
    Vanilla,
    Id(String),
}

impl TemplateRef {
    pub const VANILLA: &'static str = "vanilla";

    pub fn id(id: impl Into<String>) -> Self {
        TemplateRef::Id(id.into())
    }
}

impl From<String> for TemplateRef {
    fn from(s: String) -> Self {
        if s.eq_ignore_ascii_case(Self::VANILLA) {
            TemplateRef::Vanilla
        } else {
            TemplateRef::Id(s)
        }
    }
}

impl From<&str> for TemplateRef {
    fn from(s: &str) -> Self {
        TemplateRef::from(s.to_string())
    }
}

impl From<TemplateRef> for String {
    fn from(t: TemplateRef) -> Self {
        t.to_string()
    }
}

impl fmt::Display for TemplateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateRef::Vanilla => f.write_str(Self::VANILLA),
            TemplateRef::Id(id) => f.write_str(id),
        }
    }
}

/// A parsed model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    Literal,
    Figurative,
    Unparsed,
}

impl Prediction {
    pub fn label(self) -> Option<Label> {
        match self {
            Prediction::Literal => Some(Label::Literal),
            Prediction::Figurative => Some(Label::Figurative),
            Prediction::Unparsed => None,
        }
    }
}

impl From<Label> for Prediction {
    fn from(l: Label) -> Self {
        match l {
            Label::Literal => Prediction::Literal,
            Label::Figurative => Prediction::Figurative,
        }
    }
}

const TERMINAL_PUNCT: &[char] = &[
    '.', '!', '?', ',', ';', ':', '。', '！', '？', '，', '；', '：', '…', '؟', '"', '\'', '»', '”',
];

/// Trim, case-fold and strip terminal punctuation.
pub fn normalize_prediction(raw: &str) -> String {
    let mut s = raw.trim().to_lowercase();
    loop {
        let t = s.trim_end().trim_end_matches(TERMINAL_PUNCT);
        if t.len() == s.len() {
            break;
        }
        s = t.to_string();
    }
    s
}

/// Exact match on the normalised strings wins; otherwise a non-empty output
/// that is a prefix of exactly one verbalization; otherwise unparsed.
pub fn parse_against(raw: &str, verbalizer: &Verbalizer) -> Prediction {
    let out = normalize_prediction(raw);
    let lit = normalize_prediction(&verbalizer.literal);
    let fig = normalize_prediction(&verbalizer.figurative);
    if out == lit {
        return Prediction::Literal;
    }
    if out == fig {
        return Prediction::Figurative;
    }
    if out.is_empty() {
        return Prediction::Unparsed;
    }
    match (lit.starts_with(&out), fig.starts_with(&out)) {
        (true, false) => Prediction::Literal,
        (false, true) => Prediction::Figurative,
        _ => Prediction::Unparsed,
    }
}

pub fn render(template: &PromptTemplate, figure: Figure, text: &str) -> Result<String, PromptError> {
    template.render(figure, text)
}

pub fn verbalize(label: Label, figure: Figure, template: &PromptTemplate) -> &str {
    template.verbalize(label, figure)
}

pub fn parse_prediction(raw: &str, figure: Figure, template: &PromptTemplate) -> Prediction {
    template.parse(raw, figure)
}

/// A rendered training or evaluation pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub input_text: String,
    pub target_text: String,
    pub label: Label,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub example_id: String,
    pub task: TaskSpec,
}

/// Turns examples of one task into model inputs and targets, and parses
/// outputs back.
#[derive(Debug, Clone)]
pub enum InputFormat {
    /// Raw sentence in, verbalized label out.
    Vanilla(PromptTemplate),
    Prompt(PromptTemplate),
}

/// Template whose verbalizer the vanilla format borrows.
pub const VANILLA_VERBALIZER_TEMPLATE: &str = "A";

impl InputFormat {
    pub fn for_task(registry: &TemplateRegistry, task: &TaskSpec) -> Result<Self, PromptError> {
        match &task.template {
            TemplateRef::Vanilla => registry
                .resolve(VANILLA_VERBALIZER_TEMPLATE, Language::En)
                .cloned()
                .map(InputFormat::Vanilla),
            TemplateRef::Id(id) => registry.resolve(id, task.language).cloned().map(InputFormat::Prompt),
        }
    }

    fn template(&self) -> &PromptTemplate {
        match self {
            InputFormat::Vanilla(t) | InputFormat::Prompt(t) => t,
        }
    }

    pub fn input(&self, figure: Figure, text: &str) -> Result<String, PromptError> {
        match self {
            InputFormat::Vanilla(_) => Ok(text.to_string()),
            InputFormat::Prompt(t) => t.render(figure, text),
        }
    }

    pub fn target(&self, label: Label, figure: Figure) -> &str {
        self.template().verbalize(label, figure)
    }

    pub fn parse(&self, raw: &str, figure: Figure) -> Prediction {
        self.template().parse(raw, figure)
    }

    pub fn template_id(&self) -> String {
        match self {
            InputFormat::Vanilla(_) => TemplateRef::VANILLA.to_string(),
            InputFormat::Prompt(t) => t.id.clone(),
        }
    }

    pub fn instance(&self, ex: &LabeledExample, task: &TaskSpec) -> Result<PromptInstance, PromptError> {
        Ok(PromptInstance {
            input_text: self.input(ex.figure, &ex.text)?,
            target_text: self.target(ex.label, ex.figure).to_string(),
            label: ex.label,
            origin: Origin {
                example_id: ex.id.clone(),
                task: task.clone(),
            },
        })
    }

    pub fn instances(&self, examples: &[LabeledExample], task: &TaskSpec) -> Result<Vec<PromptInstance>, PromptError> {
        examples.iter().map(|ex| self.instance(ex, task)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn en() -> Verbalizer {
        Verbalizer {
            literal: "Literal".into(),
            figurative: "Idiomatic".into(),
        }
    }

    #[test]
    fn parse_cases() {
        assert_eq!(parse_against("Idiomatic", &en()), Prediction::Figurative);
        assert_eq!(parse_against("literal.", &en()), Prediction::Literal);
        assert_eq!(parse_against("  LITERAL !! ", &en()), Prediction::Literal);
        assert_eq!(parse_against("idiom", &en()), Prediction::Figurative);
        assert_eq!(parse_against("I think so", &en()), Prediction::Unparsed);
        assert_eq!(parse_against("", &en()), Prediction::Unparsed);
        assert_eq!(parse_against("...", &en()), Prediction::Unparsed);
        assert_eq!(parse_against("Idiomatically", &en()), Prediction::Unparsed);
    }

    #[test]
    fn ambiguous_prefix_is_unparsed() {
        let v = Verbalizer {
            literal: "Literal".into(),
            figurative: "Literary".into(),
        };
        assert_eq!(parse_against("liter", &v), Prediction::Unparsed);
        assert_eq!(parse_against("literar", &v), Prediction::Figurative);
    }

    #[test]
    fn template_ref_serde() {
        assert_eq!(TemplateRef::from("vanilla"), TemplateRef::Vanilla);
        assert_eq!(serde_json::to_string(&TemplateRef::id("B")).unwrap(), "\"B\"");
        assert_eq!(
            serde_json::from_str::<TemplateRef>("\"VANILLA\"").unwrap(),
            TemplateRef::Vanilla
        );
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,20}") {
            let once = normalize_prediction(&s);
            prop_assert_eq!(normalize_prediction(&once), once);
        }
    }
}
