use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{normalize_prediction, PromptError};
use crate::corpus::{Figure, Label, Language};

pub const TASK_PLACEHOLDER: &str = "{TASK}";
pub const TEXT_PLACEHOLDER: &str = "{TEXT}";
const ARTICLE_SLOT: &str = "a(n) {TASK}";

/// Name of a figure of speech inside one template, with the indefinite
/// article to use where the pattern says `a(n) {TASK}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskName {
    Plain(String),
    WithArticle { name: String, article: String },
}

impl TaskName {
    pub fn name(&self) -> &str {
        match self {
            TaskName::Plain(n) | TaskName::WithArticle { name: n, .. } => n,
        }
    }

    pub fn article(&self) -> Option<&str> {
        match self {
            TaskName::Plain(_) => None,
            TaskName::WithArticle { article, .. } => Some(article),
        }
    }
}

/// Target strings for one figure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verbalizer {
    pub literal: String,
    pub figurative: String,
}

impl Verbalizer {
    pub fn get(&self, label: Label) -> &str {
        match label {
            Label::Literal => &self.literal,
            Label::Figurative => &self.figurative,
        }
    }
}

/// A validated prompt template.
///
/// The pattern is resolved per figure when the template is built: article
/// and task name are substituted once and the rendered text around
/// `{TEXT}` is stored, so [`PromptTemplate::render`] is a concatenation
/// that never touches the input sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemplateSpec", into = "TemplateSpec")]
pub struct PromptTemplate {
    pub id: String,
    pub language: Language,
    pub pattern: String,
    pub task_names: BTreeMap<Figure, TaskName>,
    pub verbalizer: BTreeMap<Figure, Verbalizer>,
    resolved: BTreeMap<Figure, (String, String)>,
}

/// Serialized form of a template, before validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub id: String,
    pub language: Language,
    pub pattern: String,
    pub task_names: BTreeMap<Figure, TaskName>,
    pub verbalizer: BTreeMap<Figure, Verbalizer>,
}

impl TryFrom<TemplateSpec> for PromptTemplate {
    type Error = PromptError;

    fn try_from(spec: TemplateSpec) -> Result<Self, Self::Error> {
        PromptTemplate::new(spec.id, spec.language, spec.pattern, spec.task_names, spec.verbalizer)
    }
}

impl From<PromptTemplate> for TemplateSpec {
    fn from(t: PromptTemplate) -> Self {
        TemplateSpec {
            id: t.id,
            language: t.language,
            pattern: t.pattern,
            task_names: t.task_names,
            verbalizer: t.verbalizer,
        }
    }
}

impl PromptTemplate {
    pub fn new(
        id: String,
        language: Language,
        pattern: String,
        task_names: BTreeMap<Figure, TaskName>,
        verbalizer: BTreeMap<Figure, Verbalizer>,
    ) -> Result<Self, PromptError> {
        let invalid = |reason: String| PromptError::InvalidTemplate {
            id: id.clone(),
            language,
            reason,
        };
        for ph in [TASK_PLACEHOLDER, TEXT_PLACEHOLDER] {
            let n = pattern.matches(ph).count();
            if n != 1 {
                return Err(invalid(format!("pattern must contain {ph} exactly once, found {n}")));
            }
        }
        let needs_article = pattern.contains(ARTICLE_SLOT);
        let mut resolved = BTreeMap::new();
        for figure in Figure::ALL {
            let name = task_names
                .get(figure)
                .ok_or_else(|| invalid(format!("no task name for {figure}")))?;
            let verb = verbalizer
                .get(figure)
                .ok_or_else(|| invalid(format!("no verbalizer for {figure}")))?;
            if name.name().trim().is_empty() {
                return Err(invalid(format!("empty task name for {figure}")));
            }
            let lit = normalize_prediction(&verb.literal);
            let fig = normalize_prediction(&verb.figurative);
            if lit.is_empty() || fig.is_empty() {
                return Err(invalid(format!("empty verbalizer string for {figure}")));
            }
            if lit == fig {
                return Err(invalid(format!("verbalizer strings for {figure} are not distinct")));
            }
            let filled = if needs_article {
                let article = name
                    .article()
                    .ok_or_else(|| invalid(format!("pattern needs an article for {figure}")))?;
                pattern.replace(ARTICLE_SLOT, &format!("{article} {}", name.name()))
            } else {
                pattern.replace(TASK_PLACEHOLDER, name.name())
            };
            let (head, tail) = filled
                .split_once(TEXT_PLACEHOLDER)
                .expect("text placeholder checked above");
            // The figurative answer must not be readable off the prompt.
            let frame = format!("{head} {tail}").to_lowercase();
            if frame.contains(&verb.figurative.to_lowercase()) {
                return Err(invalid(format!(
                    "rendered prompt for {figure} contains the figurative verbalization `{}`",
                    verb.figurative
                )));
            }
            if normalize_prediction(name.name()) == fig {
                return Err(invalid(format!(
                    "task name `{}` equals the figurative verbalization",
                    name.name()
                )));
            }
            resolved.insert(*figure, (head.to_string(), tail.to_string()));
        }
        Ok(PromptTemplate {
            id,
            language,
            pattern,
            task_names,
            verbalizer,
            resolved,
        })
    }

    pub fn render(&self, figure: Figure, text: &str) -> Result<String, PromptError> {
        let (head, tail) = self.resolved.get(&figure).ok_or_else(|| PromptError::UnknownFigure {
            id: self.id.clone(),
            figure,
        })?;
        let mut out = String::with_capacity(head.len() + text.len() + tail.len());
        out.push_str(head);
        out.push_str(text);
        out.push_str(tail);
        Ok(out)
    }

    pub fn verbalize(&self, label: Label, figure: Figure) -> &str {
        self.verbalizer
            .get(&figure)
            .expect("templates cover every figure")
            .get(label)
    }

    pub fn parse(&self, raw: &str, figure: Figure) -> super::Prediction {
        super::parse_against(raw, &self.verbalizer[&figure])
    }

    /// Rendered prompt with the text slot empty.
    pub fn frame(&self, figure: Figure) -> Option<(&str, &str)> {
        self.resolved.get(&figure).map(|(h, t)| (h.as_str(), t.as_str()))
    }
}
