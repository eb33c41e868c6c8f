use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_supported, Figure, Language};
use crate::prompt::TemplateRef;

/// One detection task: a (figure, language) pair and how its inputs are
/// formatted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub figure: Figure,
    pub language: Language,
    pub template: TemplateRef,
}

impl TaskSpec {
    pub fn new(figure: Figure, language: Language, template: impl Into<TemplateRef>) -> Result<Self, String> {
        if !is_supported(figure, language) {
            return Err(format!("({figure}, {language}) is not a supported task"));
        }
        Ok(TaskSpec {
            figure,
            language,
            template: template.into(),
        })
    }

    /// `figure-language`, e.g. `idiom-en`.
    pub fn key(&self) -> String {
        format!("{}-{}", self.figure, self.language)
    }

    pub fn with_template(&self, template: impl Into<TemplateRef>) -> Self {
        TaskSpec {
            template: template.into(),
            ..self.clone()
        }
    }

    pub fn with_language(&self, language: Language) -> Result<Self, String> {
        TaskSpec::new(self.figure, language, self.template.clone())
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}@{}", self.figure, self.language, self.template)
    }
}

/// Parses `figure-language` or `figure-language@template`; the template
/// defaults to `A`.
impl FromStr for TaskSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (task, template) = match s.split_once('@') {
            Some((t, tpl)) => (t, TemplateRef::from(tpl.trim())),
            None => (s, TemplateRef::id("A")),
        };
        let (fig, lang) = task
            .trim()
            .split_once(['-', ':', '/'])
            .ok_or_else(|| format!("expected `figure-language`, got `{s}`"))?;
        TaskSpec::new(fig.parse()?, lang.parse()?, template)
    }
}
