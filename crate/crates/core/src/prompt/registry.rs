use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{PromptError, PromptTemplate, TaskName, Verbalizer};
use crate::corpus::{Figure, Language};

const BUILTIN: &str = include_str!("templates.toml");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    verbalizers: BTreeMap<String, BTreeMap<Figure, Verbalizer>>,
    template: Vec<TemplateEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateEntry {
    id: String,
    language: Language,
    pattern: String,
    task_names: BTreeMap<Figure, TaskName>,
    verbalizer: VerbalizerRef,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VerbalizerRef {
    Named(String),
    Inline(BTreeMap<Figure, Verbalizer>),
}

/// Templates keyed by `(id, language)`.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<(String, Language), PromptTemplate>,
}

impl TemplateRegistry {
    /// The registry shipped with the crate: English templates A, B, C and the
    /// in-lingual family D in every task language.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN).expect("builtin template registry is valid")
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN
    }

    pub fn from_toml_str(src: &str) -> Result<Self, PromptError> {
        let file: RegistryFile = toml::from_str(src).map_err(|e| PromptError::Registry(e.to_string()))?;
        let mut templates = BTreeMap::new();
        for entry in file.template {
            let verbalizer = match entry.verbalizer {
                VerbalizerRef::Inline(v) => v,
                VerbalizerRef::Named(key) => file
                    .verbalizers
                    .get(&key)
                    .cloned()
                    .ok_or_else(|| PromptError::Registry(format!("unknown verbalizer table `{key}`")))?,
            };
            let t = PromptTemplate::new(entry.id, entry.language, entry.pattern, entry.task_names, verbalizer)?;
            let key = (t.id.clone(), t.language);
            if templates.contains_key(&key) {
                return Err(PromptError::DuplicateTemplate {
                    id: key.0,
                    language: key.1,
                });
            }
            templates.insert(key, t);
        }
        Ok(TemplateRegistry { templates })
    }

    pub fn from_path(path: &Path) -> Result<Self, PromptError> {
        let src =
            std::fs::read_to_string(path).map_err(|e| PromptError::Registry(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    pub fn get(&self, id: &str, language: Language) -> Option<&PromptTemplate> {
        self.templates.get(&(id.to_string(), language))
    }

    /// The template for a task in `task_language`: the translation in that
    /// language when one exists, otherwise the English one.
    pub fn resolve(&self, id: &str, task_language: Language) -> Result<&PromptTemplate, PromptError> {
        self.get(id, task_language)
            .or_else(|| self.get(id, Language::En))
            .ok_or_else(|| PromptError::UnknownTemplate {
                id: id.to_string(),
                language: task_language,
            })
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.templates.keys().any(|(i, _)| i == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.templates.keys().map(|(i, _)| i.as_str()).collect();
        ids.dedup();
        ids
    }

    pub fn templates(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::prompt::{parse_prediction, render, verbalize, Prediction};

    #[test]
    fn builtin_template_a_idiom() {
        let reg = TemplateRegistry::builtin();
        let a = reg.get("A", Language::En).unwrap();
        assert_eq!(
            render(a, Figure::Idiom, "He kicked the bucket.").unwrap(),
            "Which figure of speech does this text contain? (A) Literal. (B) Idiom. | Text: He kicked the bucket."
        );
    }

    #[test]
    fn builtin_template_d_italian() {
        let reg = TemplateRegistry::builtin();
        let d = reg.resolve("D", Language::It).unwrap();
        assert_eq!(d.language, Language::It);
        let out = render(d, Figure::Idiom, "Ha tirato le cuoia.").unwrap();
        assert_eq!(
            out,
            "Quale figura retorica contiene questo testo? (A) Letterale. (B) Espressione idiomatica. | Testo: Ha tirato le cuoia."
        );
    }

    #[test]
    fn articles_resolved() {
        let reg = TemplateRegistry::builtin();
        let b = reg.get("B", Language::En).unwrap();
        let c = reg.get("C", Language::En).unwrap();
        assert_eq!(
            render(b, Figure::Idiom, "x").unwrap(),
            "Is there an idiom in this text? | Text: x"
        );
        assert_eq!(
            render(b, Figure::Metaphor, "x").unwrap(),
            "Is there a metaphor in this text? | Text: x"
        );
        assert_eq!(
            render(c, Figure::Hyperbole, "x").unwrap(),
            "Does this text contain a hyperbole? | Text: x"
        );
    }

    #[test]
    fn english_verbalizer_table() {
        let reg = TemplateRegistry::builtin();
        let a = reg.get("A", Language::En).unwrap();
        assert_eq!(verbalize(Label::Figurative, Figure::Idiom, a), "Idiomatic");
        assert_eq!(verbalize(Label::Figurative, Figure::Hyperbole, a), "Hyperbolic");
        assert_eq!(verbalize(Label::Figurative, Figure::Metaphor, a), "Metaphoric");
        for f in Figure::ALL {
            assert_eq!(verbalize(Label::Literal, *f, a), "Literal");
        }
    }

    #[test]
    fn completeness() {
        let reg = TemplateRegistry::builtin();
        for id in ["A", "B", "C"] {
            assert!(reg.get(id, Language::En).is_some());
        }
        for lang in Language::ALL {
            let d = reg.get("D", *lang).unwrap_or_else(|| panic!("D missing for {lang}"));
            assert_eq!(d.language, *lang);
        }
        assert_eq!(reg.ids(), vec!["A", "B", "C", "D"]);
        // Cross-lingual templates fall back to English.
        assert_eq!(reg.resolve("B", Language::Fa).unwrap().language, Language::En);
    }

    #[test]
    fn round_trip_every_triple() {
        let reg = TemplateRegistry::builtin();
        for t in reg.templates() {
            for f in Figure::ALL {
                for l in Label::ALL {
                    let v = verbalize(*l, *f, t);
                    assert_eq!(
                        parse_prediction(v, *f, t),
                        Prediction::from(*l),
                        "{} {} {f} {l}",
                        t.id,
                        t.language
                    );
                }
            }
        }
    }

    #[test]
    fn no_figurative_leakage_and_distinct_option_names() {
        let reg = TemplateRegistry::builtin();
        for t in reg.templates() {
            for f in Figure::ALL {
                let fig = verbalize(Label::Figurative, *f, t);
                let lit = t.render(*f, "").unwrap();
                assert!(!lit.to_lowercase().contains(&fig.to_lowercase()));
                assert_ne!(t.task_names[f].name(), fig);
            }
        }
    }

    #[test]
    fn rejects_bad_patterns() {
        let base = |pattern: &str| {
            format!(
                r#"
[verbalizers.en]
hyperbole = {{ literal = "Literal", figurative = "Hyperbolic" }}
idiom = {{ literal = "Literal", figurative = "Idiomatic" }}
metaphor = {{ literal = "Literal", figurative = "Metaphoric" }}
[[template]]
id = "X"
language = "en"
pattern = "{pattern}"
task_names = {{ hyperbole = "Hyperbole", idiom = "Idiom", metaphor = "Metaphor" }}
verbalizer = "en"
"#
            )
        };
        assert!(TemplateRegistry::from_toml_str(&base("Q {TASK} {TEXT}")).is_ok());
        assert!(TemplateRegistry::from_toml_str(&base("Q {TEXT}")).is_err());
        assert!(TemplateRegistry::from_toml_str(&base("{TASK} {TASK} {TEXT}")).is_err());
        assert!(TemplateRegistry::from_toml_str(&base("Is there a(n) {TASK}? {TEXT}")).is_err());
        assert!(TemplateRegistry::from_toml_str(&base("Idiomatic? {TASK} {TEXT}")).is_err());
    }

    #[test]
    fn rejects_duplicate_verbalizers_and_templates() {
        let dup = r#"
[[template]]
id = "X"
language = "en"
pattern = "{TASK}: {TEXT}"
task_names = { hyperbole = "H", idiom = "I", metaphor = "M" }
verbalizer = { hyperbole = { literal = "a", figurative = "A." }, idiom = { literal = "l", figurative = "f" }, metaphor = { literal = "l", figurative = "f" } }
"#;
        assert!(TemplateRegistry::from_toml_str(dup).is_err());
        let twice = r#"
[[template]]
id = "X"
language = "en"
pattern = "{TASK}: {TEXT}"
task_names = { hyperbole = "H", idiom = "I", metaphor = "M" }
verbalizer = { hyperbole = { literal = "l", figurative = "f" }, idiom = { literal = "l", figurative = "f" }, metaphor = { literal = "l", figurative = "f" } }
"#;
        let src = format!("{twice}{twice}");
        assert!(matches!(
            TemplateRegistry::from_toml_str(&src),
            Err(PromptError::DuplicateTemplate { .. })
        ));
    }

    #[test]
    fn render_keeps_text_verbatim() {
        let reg = TemplateRegistry::builtin();
        let a = reg.get("A", Language::En).unwrap();
        let tricky = "literally {TASK} and {TEXT} a(n) {TASK}  ";
        let out = render(a, Figure::Metaphor, tricky).unwrap();
        assert!(out.ends_with(tricky));
        assert_eq!(out, render(a, Figure::Metaphor, tricky).unwrap());
    }
}
