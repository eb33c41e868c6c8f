//! Experiment configuration: presets, TOML files and flag overrides.
//!
//! Resolution starts from a preset, overlays the config file and then the
//! command-line flags, all at the TOML value level, and deserializes the
//! result once. Unknown keys and wrong types are rejected with the key name.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use figdetect::corpus::is_supported;
use figdetect::modeling::{config_hash, BackendSpec, MixturePolicy, TaskSpec, TrainConfig};
use figdetect::prompt::TemplateRef;
use figdetect::reference::TASK_ORDER;
use figdetect::{Figure, Language, Split, TemplateRegistry};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

/// Model settings of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Accuracies produced elsewhere, imported for comparison.
    BaselineImport,
    /// Raw sentence in, label word out; one model per task.
    Vanilla,
    VanillaMultitask,
    /// Prompt template in, label word out; one model per task.
    Prompt,
    PromptMultitask,
}

impl Setting {
    pub const ALL: [Setting; 5] = [
        Setting::BaselineImport,
        Setting::Vanilla,
        Setting::VanillaMultitask,
        Setting::Prompt,
        Setting::PromptMultitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::BaselineImport => "baseline_import",
            Setting::Vanilla => "vanilla",
            Setting::VanillaMultitask => "vanilla_multitask",
            Setting::Prompt => "prompt",
            Setting::PromptMultitask => "prompt_multitask",
        }
    }

    pub fn is_multitask(self) -> bool {
        matches!(self, Setting::VanillaMultitask | Setting::PromptMultitask)
    }

    pub fn is_vanilla(self) -> bool {
        matches!(self, Setting::Vanilla | Setting::VanillaMultitask)
    }

    pub fn trains(self) -> bool {
        self != Setting::BaselineImport
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A `figure-language` pair without a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TaskKey {
    pub figure: Figure,
    pub language: Language,
}

impl TaskKey {
    pub fn all() -> Vec<TaskKey> {
        TASK_ORDER
            .iter()
            .map(|(figure, language)| TaskKey {
                figure: *figure,
                language: *language,
            })
            .collect()
    }

    pub fn with_template(self, template: &TemplateRef) -> TaskSpec {
        TaskSpec {
            figure: self.figure,
            language: self.language,
            template: template.clone(),
        }
    }
}

impl fmt::Display for TaskKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.figure, self.language)
    }
}

impl FromStr for TaskKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (fig, lang) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| format!("expected `figure-language`, got `{s}`"))?;
        let key = TaskKey {
            figure: fig.parse()?,
            language: lang.parse()?,
        };
        if !is_supported(key.figure, key.language) {
            return Err(format!("`{s}` is not a supported task"));
        }
        Ok(key)
    }
}

impl TryFrom<String> for TaskKey {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TaskKey> for String {
    fn from(k: TaskKey) -> Self {
        k.to_string()
    }
}

/// Where imported baseline accuracies come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineSource {
    /// The published encoder-classifier numbers bundled with the library.
    Reference,
    /// A CSV file with `task,accuracy` rows, accuracy in percent.
    File { path: PathBuf },
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Names the experiment record under `<out>/experiments/`.
    pub name: String,
    pub setting: Setting,
    /// Train on the English tasks only and evaluate on every listed task.
    pub en_only: bool,
    pub tasks: Vec<TaskKey>,
    /// Template ids, one model family per template. Vanilla settings use
    /// `vanilla`.
    pub templates: Vec<String>,
    pub mixture: MixturePolicy,
    pub eval_splits: Vec<Split>,
    /// Prepared corpus directory.
    pub data: PathBuf,
    pub out: PathBuf,
    pub backend: BackendSpec,
    pub train: TrainConfig,
    pub baseline: BaselineSource,
}

pub const SMOKE_PRESET: &str = "smoke";

pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = Setting::ALL
        .iter()
        .flat_map(|s| [s.name().to_string(), format!("{}_en_only", s.name())])
        .collect();
    names.push(SMOKE_PRESET.into());
    names
}

/// The named preset, complete and valid on its own.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (base, en_only) = match name.strip_suffix("_en_only") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let smoke = base == SMOKE_PRESET && !en_only;
    let setting = if smoke {
        Setting::PromptMultitask
    } else {
        *Setting::ALL.iter().find(|s| s.name() == base).ok_or_else(|| {
            CliError::Config(format!(
                "preset: unknown `{name}`; known: {}",
                preset_names().join(", ")
            ))
        })?
    };
    let mut config = ExperimentConfig {
        name: name.to_string(),
        setting,
        en_only,
        tasks: TaskKey::all(),
        templates: vec![if setting.is_vanilla() {
            TemplateRef::VANILLA.into()
        } else {
            "A".into()
        }],
        mixture: MixturePolicy::ConcatShuffle,
        eval_splits: vec![Split::Valid, Split::Test],
        data: PathBuf::from("prepared"),
        out: PathBuf::from("out"),
        backend: BackendSpec::Toy(Default::default()),
        train: TrainConfig::default(),
        baseline: BaselineSource::Reference,
    };
    if smoke {
        // oracle answers, one evaluation, seconds end to end
        config.backend = BackendSpec::Oracle;
        config.train.max_steps = Some(config.train.eval_interval);
    }
    Ok(config)
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub tasks: Option<Vec<String>>,
    pub templates: Option<Vec<String>>,
    pub backend: Option<String>,
    pub adapter: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub max_steps: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn layer(&self, current_backend: Option<&Value>) -> Result<Table> {
        let mut t = Table::new();
        let strings = |v: &[String]| Value::Array(v.iter().cloned().map(Value::String).collect());
        if let Some(n) = &self.name {
            t.insert("name".into(), Value::String(n.clone()));
        }
        if let Some(v) = &self.tasks {
            t.insert("tasks".into(), strings(v));
        }
        if let Some(v) = &self.templates {
            t.insert("templates".into(), strings(v));
        }
        if let Some(p) = &self.data {
            t.insert("data".into(), Value::String(p.display().to_string()));
        }
        if let Some(p) = &self.out {
            t.insert("out".into(), Value::String(p.display().to_string()));
        }
        let mut train = Table::new();
        if let Some(s) = self.seed {
            train.insert("seed".into(), Value::Integer(as_toml_int("seed", s)?));
        }
        if let Some(s) = self.max_steps {
            train.insert("max_steps".into(), Value::Integer(as_toml_int("max_steps", s)?));
        }
        if !train.is_empty() {
            t.insert("train".into(), Value::Table(train));
        }
        let mut backend = Table::new();
        if let Some(kind) = &self.backend {
            backend.insert("kind".into(), Value::String(kind.clone()));
        }
        if let Some(cmd) = &self.adapter {
            if self.backend.as_deref().is_some_and(|k| k != "external") {
                return Err(CliError::Config("--adapter only applies to --backend external".into()));
            }
            backend.insert("kind".into(), Value::String("external".into()));
            backend.insert("command".into(), strings(cmd));
        }
        if !backend.is_empty() {
            // a bare kind switch keeps the settings when the kind is unchanged
            let same = current_backend.and_then(|b| b.get("kind")) == backend.get("kind");
            if same && self.adapter.is_none() {
                backend.remove("kind");
            }
            if !backend.is_empty() {
                t.insert("backend".into(), Value::Table(backend));
            }
        }
        Ok(t)
    }
}

fn as_toml_int(field: &str, v: u64) -> Result<i64> {
    i64::try_from(v).map_err(|_| CliError::Config(format!("{field}: {v} is too large")))
}

/// Overlays `top` onto `base`. Tables merge key by key, except a `backend`
/// table naming a different `kind`, which replaces the old one.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => {
                if k == "backend" && t.get("kind").is_some_and(|kind| Some(kind) != b.get("kind")) {
                    *b = t;
                } else {
                    merge(b, t);
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Resolves preset, file and flags, then validates. Nothing is written.
pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<ExperimentConfig> {
    let mut file_layer = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    let file_preset = match file_layer.remove("preset") {
        Some(Value::String(s)) => Some(s),
        Some(other) => return Err(CliError::Config(format!("preset: expected a string, got {other}"))),
        None => None,
    };
    let name = flags.preset.clone().or(file_preset).ok_or_else(|| {
        CliError::Config(format!(
            "no preset given (use --preset or `preset = ...`); known: {}",
            preset_names().join(", ")
        ))
    })?;
    let base = preset(&name)?;
    let mut merged = Table::try_from(&base).map_err(|e| CliError::Other(format!("preset {name}: {e}")))?;
    // data paths in a file are relative to the file
    if let Some(dir) = file.and_then(Path::parent) {
        for key in ["data", "out"] {
            if let Some(Value::String(s)) = file_layer.get_mut(key) {
                *s = dir.join(&*s).display().to_string();
            }
        }
    }
    merge(&mut merged, file_layer);
    let flag_layer = flags.layer(merged.get("backend"))?;
    merge(&mut merged, flag_layer);
    let config: ExperimentConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string().trim_end().to_string()))?;
    config.validate(&TemplateRegistry::builtin())?;
    Ok(config)
}

fn invalid(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Field-level checks; the message starts with the offending key.
    pub fn validate(&self, registry: &TemplateRegistry) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(invalid(
                "name",
                format!("`{}` must be non-empty and use only [A-Za-z0-9._-]", self.name),
            ));
        }
        if self.tasks.is_empty() {
            return Err(invalid("tasks", "must list at least one task"));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = self.tasks.iter().find(|t| !seen.insert(**t)) {
            return Err(invalid("tasks", format!("`{dup}` listed twice")));
        }
        if self.eval_splits.is_empty() {
            return Err(invalid("eval_splits", "must list at least one split"));
        }
        if !self.setting.trains() {
            return Ok(());
        }
        if self.templates.is_empty() {
            return Err(invalid("templates", "must list at least one template"));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = self.templates.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(invalid("templates", format!("`{dup}` listed twice")));
        }
        for id in &self.templates {
            match TemplateRef::from(id.as_str()) {
                TemplateRef::Vanilla if !self.setting.is_vanilla() => {
                    return Err(invalid(
                        "templates",
                        format!("`{id}` is only valid for vanilla settings"),
                    ));
                }
                TemplateRef::Id(_) if self.setting.is_vanilla() => {
                    return Err(invalid(
                        "templates",
                        format!("{} takes no prompt template, got `{id}`", self.setting),
                    ));
                }
                TemplateRef::Vanilla => {}
                TemplateRef::Id(id) => {
                    if !registry.contains_id(&id) {
                        return Err(invalid(
                            "templates",
                            format!("unknown template `{id}`; known: {}", registry.ids().join(", ")),
                        ));
                    }
                    for t in &self.tasks {
                        registry.resolve(&id, t.language).map_err(|e| invalid("templates", e))?;
                    }
                }
            }
        }
        let pool = self.training_pool();
        if pool.is_empty() {
            return Err(invalid("tasks", "en_only needs at least one English task"));
        }
        if self.setting.is_multitask() && pool.len() < 2 {
            return Err(invalid(
                "tasks",
                format!("{} needs at least two training tasks, got {}", self.setting, pool.len()),
            ));
        }
        self.backend.validate().map_err(|e| invalid("backend", e))?;
        self.train.validate().map_err(|e| invalid("train", e))?;
        Ok(())
    }

    /// Tasks models are trained on.
    pub fn training_pool(&self) -> Vec<TaskKey> {
        self.tasks
            .iter()
            .copied()
            .filter(|t| !self.en_only || t.language == Language::En)
            .collect()
    }

    /// One entry per model to train.
    pub fn plans(&self) -> Vec<ModelPlan> {
        if !self.setting.trains() {
            return Vec::new();
        }
        let pool = self.training_pool();
        let mut plans = Vec::new();
        for id in &self.templates {
            let template = TemplateRef::from(id.as_str());
            let spec = |keys: &[TaskKey]| keys.iter().map(|k| k.with_template(&template)).collect::<Vec<_>>();
            let groups: Vec<(Vec<TaskKey>, Vec<TaskKey>)> = if self.setting.is_multitask() {
                vec![(pool.clone(), self.tasks.clone())]
            } else {
                pool.iter()
                    .map(|t| {
                        let eval = if self.en_only {
                            self.tasks.iter().copied().filter(|e| e.figure == t.figure).collect()
                        } else {
                            vec![*t]
                        };
                        (vec![*t], eval)
                    })
                    .collect()
            };
            for (train_keys, eval_keys) in groups {
                plans.push(ModelPlan {
                    setting: self.setting,
                    en_only: self.en_only,
                    template: template.clone(),
                    training_tasks: spec(&train_keys),
                    eval_tasks: spec(&eval_keys),
                    eval_splits: self.eval_splits.clone(),
                    mixture: self.mixture,
                    backend: self.backend.clone(),
                    train: self.train.clone(),
                });
            }
        }
        plans
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configs serialise")
    }
}

/// Everything that determines one trained model and its reports. The run
/// directory is named after its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPlan {
    pub setting: Setting,
    pub en_only: bool,
    pub template: TemplateRef,
    pub training_tasks: Vec<TaskSpec>,
    pub eval_tasks: Vec<TaskSpec>,
    pub eval_splits: Vec<Split>,
    pub mixture: MixturePolicy,
    pub backend: BackendSpec,
    pub train: TrainConfig,
}

impl ModelPlan {
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// Training tasks first, then evaluation-only tasks.
    pub fn all_tasks(&self) -> Vec<TaskSpec> {
        let mut out = self.training_tasks.clone();
        for t in &self.eval_tasks {
            if !out.contains(t) {
                out.push(t.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid_alone() {
        let registry = TemplateRegistry::builtin();
        for name in preset_names() {
            let c = preset(&name).unwrap();
            c.validate(&registry).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(c.en_only, name.ends_with("_en_only"));
        }
    }

    #[test]
    fn plan_shapes() {
        let count = |name: &str| preset(name).unwrap().plans().len();
        assert_eq!(count("prompt_multitask"), 1);
        assert_eq!(count("prompt"), 10);
        assert_eq!(count("vanilla_en_only"), 3);
        assert_eq!(count("vanilla_multitask_en_only"), 1);
        assert_eq!(count("baseline_import"), 0);
        let multi = preset("prompt_multitask_en_only").unwrap().plans().remove(0);
        assert_eq!(multi.training_tasks.len(), 3);
        assert_eq!(multi.eval_tasks.len(), 10);
        let single = preset("prompt_en_only").unwrap().plans();
        let idiom = single
            .iter()
            .find(|p| p.training_tasks[0].figure == Figure::Idiom)
            .unwrap();
        assert_eq!(idiom.eval_tasks.len(), 4);
    }

    #[test]
    fn precedence_flags_over_file_over_preset() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("exp.toml");
        std::fs::write(
            &file,
            "preset = \"prompt\"\ndata = \"corpus\"\ntasks = [\"idiom-en\", \"idiom-de\"]\n[train]\nseed = 7\nbatch_size = 8\n",
        )
        .unwrap();
        let flags = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        let c = resolve(Some(&file), &flags).unwrap();
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.train.warmup_steps, 1000);
        assert_eq!(c.tasks.len(), 2);
        assert_eq!(c.data, dir.path().join("corpus"));
        assert_eq!(c.out, PathBuf::from("out"));
        let flags = Overrides {
            preset: Some("vanilla".into()),
            ..Default::default()
        };
        let c = resolve(Some(&file), &flags).unwrap();
        assert_eq!(
            (c.setting, c.templates.clone()),
            (Setting::Vanilla, vec!["vanilla".to_string()])
        );
    }

    #[test]
    fn field_level_errors() {
        let err = |flags: Overrides| resolve(None, &flags).unwrap_err().to_string();
        let base = || Overrides {
            preset: Some("prompt".into()),
            ..Default::default()
        };
        assert!(err(Overrides {
            templates: Some(vec!["Z".into()]),
            ..base()
        })
        .contains("templates: unknown template `Z`"));
        assert!(err(Overrides {
            tasks: Some(vec!["idiom-zh".into()]),
            ..base()
        })
        .contains("idiom-zh"));
        let multi = Overrides {
            preset: Some("prompt_multitask".into()),
            tasks: Some(vec!["idiom-en".into()]),
            ..Default::default()
        };
        assert!(err(multi).contains("at least two"));
        let en = Overrides {
            preset: Some("prompt_en_only".into()),
            tasks: Some(vec!["idiom-de".into()]),
            ..Default::default()
        };
        assert!(err(en).contains("English"));
        assert!(err(Overrides {
            backend: Some("quantum".into()),
            ..base()
        })
        .contains("quantum"));
        assert!(err(Overrides::default()).contains("no preset"));
        assert!(err(Overrides {
            templates: Some(vec!["A".into()]),
            preset: Some("vanilla".into()),
            ..Default::default()
        })
        .contains("takes no prompt template"));
    }

    #[test]
    fn backend_switching() {
        let flags = Overrides {
            preset: Some("prompt".into()),
            adapter: Some(vec!["python3".into(), "a.py".into()]),
            ..Default::default()
        };
        let c = resolve(None, &flags).unwrap();
        assert!(matches!(&c.backend, BackendSpec::External(e) if e.command == ["python3", "a.py"]));
        let flags = Overrides {
            preset: Some("smoke".into()),
            backend: Some("toy".into()),
            ..Default::default()
        };
        assert!(matches!(resolve(None, &flags).unwrap().backend, BackendSpec::Toy(_)));
    }

    #[test]
    fn hash_tracks_plan_content() {
        let a = preset("prompt_multitask").unwrap().plans().remove(0);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
