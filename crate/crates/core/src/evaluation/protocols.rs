use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{evaluate, EvalError, EvalOptions, EvalReport, LoadedModel};
use crate::corpus::{languages_for, CorpusSource, Figure, Language, Split};
use crate::modeling::TaskSpec;
use crate::par::Exec;
use crate::prompt::{TemplateRef, TemplateRegistry};

/// Evaluates a model on tasks outside its training languages.
///
/// Every report is flagged by whether the task language was unseen in
/// training; asking for a training language is allowed but logged, and the
/// report comes back with `zero_shot = false`.
pub fn zero_shot_protocol(
    model: &LoadedModel,
    tasks: &[TaskSpec],
    split: Split,
    corpus: &dyn CorpusSource,
    registry: &TemplateRegistry,
    options: EvalOptions,
    exec: Exec,
) -> Result<Vec<EvalReport>, EvalError> {
    let trained = model.meta.training_languages();
    for t in tasks.iter().filter(|t| trained.contains(&t.language)) {
        warn!(
            "{t}: the model was trained on {}, so this is an in-language evaluation",
            t.language
        );
    }
    exec.map(tasks, |t| evaluate(model, t, split, corpus, registry, options))
        .into_iter()
        .collect()
}

/// Training row of a transfer matrix: one language, or all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TransferRow {
    Language(Language),
    Overall,
}

impl fmt::Display for TransferRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransferRow::Language(l) => write!(f, "{l}"),
            TransferRow::Overall => f.write_str("overall"),
        }
    }
}

impl FromStr for TransferRow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("overall") {
            Ok(TransferRow::Overall)
        } else {
            s.parse().map(TransferRow::Language)
        }
    }
}

impl TryFrom<String> for TransferRow {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TransferRow> for String {
    fn from(r: TransferRow) -> Self {
        r.to_string()
    }
}

/// Test accuracy of each training row's model on each language of one
/// figure. Rows are the figure's languages in registry order, then
/// `overall`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub figure: Figure,
    pub template: TemplateRef,
    pub rows: Vec<TransferRow>,
    pub cols: Vec<Language>,
    /// `cells[r][c]`, accuracy as a fraction.
    pub cells: Vec<Vec<f64>>,
    #[serde(skip)]
    pub reports: Vec<Vec<EvalReport>>,
}

impl TransferMatrix {
    pub fn cell(&self, row: TransferRow, col: Language) -> Option<f64> {
        let r = self.rows.iter().position(|x| *x == row)?;
        let c = self.cols.iter().position(|x| *x == col)?;
        Some(self.cells[r][c])
    }
}

pub fn transfer_matrix(
    models: &[(TransferRow, &LoadedModel)],
    figure: Figure,
    template: &TemplateRef,
    corpus: &dyn CorpusSource,
    registry: &TemplateRegistry,
    exec: Exec,
) -> Result<TransferMatrix, EvalError> {
    let cols = languages_for(figure);
    let rows: Vec<TransferRow> = cols
        .iter()
        .map(|l| TransferRow::Language(*l))
        .chain(std::iter::once(TransferRow::Overall))
        .collect();
    let mut by_row: BTreeMap<TransferRow, &LoadedModel> = BTreeMap::new();
    for (row, model) in models {
        if by_row.insert(*row, *model).is_some() {
            return Err(EvalError::DuplicateReport(format!("transfer row {row}")));
        }
    }
    let extra: Vec<String> = by_row
        .keys()
        .filter(|r| !rows.contains(r))
        .map(|r| format!("{r} (no {figure} data)"))
        .collect();
    if !extra.is_empty() {
        return Err(EvalError::CellMismatch(extra));
    }
    let missing: Vec<String> = rows
        .iter()
        .filter(|r| !by_row.contains_key(r))
        .map(ToString::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingRows(missing));
    }
    let n_cols = cols.len();
    let flat = exec.map_range(rows.len() * n_cols, |k| {
        let model = by_row[&rows[k / n_cols]];
        let task = TaskSpec::new(figure, cols[k % n_cols], template.clone()).expect("figure languages are supported");
        evaluate(model, &task, Split::Test, corpus, registry, EvalOptions::default())
    });
    let flat: Vec<EvalReport> = flat.into_iter().collect::<Result<_, _>>()?;
    let reports: Vec<Vec<EvalReport>> = flat.chunks(n_cols).map(<[EvalReport]>::to_vec).collect();
    let cells = reports.iter().map(|r| r.iter().map(|x| x.accuracy).collect()).collect();
    Ok(TransferMatrix {
        figure,
        template: template.clone(),
        rows,
        cols,
        cells,
        reports,
    })
}

fn index_by<F>(reports: &[EvalReport], key: F) -> Result<BTreeMap<String, &EvalReport>, EvalError>
where
    F: Fn(&EvalReport) -> String,
{
    let mut out = BTreeMap::new();
    for r in reports {
        let k = key(r);
        if out.insert(k.clone(), r).is_some() {
            return Err(EvalError::DuplicateReport(k));
        }
    }
    Ok(out)
}

fn require_same_keys<A, B>(a: &BTreeMap<String, A>, b: &BTreeMap<String, B>) -> Result<(), EvalError> {
    let unmatched: Vec<String> = a
        .keys()
        .filter(|k| !b.contains_key(*k))
        .chain(b.keys().filter(|k| !a.contains_key(*k)))
        .cloned()
        .collect();
    if unmatched.is_empty() {
        Ok(())
    } else {
        Err(EvalError::CellMismatch(unmatched))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFigurativeRow {
    pub figure: Figure,
    pub single: f64,
    pub multi: f64,
    /// `multi - single`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFigurativeTable {
    pub language: Language,
    pub rows: Vec<CrossFigurativeRow>,
}

/// Per-figure accuracies of single-figure models next to a model trained
/// on all figures, in one language.
pub fn cross_figurative_compare(
    single: &[EvalReport],
    multi: &[EvalReport],
    language: Language,
) -> Result<CrossFigurativeTable, EvalError> {
    let pick =
        |rs: &[EvalReport]| -> Vec<EvalReport> { rs.iter().filter(|r| r.task.language == language).cloned().collect() };
    let (s, m) = (pick(single), pick(multi));
    let s = index_by(&s, |r| r.task.figure.to_string())?;
    let m = index_by(&m, |r| r.task.figure.to_string())?;
    require_same_keys(&s, &m)?;
    if s.is_empty() {
        return Err(EvalError::CellMismatch(vec![format!("no reports in {language}")]));
    }
    let mut rows: Vec<CrossFigurativeRow> = s
        .iter()
        .map(|(k, sr)| {
            let mr = m[k];
            CrossFigurativeRow {
                figure: sr.task.figure,
                single: sr.accuracy,
                multi: mr.accuracy,
                delta: mr.accuracy - sr.accuracy,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.figure);
    Ok(CrossFigurativeTable { language, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDiffEntry {
    /// `figure-language`.
    pub task: String,
    pub reference: f64,
    pub other: f64,
    /// `reference - other`.
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDiffReport {
    pub reference_template: String,
    pub other_template: String,
    pub entries: Vec<PromptDiffEntry>,
}

impl PromptDiffReport {
    pub fn get(&self, task: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.task == task).map(|e| e.diff)
    }
}

fn template_of(reports: &[EvalReport]) -> String {
    let mut ids: Vec<&str> = reports.iter().map(|r| r.template_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.join("+")
}

/// Per-task accuracy under the reference template minus accuracy under the
/// other template. Both report sets must cover the same tasks.
pub fn prompt_diff(reference: &[EvalReport], other: &[EvalReport]) -> Result<PromptDiffReport, EvalError> {
    let a = index_by(reference, EvalReport::cell)?;
    let b = index_by(other, EvalReport::cell)?;
    require_same_keys(&a, &b)?;
    let entries = a
        .iter()
        .map(|(k, ra)| {
            let rb = b[k];
            PromptDiffEntry {
                task: k.clone(),
                reference: ra.accuracy,
                other: rb.accuracy,
                diff: ra.accuracy - rb.accuracy,
            }
        })
        .collect();
    Ok(PromptDiffReport {
        reference_template: template_of(reference),
        other_template: template_of(other),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub task: String,
    pub valid: f64,
    pub test: f64,
    /// `valid - test`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
}

/// Pairs validation and test reports of each task. Reports on the train
/// split are ignored.
pub fn valid_test_gap(reports: &[EvalReport]) -> Result<GapTable, EvalError> {
    let of = |split: Split| -> Vec<EvalReport> { reports.iter().filter(|r| r.split == split).cloned().collect() };
    let (v, t) = (of(Split::Valid), of(Split::Test));
    let v = index_by(&v, |r| r.task.to_string())?;
    let t = index_by(&t, |r| r.task.to_string())?;
    require_same_keys(&v, &t)?;
    let rows = v
        .iter()
        .map(|(k, rv)| GapRow {
            task: k.clone(),
            valid: rv.accuracy,
            test: t[k].accuracy,
            gap: rv.accuracy - t[k].accuracy,
        })
        .collect();
    Ok(GapTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::Confusion;
    use crate::modeling::{BackendSpec, CheckpointMeta};

    pub(crate) fn report(task: &str, split: Split, template: &str, accuracy: f64) -> EvalReport {
        let task: TaskSpec = format!("{task}@{template}").parse().unwrap();
        EvalReport {
            task,
            split,
            template_id: template.into(),
            n: 100,
            correct: (accuracy * 100.0).round() as u64,
            accuracy,
            confusion: Confusion::default(),
            confusion_row_percent: [[0.0; 2]; 2],
            unparsed_count: 0,
            generation_errors: 0,
            zero_shot: false,
            checkpoint: CheckpointMeta {
                backend: BackendSpec::Oracle,
                step: 0,
                best_score: None,
                config_hash: String::new(),
                training_tasks: Vec::new(),
            },
            config_hash: String::new(),
            per_example: None,
        }
    }

    #[test]
    fn prompt_diff_signs() {
        let a = [report("idiom-en", Split::Test, "A", 0.82)];
        let b = [report("idiom-en", Split::Test, "B", 0.79)];
        let d = prompt_diff(&a, &b).unwrap();
        assert!((d.get("idiom-en").unwrap() - 0.03).abs() < 1e-12);
        assert_eq!(d.reference_template, "A");
        assert_eq!(
            prompt_diff(&b, &a).unwrap().get("idiom-en"),
            Some(-d.get("idiom-en").unwrap())
        );
        assert_eq!(prompt_diff(&a, &a).unwrap().get("idiom-en"), Some(0.0));
        let c = [report("idiom-de", Split::Test, "B", 0.5)];
        assert!(matches!(prompt_diff(&a, &c), Err(EvalError::CellMismatch(_))));
    }

    #[test]
    fn cross_figurative_delta() {
        let single = [
            report("idiom-en", Split::Test, "A", 0.7),
            report("hyperbole-en", Split::Test, "A", 0.6),
            report("idiom-es", Split::Test, "A", 0.1),
        ];
        let multi = [
            report("idiom-en", Split::Test, "A", 0.8),
            report("hyperbole-en", Split::Test, "A", 0.6),
        ];
        let t = cross_figurative_compare(&single, &multi, Language::En).unwrap();
        assert_eq!(t.rows.len(), 2);
        let idiom = t.rows.iter().find(|r| r.figure == Figure::Idiom).unwrap();
        assert!((idiom.delta - 0.1).abs() < 1e-12);
        assert!(cross_figurative_compare(&single, &multi[..1], Language::En).is_err());
    }

    #[test]
    fn gap_pairs_by_task() {
        let rs = [
            report("idiom-de", Split::Valid, "A", 0.9),
            report("idiom-de", Split::Test, "A", 0.7),
        ];
        let g = valid_test_gap(&rs).unwrap();
        assert!((g.rows[0].gap - 0.2).abs() < 1e-12);
        assert!(matches!(valid_test_gap(&rs[..1]), Err(EvalError::CellMismatch(_))));
    }

    #[test]
    fn transfer_row_strings() {
        assert_eq!("overall".parse::<TransferRow>().unwrap(), TransferRow::Overall);
        assert_eq!(
            "es".parse::<TransferRow>().unwrap(),
            TransferRow::Language(Language::Es)
        );
        assert_eq!(serde_json::to_string(&TransferRow::Overall).unwrap(), "\"overall\"");
    }
}
