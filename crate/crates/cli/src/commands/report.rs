//! Renders the stored experiment records and analyses into tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use figdetect::evaluation::{
    cross_figurative_compare, valid_test_gap, EvalReport, PromptDiffReport, ResultsTable, TransferMatrix,
};
use figdetect::reference::TASK_ORDER;
use figdetect::{Language, Split};
use log::warn;
use serde::Serialize;

use super::analysis::{render_overlap, OverlapRow, OVERLAP_FILE, PROMPT_DIFF_FILE, TRANSFER_FILE};
use super::{read_reports, ExperimentRecord, REPORTS_DIR};
use crate::config::Setting;
use crate::error::{CliError, Result};
use crate::run::{digest, pretty_json, read_json, unix_now, Artifacts, DirLock, RunManifest};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output root holding `experiments/`, `runs/` and `analysis/`.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Split shown in the accuracy grids.
    #[arg(long, default_value = "test")]
    pub split: Split,
}

#[derive(Debug, Serialize)]
struct Tables {
    split: Split,
    all_languages: ResultsTable,
    en_only: ResultsTable,
}

/// Reports of one experiment under one template, keyed by split.
struct Family {
    label: String,
    record: ExperimentRecord,
    template: String,
    reports: BTreeMap<Split, Vec<EvalReport>>,
}

fn json_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    v.retain(|p| p.extension().is_some_and(|x| x == "json"));
    v.sort();
    v
}

fn families(out: &Path, records: &[ExperimentRecord]) -> Result<Vec<Family>> {
    let mut fams = Vec::new();
    for rec in records {
        let mut templates: Vec<&str> = rec.runs.iter().map(|r| r.template.as_str()).collect();
        templates.dedup();
        for t in &templates {
            let mut reports: BTreeMap<Split, Vec<EvalReport>> = BTreeMap::new();
            for run in rec.runs.iter().filter(|r| r.template == *t) {
                for split in Split::ALL {
                    let dir = out.join("runs").join(&run.hash).join(REPORTS_DIR).join(split.code());
                    if dir.is_dir() {
                        reports.entry(*split).or_default().extend(read_reports(&dir)?);
                    }
                }
            }
            let label = if templates.len() > 1 {
                format!("{}@{t}", rec.name)
            } else {
                rec.name.clone()
            };
            fams.push(Family {
                label,
                record: rec.clone(),
                template: t.to_string(),
                reports,
            });
        }
    }
    Ok(fams)
}

fn code_block(title: &str, body: &str) -> String {
    format!("## {title}\n\n```\n{}```\n\n", body)
}

pub fn run(args: ReportArgs) -> Result<()> {
    let started = unix_now();
    let exp_dir = args.out.join("experiments");
    let record_files = json_files(&exp_dir);
    if record_files.is_empty() {
        return Err(CliError::Data(format!(
            "no experiment records in {} (run `figdetect train` first)",
            exp_dir.display()
        )));
    }
    let mut inputs = Vec::new();
    let mut records = Vec::new();
    for p in &record_files {
        records.push(read_json::<ExperimentRecord>(p)?);
        inputs.push(digest(p)?);
    }
    let fams = families(&args.out, &records)?;
    let columns: Vec<String> = TASK_ORDER.iter().map(|(f, l)| format!("{f}-{l}")).collect();
    let mut tables = Tables {
        split: args.split,
        all_languages: ResultsTable::new(columns.clone()),
        en_only: ResultsTable::new(columns),
    };
    for rec in records.iter().filter(|r| r.baseline.is_some()) {
        let table = if rec.en_only {
            &mut tables.en_only
        } else {
            &mut tables.all_languages
        };
        table.add_row(rec.name.clone(), rec.baseline.clone().unwrap_or_default());
    }
    for f in &fams {
        let table = if f.record.en_only {
            &mut tables.en_only
        } else {
            &mut tables.all_languages
        };
        table.add_reports(
            f.label.clone(),
            f.reports.get(&args.split).map(Vec::as_slice).unwrap_or_default(),
        );
    }

    let mut md = format!("# Results ({} split, accuracy %)\n\n", args.split);
    md.push_str(&code_block(
        "Trained on all languages",
        &tables.all_languages.render_text(),
    ));
    md.push_str(&code_block("Trained on English only", &tables.en_only.render_text()));

    for f in &fams {
        let mut both: Vec<EvalReport> = Vec::new();
        for s in [Split::Valid, Split::Test] {
            both.extend(f.reports.get(&s).cloned().unwrap_or_default());
        }
        if f.reports.contains_key(&Split::Valid) && f.reports.contains_key(&Split::Test) {
            match valid_test_gap(&both) {
                Ok(g) => md.push_str(&code_block(
                    &format!("Validation vs test: {}", f.label),
                    &g.render_text(),
                )),
                Err(e) => warn!("{}: no gap table: {e}", f.label),
            }
        }
    }

    for (single, multi) in [
        (Setting::Prompt, Setting::PromptMultitask),
        (Setting::Vanilla, Setting::VanillaMultitask),
    ] {
        for s in fams.iter().filter(|f| f.record.setting == single && !f.record.en_only) {
            for m in fams
                .iter()
                .filter(|f| f.record.setting == multi && !f.record.en_only && f.template == s.template)
            {
                let (Some(sr), Some(mr)) = (s.reports.get(&args.split), m.reports.get(&args.split)) else {
                    continue;
                };
                for lang in Language::ALL {
                    let figures = sr.iter().filter(|r| r.task.language == *lang).count();
                    if figures < 2 {
                        continue;
                    }
                    match cross_figurative_compare(sr, mr, *lang) {
                        Ok(t) => md.push_str(&code_block(
                            &format!("Single figure vs multitask ({lang}): {} vs {}", s.label, m.label),
                            &t.render_text(),
                        )),
                        Err(e) => warn!("{} vs {} in {lang}: {e}", s.label, m.label),
                    }
                }
            }
        }
    }

    let report_dir = args.out.join("report");
    let _lock = DirLock::acquire(&report_dir)?;
    let mut art = Artifacts::new(&report_dir);
    let analysis = args.out.join("analysis");
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&analysis)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect()
        })
        .unwrap_or_default();
    dirs.sort();
    for dir in dirs {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        if let Some(p) = Some(dir.join(TRANSFER_FILE)).filter(|p| p.is_file()) {
            let m: TransferMatrix = read_json(&p)?;
            md.push_str(&code_block(
                &format!("Cross-lingual transfer: {name}"),
                &m.render_text(),
            ));
            art.write(format!("{name}.svg"), m.to_svg().as_bytes())?;
            inputs.push(digest(&p)?);
        }
        if let Some(p) = Some(dir.join(PROMPT_DIFF_FILE)).filter(|p| p.is_file()) {
            let d: PromptDiffReport = read_json(&p)?;
            md.push_str(&code_block(&format!("Template difference: {name}"), &d.render_text()));
            art.write(format!("{name}.svg"), d.to_svg().as_bytes())?;
            inputs.push(digest(&p)?);
        }
        if let Some(p) = Some(dir.join(OVERLAP_FILE)).filter(|p| p.is_file()) {
            let rows: Vec<OverlapRow> = read_json(&p)?;
            md.push_str(&code_block(
                &format!("Idiom overlap with training data (%): {name}"),
                &render_overlap(&rows),
            ));
            inputs.push(digest(&p)?);
        }
    }
    let _ = writeln!(md, "Generated from {} experiment record(s).", records.len());
    art.write("results.json", &pretty_json(&tables))?;
    art.write("report.md", md.as_bytes())?;
    RunManifest::new("report", &figdetect::modeling::config_hash(&inputs), inputs, started).finish(art)?;
    print!("{md}");
    Ok(())
}
