//! Cross-lingual transfer, template comparison and idiom overlap.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use figdetect::corpus::{expression_overlap, languages_for, CorpusSource, OverlapReport};
use figdetect::evaluation::{prompt_diff, transfer_matrix, LoadedModel, TransferRow};
use figdetect::modeling::TaskSpec;
use figdetect::par::Exec;
use figdetect::prompt::TemplateRef;
use figdetect::{Figure, Language, Split, TemplateRegistry};
use serde::{Deserialize, Serialize};

use super::{corpus_inputs, open_corpus, read_reports, RunDir};
use crate::error::{CliError, Result};
use crate::run::{digest, pretty_json, unix_now, Artifacts, DirLock, RunManifest};

pub const TRANSFER_FILE: &str = "transfer.json";
pub const PROMPT_DIFF_FILE: &str = "prompt_diff.json";
pub const OVERLAP_FILE: &str = "overlap.json";

/// `LANG=RUNDIR` or `overall=RUNDIR`.
#[derive(Debug, Clone)]
pub struct RowArg {
    pub row: TransferRow,
    pub run: PathBuf,
}

impl std::str::FromStr for RowArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (row, run) = s
            .split_once('=')
            .ok_or_else(|| format!("expected LANG=RUNDIR, got `{s}`"))?;
        Ok(RowArg {
            row: row.parse()?,
            run: PathBuf::from(run),
        })
    }
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub figure: Figure,
    /// One per training row: `LANG=RUNDIR`, plus `overall=RUNDIR` for the
    /// model trained on every language.
    #[arg(long = "row", required = true)]
    pub rows: Vec<RowArg>,
    /// Template to evaluate with; defaults to the first row's.
    #[arg(long)]
    pub template: Option<String>,
    /// Prepared corpus; defaults to the first row's.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Defaults to `out/analysis/transfer-<figure>-<template>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn transfer(args: TransferArgs) -> Result<()> {
    let started = unix_now();
    let wanted: Vec<TransferRow> = languages_for(args.figure)
        .into_iter()
        .map(TransferRow::Language)
        .chain(std::iter::once(TransferRow::Overall))
        .collect();
    let missing: Vec<String> = wanted
        .iter()
        .filter(|w| !args.rows.iter().any(|r| r.row == **w))
        .map(|w| w.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!(
            "row: missing {} for {}",
            missing.join(", "),
            args.figure
        )));
    }
    if let Some(extra) = args.rows.iter().find(|r| !wanted.contains(&r.row)) {
        return Err(CliError::Config(format!(
            "row: {} has no {} data",
            extra.row, args.figure
        )));
    }
    let runs: Vec<(TransferRow, RunDir)> = args
        .rows
        .iter()
        .map(|r| Ok((r.row, RunDir::open(&r.run)?)))
        .collect::<Result<_>>()?;
    let first = &runs[0].1;
    let template = args
        .template
        .as_deref()
        .map(TemplateRef::from)
        .unwrap_or_else(|| first.plan.template.clone());
    let corpus = open_corpus(args.data.as_deref().unwrap_or(&first.config.data))?;
    let registry = TemplateRegistry::builtin();
    let tasks: Vec<TaskSpec> = languages_for(args.figure)
        .into_iter()
        .map(|l| TaskSpec {
            figure: args.figure,
            language: l,
            template: template.clone(),
        })
        .collect();
    for t in &tasks {
        figdetect::prompt::InputFormat::for_task(&registry, t)?;
    }
    let mut inputs = corpus_inputs(&corpus, &tasks, &[Split::Test])?;
    let mut models: Vec<(TransferRow, LoadedModel)> = Vec::new();
    for (row, run) in &runs {
        inputs.extend(run.checkpoint_inputs()?);
        models.push((*row, run.load(&tasks, &corpus, &registry)?));
    }
    let refs: Vec<(TransferRow, &LoadedModel)> = models.iter().map(|(r, m)| (*r, m)).collect();
    let matrix = transfer_matrix(&refs, args.figure, &template, &corpus, &registry, Exec::Sequential)?;
    drop(refs);
    drop(models);
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("out/analysis/transfer-{}-{template}", args.figure)));
    let _lock = DirLock::acquire(&out)?;
    let mut art = Artifacts::new(&out);
    art.write(TRANSFER_FILE, &pretty_json(&matrix))?;
    let text = matrix.render_text();
    art.write("transfer.txt", text.as_bytes())?;
    art.write("transfer.svg", matrix.to_svg().as_bytes())?;
    let hashes: Vec<String> = runs.iter().map(|(r, run)| format!("{r}={}", run.hash())).collect();
    RunManifest::new("transfer", &figdetect::modeling::config_hash(&hashes), inputs, started).finish(art)?;
    print!("{text}");
    println!("written to {}", out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PromptDiffArgs {
    /// Directory of reports under the reference template.
    #[arg(long)]
    pub reference: PathBuf,
    /// Directory of reports under the other template.
    #[arg(long)]
    pub other: PathBuf,
    /// Defaults to `out/analysis/prompt-diff-<reference>-<other>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn report_inputs(dir: &Path) -> Result<Vec<figdetect::corpus::FileDigest>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| digest(p)).collect()
}

pub fn prompt_diff_cmd(args: PromptDiffArgs) -> Result<()> {
    let started = unix_now();
    let reference = read_reports(&args.reference)?;
    let other = read_reports(&args.other)?;
    let diff = prompt_diff(&reference, &other)?;
    let out = args.out.unwrap_or_else(|| {
        PathBuf::from(format!(
            "out/analysis/prompt-diff-{}-{}",
            diff.reference_template, diff.other_template
        ))
    });
    let mut inputs = report_inputs(&args.reference)?;
    inputs.extend(report_inputs(&args.other)?);
    let _lock = DirLock::acquire(&out)?;
    let mut art = Artifacts::new(&out);
    art.write(PROMPT_DIFF_FILE, &pretty_json(&diff))?;
    let text = diff.render_text();
    art.write("prompt_diff.txt", text.as_bytes())?;
    art.write("prompt_diff.svg", diff.to_svg().as_bytes())?;
    let hash = figdetect::modeling::config_hash(&(&diff.reference_template, &diff.other_template));
    RunManifest::new("prompt-diff", &hash, inputs, started).finish(art)?;
    print!("{text}");
    println!("written to {}", out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// Prepared corpus.
    #[arg(long, default_value = "prepared")]
    pub data: PathBuf,
    /// Idiom languages; defaults to all of them.
    #[arg(long, value_delimiter = ',')]
    pub languages: Option<Vec<Language>>,
    /// Defaults to `out/analysis/overlap`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Idiom reuse between training and held-out sentences of one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub language: Language,
    pub valid: OverlapReport,
    pub test: OverlapReport,
}

pub fn render_overlap(rows: &[OverlapRow]) -> String {
    let pct = |r: Option<f64>| r.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<4} {:>8} {:>10} {:>8} {:>10} {:>11}",
        "lang", "valid L", "valid I", "test L", "test I", "expressions"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<4} {:>8} {:>10} {:>8} {:>10} {:>11}",
            r.language.to_string(),
            pct(r.valid.literal.ratio),
            pct(r.valid.figurative.ratio),
            pct(r.test.literal.ratio),
            pct(r.test.figurative.ratio),
            r.valid.expressions
        );
    }
    s
}

pub fn overlap(args: OverlapArgs) -> Result<()> {
    let started = unix_now();
    let corpus = open_corpus(&args.data)?;
    let idiom_langs = languages_for(Figure::Idiom);
    let languages = args.languages.unwrap_or_else(|| idiom_langs.clone());
    if let Some(l) = languages.iter().find(|l| !idiom_langs.contains(l)) {
        return Err(CliError::Config(format!("languages: no idiom data in {l}")));
    }
    let tasks: Vec<TaskSpec> = languages
        .iter()
        .map(|l| TaskSpec {
            figure: Figure::Idiom,
            language: *l,
            template: TemplateRef::id("A"),
        })
        .collect();
    let inputs = corpus_inputs(&corpus, &tasks, Split::ALL)?;
    let load = |l: Language, s: Split| corpus.load(Figure::Idiom, l, s);
    let mut rows = Vec::new();
    for l in &languages {
        let train = load(*l, Split::Train)?;
        rows.push(OverlapRow {
            language: *l,
            valid: expression_overlap(&train, &load(*l, Split::Valid)?, Exec::default()),
            test: expression_overlap(&train, &load(*l, Split::Test)?, Exec::default()),
        });
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("out/analysis/overlap"));
    let _lock = DirLock::acquire(&out)?;
    let mut art = Artifacts::new(&out);
    art.write(OVERLAP_FILE, &pretty_json(&rows))?;
    let text = render_overlap(&rows);
    art.write("overlap.txt", text.as_bytes())?;
    let langs: Vec<String> = languages.iter().map(|l| l.to_string()).collect();
    RunManifest::new("overlap", &figdetect::modeling::config_hash(&langs), inputs, started).finish(art)?;
    print!("{text}");
    println!("written to {}", out.display());
    Ok(())
}
