//! Source discovery and the prepare step.
//!
//! A data root holds one directory per task, `<figure>/<lang>/`, with source
//! files named `<split>.<ext>` or `<split>.<dataset>.<ext>`. Several files for
//! one split are ingested in name order and concatenated; this is how the
//! two English hyperbole sources are combined. Files whose name does not
//! start with a split name are ignored.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::interchange::write_examples;
use super::readers::{read_hyperbole_file, read_idiom_file, read_metaphor_file};
use super::{
    compute_stats, ingest_hyperbole, ingest_idiom_word_level, ingest_metaphor_lcc, upsample, BinarizationPolicy,
    CorpusError, CorpusStats, Figure, IngestOutcome, Language, RejectReason, Rejection, SourceInfo, Split, TASK_PAIRS,
    UPSAMPLED_TRAIN,
};
use crate::par::Exec;
use crate::reference::HYPERBOLE_UPSAMPLE_TARGET;
use crate::util::sha256_hex;

/// Data-root variable read by the command-line tool and the data-dependent
/// tests.
pub const DATA_ROOT_ENV: &str = "FIGDETECT_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub figure: Figure,
    pub language: Language,
    pub split: Split,
    pub dataset: String,
    pub path: PathBuf,
}

fn default_dataset(figure: Figure, language: Language) -> String {
    match (figure, language) {
        (Figure::Hyperbole, Language::En) => "hypo".into(),
        (Figure::Hyperbole, _) => "hypo-l".into(),
        (Figure::Idiom, _) => "id10m".into(),
        (Figure::Metaphor, _) => "lcc".into(),
    }
}

fn parse_name(name: &str) -> Option<(Split, Option<String>)> {
    let mut parts: Vec<&str> = name.split('.').collect();
    if parts.len() < 2 {
        return None;
    }
    parts.pop();
    let split: Split = parts[0].parse().ok()?;
    let dataset = (parts.len() > 1).then(|| parts[1..].join("."));
    Some((split, dataset))
}

/// Source files of one task directory, sorted by split then file name.
pub fn discover_task(root: &Path, figure: Figure, language: Language) -> Result<Vec<SourceFile>, CorpusError> {
    let dir = root.join(figure.code()).join(language.code());
    let entries = std::fs::read_dir(&dir).map_err(|source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if name.ends_with(".jsonl") {
            continue;
        }
        if let Some((split, dataset)) = parse_name(name) {
            out.push(SourceFile {
                figure,
                language,
                split,
                dataset: dataset.unwrap_or_else(|| default_dataset(figure, language)),
                path,
            });
        }
    }
    out.sort_by(|a, b| (a.split, &a.path).cmp(&(b.split, &b.path)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareOptions {
    pub policy: BinarizationPolicy,
    pub seed: u64,
    /// Size hyperbole training sets are upsampled to; `None` skips
    /// upsampling.
    pub upsample_target: Option<usize>,
    pub exec: Exec,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            policy: BinarizationPolicy::default(),
            seed: 42,
            upsample_target: Some(HYPERBOLE_UPSAMPLE_TARGET),
            exec: Exec::default(),
        }
    }
}

/// A task split that could not be prepared. Other splits and tasks are
/// still processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFailure {
    pub figure: Figure,
    pub language: Language,
    pub split: Option<Split>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the data root or the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub policy: BinarizationPolicy,
    pub seed: u64,
    pub upsample_target: Option<usize>,
    pub stats: CorpusStats,
    pub rejected: usize,
    pub dropped_by_policy: usize,
    pub failures: Vec<SourceFailure>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl PrepareReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn ingest_file(file: &SourceFile, options: &PrepareOptions) -> Result<IngestOutcome, CorpusError> {
    let info = SourceInfo::new(file.dataset.clone(), file.language, file.split);
    match file.figure {
        Figure::Hyperbole => ingest_hyperbole(&read_hyperbole_file(&file.path)?, &info, options.exec),
        Figure::Idiom => ingest_idiom_word_level(&read_idiom_file(&file.path)?, &info, options.exec),
        Figure::Metaphor => ingest_metaphor_lcc(&read_metaphor_file(&file.path)?, &info, options.policy, options.exec),
    }
}

/// Moves every example whose id was already seen into the rejections.
fn reject_duplicates(outcome: &mut IngestOutcome) {
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(outcome.accepted.len());
    for ex in outcome.accepted.drain(..) {
        if seen.insert(ex.id.clone()) {
            kept.push(ex);
        } else {
            warn!("duplicate id {}", ex.id);
            outcome.rejected.push(Rejection {
                dataset: ex.source.dataset.clone(),
                record: ex.source.record.clone(),
                reason: RejectReason::DuplicateId { id: ex.id },
            });
        }
    }
    outcome.accepted = kept;
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

/// Ingests every task found under `root` and writes canonical splits to
/// `<out>/<figure>/<lang>/<split>.jsonl`, plus `stats.json`, `stats.txt`,
/// `rejections.jsonl` and `prepare.json`.
///
/// A missing task directory, split or unreadable file is recorded as a
/// failure and the remaining tasks are still prepared. Outputs depend only
/// on the inputs and options, so a rerun writes identical bytes.
pub fn prepare(root: &Path, out: &Path, options: &PrepareOptions) -> Result<PrepareReport, CorpusError> {
    BinarizationPolicy::new(options.policy.threshold)?;
    let mut failures = Vec::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut rejections: Vec<Rejection> = Vec::new();
    let mut all = Vec::new();
    let emit = |path: PathBuf, bytes: Vec<u8>, outputs: &mut Vec<FileDigest>| -> Result<(), CorpusError> {
        write_file(&path, &bytes)?;
        outputs.push(FileDigest {
            path: relative(&path, out),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    };

    for &(figure, language) in TASK_PAIRS.iter() {
        let files = match discover_task(root, figure, language) {
            Ok(f) => f,
            Err(e) => {
                warn!("{figure}/{language}: {e}");
                failures.push(SourceFailure {
                    figure,
                    language,
                    split: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        for &split in Split::ALL {
            let split_files: Vec<&SourceFile> = files.iter().filter(|f| f.split == split).collect();
            if split_files.is_empty() {
                failures.push(SourceFailure {
                    figure,
                    language,
                    split: Some(split),
                    message: format!(
                        "no source file for {split} in {}",
                        root.join(figure.code()).join(language.code()).display()
                    ),
                });
                continue;
            }
            let mut outcome = IngestOutcome::default();
            let mut failed = None;
            for file in &split_files {
                match std::fs::read(&file.path) {
                    Ok(bytes) => inputs.push(FileDigest {
                        path: relative(&file.path, root),
                        sha256: sha256_hex(&bytes),
                    }),
                    Err(e) => {
                        failed = Some(format!("{}: {e}", file.path.display()));
                        break;
                    }
                }
                match ingest_file(file, options) {
                    Ok(o) => outcome.extend(o),
                    Err(e) => {
                        failed = Some(e.to_string());
                        break;
                    }
                }
            }
            if let Some(message) = failed {
                warn!("{figure}/{language}/{split}: {message}");
                failures.push(SourceFailure {
                    figure,
                    language,
                    split: Some(split),
                    message,
                });
                continue;
            }
            reject_duplicates(&mut outcome);
            let dir = out.join(figure.code()).join(language.code());
            let mut buf = Vec::new();
            write_examples(&mut buf, &outcome.accepted).map_err(|source| CorpusError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            emit(dir.join(format!("{split}.jsonl")), buf, &mut outputs)?;
            if figure == Figure::Hyperbole && split == Split::Train {
                if let Some(target) = options.upsample_target {
                    match upsample(&outcome.accepted, target, options.seed) {
                        Ok(up) => {
                            let mut buf = Vec::new();
                            write_examples(&mut buf, &up).map_err(|source| CorpusError::Io {
                                path: dir.display().to_string(),
                                source,
                            })?;
                            emit(dir.join(UPSAMPLED_TRAIN), buf, &mut outputs)?;
                        }
                        Err(e) => failures.push(SourceFailure {
                            figure,
                            language,
                            split: Some(split),
                            message: format!("upsampling: {e}"),
                        }),
                    }
                }
            }
            info!(
                "{figure}/{language}/{split}: {} accepted, {} rejected",
                outcome.accepted.len(),
                outcome.rejected.len()
            );
            rejections.extend(outcome.rejected);
            all.extend(outcome.accepted);
        }
    }

    let stats = compute_stats(&all);
    emit(out.join("stats.json"), pretty(&stats), &mut outputs)?;
    emit(out.join("stats.txt"), stats.render_table().into_bytes(), &mut outputs)?;
    let mut rej = Vec::new();
    for r in &rejections {
        rej.extend(serde_json::to_vec(r).expect("rejection serializes"));
        rej.push(b'\n');
    }
    emit(out.join("rejections.jsonl"), rej, &mut outputs)?;

    let report = PrepareReport {
        policy: options.policy,
        seed: options.seed,
        upsample_target: options.upsample_target,
        stats,
        rejected: rejections.len(),
        dropped_by_policy: rejections.iter().filter(|r| r.reason.is_policy_drop()).count(),
        failures,
        inputs,
        outputs,
    };
    write_file(&out.join("prepare.json"), &pretty(&report))?;
    Ok(report)
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report serializes");
    v.push(b'\n');
    v
}

/// Rejections grouped by dataset and reason kind, for summaries.
pub fn rejection_summary(rejections: &[Rejection]) -> BTreeMap<(String, String), usize> {
    let mut out = BTreeMap::new();
    for r in rejections {
        let kind = serde_json::to_value(&r.reason)
            .ok()
            .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_string))
            .unwrap_or_default();
        *out.entry((r.dataset.clone(), kind)).or_insert(0) += 1;
    }
    out
}
