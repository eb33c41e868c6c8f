//! Canonical interchange: UTF-8, one JSON object per line, one
//! [`LabeledExample`] per object. Field order is fixed, so writing the same
//! examples twice yields identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CorpusError, LabeledExample};

pub fn write_examples<W: Write>(writer: W, examples: &[LabeledExample]) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_examples<R: Read>(reader: R, label: &str) -> Result<Vec<LabeledExample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: label.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample = serde_json::from_str(&line).map_err(|e| CorpusError::Format {
            path: label.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        ex.validate().map_err(|e| CorpusError::Format {
            path: label.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_examples_file(path: &Path, examples: &[LabeledExample]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    write_examples(File::create(path).map_err(io)?, examples).map_err(io)
}

pub fn read_examples_file(path: &Path) -> Result<Vec<LabeledExample>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_examples(file, &path.display().to_string())
}
