//! Readers for the three source layouts.
//!
//! - Hyperbole: tab-separated with a header. Either `text` + `label`
//!   columns (one sentence per row, optional `id`), or `hyperbolic` +
//!   `literal` columns (one pair per row, optional `id`/`pair_id`), which is
//!   flattened into two rows `<id>:hyp` and `<id>:lit`.
//! - Idiom: one `token<TAB>tag` per line, blank line between sentences.
//!   A line `# id = <value>` before a sentence names it; otherwise
//!   sentences are numbered from 1.
//! - Metaphor: tab-separated with a header holding `sentence` and `score`
//!   columns (optional `id`).
//!
//! Row ids default to the 1-based data line number.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::{CorpusError, HyperboleRow, ScoredRow, TaggedSentence, TaggedToken};

fn open(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h.eq_ignore_ascii_case(name))
    }
}

fn read_table<R: Read>(reader: R, label: &str) -> Result<Table, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let format_err = |line: usize, message: String| CorpusError::Format {
        path: label.to_string(),
        line,
        message,
    };
    let header = rdr
        .headers()
        .map_err(|e| format_err(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format_err(i + 2, e.to_string()))?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        rows.push((i + 1, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

fn cell(row: &[String], idx: Option<usize>) -> Option<String> {
    idx.and_then(|i| row.get(i)).map(|s| s.to_string())
}

fn row_id(row: &[String], idx: Option<usize>, line: usize) -> String {
    cell(row, idx)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| line.to_string())
}

pub fn read_hyperbole<R: Read>(reader: R, label: &str) -> Result<Vec<HyperboleRow>, CorpusError> {
    let table = read_table(reader, label)?;
    let id = table.column("id").or_else(|| table.column("pair_id"));
    if let (Some(hyp), Some(lit)) = (table.column("hyperbolic"), table.column("literal")) {
        let mut out = Vec::with_capacity(table.rows.len() * 2);
        for (line, row) in &table.rows {
            let rid = row_id(row, id, *line);
            out.push(HyperboleRow {
                id: format!("{rid}:hyp"),
                text: cell(row, Some(hyp)),
                label: "hyperbolic".into(),
            });
            out.push(HyperboleRow {
                id: format!("{rid}:lit"),
                text: cell(row, Some(lit)),
                label: "literal".into(),
            });
        }
        return Ok(out);
    }
    let (Some(text), Some(lab)) = (table.column("text"), table.column("label")) else {
        return Err(CorpusError::Format {
            path: label.to_string(),
            line: 1,
            message: "expected columns `text` and `label`, or `hyperbolic` and `literal`".into(),
        });
    };
    Ok(table
        .rows
        .iter()
        .map(|(line, row)| HyperboleRow {
            id: row_id(row, id, *line),
            text: cell(row, Some(text)),
            label: cell(row, Some(lab)).unwrap_or_default(),
        })
        .collect())
}

pub fn read_metaphor<R: Read>(reader: R, label: &str) -> Result<Vec<ScoredRow>, CorpusError> {
    let table = read_table(reader, label)?;
    let (Some(sentence), Some(score)) = (table.column("sentence"), table.column("score")) else {
        return Err(CorpusError::Format {
            path: label.to_string(),
            line: 1,
            message: "expected columns `sentence` and `score`".into(),
        });
    };
    let id = table.column("id");
    Ok(table
        .rows
        .iter()
        .map(|(line, row)| ScoredRow {
            id: row_id(row, id, *line),
            sentence: cell(row, Some(sentence)),
            score: cell(row, Some(score)).unwrap_or_default(),
        })
        .collect())
}

pub fn read_idiom<R: Read>(reader: R, label: &str) -> Result<Vec<TaggedSentence>, CorpusError> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut pending_id: Option<String> = None;
    let flush = |tokens: &mut Vec<TaggedToken>, pending_id: &mut Option<String>, out: &mut Vec<TaggedSentence>| {
        if !tokens.is_empty() {
            let id = pending_id.take().unwrap_or_else(|| (out.len() + 1).to_string());
            out.push(TaggedSentence {
                id,
                tokens: std::mem::take(tokens),
            });
        }
    };
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: format!("{label}:{}", i + 1),
            source,
        })?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            flush(&mut tokens, &mut pending_id, &mut out);
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if tokens.is_empty() {
                if let Some(v) = rest
                    .trim()
                    .strip_prefix("id")
                    .map(|r| r.trim_start().trim_start_matches('='))
                {
                    pending_id = Some(v.trim().to_string());
                }
                continue;
            }
        }
        // A line without a tab keeps an empty tag and is rejected at ingestion.
        let (token, tag) = match trimmed.rsplit_once('\t') {
            Some((t, g)) => (t, g),
            None => (trimmed, ""),
        };
        tokens.push(TaggedToken {
            token: token.to_string(),
            tag: tag.trim().to_string(),
        });
    }
    flush(&mut tokens, &mut pending_id, &mut out);
    Ok(out)
}

pub fn read_hyperbole_file(path: &Path) -> Result<Vec<HyperboleRow>, CorpusError> {
    read_hyperbole(open(path)?, &path.display().to_string())
}

pub fn read_idiom_file(path: &Path) -> Result<Vec<TaggedSentence>, CorpusError> {
    read_idiom(open(path)?, &path.display().to_string())
}

pub fn read_metaphor_file(path: &Path) -> Result<Vec<ScoredRow>, CorpusError> {
    read_metaphor(open(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperbole_single_format() {
        let data = "id\ttext\tlabel\nh1\tI am so hungry I could eat a horse\t1\nh2\tI am hungry\t0\n\n";
        let rows = read_hyperbole(data.as_bytes(), "t").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].id, "h1");
        assert_eq!(rows[1].label, "0");
    }

    #[test]
    fn hyperbole_paired_format() {
        let data = "hyperbolic\tliteral\nA\ta\nB\tb\n";
        let rows = read_hyperbole(data.as_bytes(), "t").unwrap();
        let ids: Vec<_> = rows.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["1:hyp", "1:lit", "2:hyp", "2:lit"]);
        assert_eq!(rows[3].text.as_deref(), Some("b"));
    }

    #[test]
    fn hyperbole_missing_columns() {
        assert!(matches!(
            read_hyperbole("foo\tbar\n1\t2\n".as_bytes(), "t"),
            Err(CorpusError::Format { .. })
        ));
    }

    #[test]
    fn hyperbole_short_row_has_no_text() {
        let rows = read_hyperbole("label\ttext\n1\n".as_bytes(), "t").unwrap();
        assert_eq!(rows[0].text, None);
    }

    #[test]
    fn quotes_are_literal() {
        let data = "sentence\tscore\n\"Time is money\", he said\t3\n";
        let rows = read_metaphor(data.as_bytes(), "t").unwrap();
        assert_eq!(rows[0].sentence.as_deref(), Some("\"Time is money\", he said"));
        assert_eq!(rows[0].score, "3");
    }

    #[test]
    fn idiom_blocks() {
        let data = "# id = s1\nHe\tO\nkicked\tB-IDIOM\nthe\tI-IDIOM\nbucket\tI-IDIOM\n\n\nCats\tO\nsleep\tO\n";
        let s = read_idiom(data.as_bytes(), "t").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].id, "s1");
        assert_eq!(s[0].tokens.len(), 4);
        assert_eq!(s[1].id, "2");
        assert_eq!(s[1].tokens[1].tag, "O");
    }

    #[test]
    fn idiom_line_without_tag() {
        let s = read_idiom("lonely\n".as_bytes(), "t").unwrap();
        assert_eq!(s[0].tokens[0].tag, "");
    }
}
