//! Plain-text tables and static SVG heatmaps.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{CrossFigurativeTable, EvalReport, GapTable, PromptDiffReport, TransferMatrix};
use crate::corpus::Label;

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

fn signed_pct(x: f64) -> String {
    format!("{:+.2}", x * 100.0)
}

/// Left-aligned first column, right-aligned rest, two spaces between.
fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let n = header.len();
    let mut width = vec![0; n];
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (i, cell) in row.iter().enumerate() {
            width[i] = width[i].max(cell.chars().count());
        }
    }
    let line = |row: &[String]| {
        let mut s = String::new();
        for (i, cell) in row.iter().enumerate() {
            let pad = width[i] - cell.chars().count();
            if i == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (n - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// One line per report: task, split, template, size, accuracy (%),
/// unparsed count, zero-shot flag.
pub fn render_reports(reports: &[EvalReport]) -> String {
    let header = strings(&["task", "split", "template", "n", "acc%", "unparsed", "zero-shot"]);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.task.key(),
                r.split.to_string(),
                r.template_id.clone(),
                r.n.to_string(),
                pct(r.accuracy),
                r.unparsed_count.to_string(),
                if r.zero_shot { "yes" } else { "no" }.to_string(),
            ]
        })
        .collect();
    table(&header, &rows)
}

impl EvalReport {
    /// Confusion matrix as counts and row percentages.
    pub fn render_confusion(&self) -> String {
        let header = strings(&["gold \\ predicted", "literal", "figurative", "literal%", "figurative%"]);
        let p = self.confusion_row_percent;
        let rows = [Label::Literal, Label::Figurative]
            .iter()
            .map(|g| {
                let i = g.index();
                vec![
                    g.to_string(),
                    self.confusion.0[i][0].to_string(),
                    self.confusion.0[i][1].to_string(),
                    format!("{:.2}", p[i][0]),
                    format!("{:.2}", p[i][1]),
                ]
            })
            .collect::<Vec<_>>();
        format!(
            "{} {} (template {}), unparsed {}\n{}",
            self.task.key(),
            self.split,
            self.template_id,
            self.unparsed_count,
            table(&header, &rows)
        )
    }

    pub fn confusion_svg(&self) -> String {
        let labels = vec!["literal".to_string(), "figurative".to_string()];
        let values: Vec<Vec<f64>> = self.confusion_row_percent.iter().map(|r| r.to_vec()).collect();
        heatmap_svg(
            &format!("{} {} confusion (row %)", self.task.key(), self.split),
            &labels,
            &labels,
            &values,
            ColorScale::Sequential { min: 0.0, max: 100.0 },
        )
    }
}

impl TransferMatrix {
    pub fn render_text(&self) -> String {
        let mut header = vec![format!("{} train \\ test", self.figure)];
        header.extend(self.cols.iter().map(ToString::to_string));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .zip(&self.cells)
            .map(|(r, cells)| {
                std::iter::once(r.to_string())
                    .chain(cells.iter().map(|c| pct(*c)))
                    .collect()
            })
            .collect();
        table(&header, &rows)
    }

    pub fn to_svg(&self) -> String {
        let rows: Vec<String> = self.rows.iter().map(ToString::to_string).collect();
        let cols: Vec<String> = self.cols.iter().map(ToString::to_string).collect();
        let values: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|r| r.iter().map(|c| c * 100.0).collect())
            .collect();
        heatmap_svg(
            &format!("{} cross-lingual accuracy (%)", self.figure),
            &rows,
            &cols,
            &values,
            ColorScale::Sequential { min: 0.0, max: 100.0 },
        )
    }
}

impl PromptDiffReport {
    pub fn render_text(&self) -> String {
        let header = vec![
            "task".to_string(),
            self.reference_template.clone(),
            self.other_template.clone(),
            "diff".to_string(),
        ];
        let rows: Vec<Vec<String>> = self
            .entries
            .iter()
            .map(|e| vec![e.task.clone(), pct(e.reference), pct(e.other), signed_pct(e.diff)])
            .collect();
        table(&header, &rows)
    }

    /// One-row diverging heatmap of the differences in points.
    pub fn to_svg(&self) -> String {
        let cols: Vec<String> = self.entries.iter().map(|e| e.task.clone()).collect();
        let values = vec![self.entries.iter().map(|e| e.diff * 100.0).collect::<Vec<f64>>()];
        let max = values[0].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        heatmap_svg(
            &format!("{} minus {} (points)", self.reference_template, self.other_template),
            &[format!("{} - {}", self.reference_template, self.other_template)],
            &cols,
            &values,
            ColorScale::Diverging { abs_max: max },
        )
    }
}

impl CrossFigurativeTable {
    pub fn render_text(&self) -> String {
        let header = strings(&["figure", "single", "multi", "delta"]);
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.figure.to_string(), pct(r.single), pct(r.multi), signed_pct(r.delta)])
            .collect();
        format!("{}\n{}", self.language, table(&header, &rows))
    }
}

impl GapTable {
    pub fn render_text(&self) -> String {
        let header = strings(&["task", "valid", "test", "gap"]);
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.task.clone(), pct(r.valid), pct(r.test), signed_pct(r.gap)])
            .collect();
        table(&header, &rows)
    }
}

/// Settings by tasks grid of accuracies in percent. Imported baseline
/// numbers and measured reports share this shape.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, BTreeMap<String, f64>)>,
}

impl ResultsTable {
    pub fn new(columns: Vec<String>) -> Self {
        ResultsTable {
            columns,
            rows: Vec::new(),
        }
    }

    /// Adds a row of percent values keyed by column.
    pub fn add_row(&mut self, setting: impl Into<String>, values: BTreeMap<String, f64>) {
        for k in values.keys() {
            if !self.columns.contains(k) {
                self.columns.push(k.clone());
            }
        }
        self.rows.push((setting.into(), values));
    }

    /// Adds a row from reports, keyed by `figure-language`.
    pub fn add_reports(&mut self, setting: impl Into<String>, reports: &[EvalReport]) {
        let values = reports.iter().map(|r| (r.cell(), r.accuracy * 100.0)).collect();
        self.add_row(setting, values);
    }

    pub fn render_text(&self) -> String {
        let mut header = vec!["setting".to_string()];
        header.extend(self.columns.iter().cloned());
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(name, vals)| {
                std::iter::once(name.clone())
                    .chain(
                        self.columns
                            .iter()
                            .map(|c| vals.get(c).map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))),
                    )
                    .collect()
            })
            .collect();
        table(&header, &rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorScale {
    /// White at `min` to blue at `max`.
    Sequential { min: f64, max: f64 },
    /// Red at `-abs_max`, white at zero, blue at `abs_max`.
    Diverging { abs_max: f64 },
}

const WHITE: (f64, f64, f64) = (255.0, 255.0, 255.0);
const BLUE: (f64, f64, f64) = (33.0, 102.0, 172.0);
const RED: (f64, f64, f64) = (178.0, 24.0, 43.0);

fn lerp(a: (f64, f64, f64), b: (f64, f64, f64), t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let c = |x: f64, y: f64| (x + (y - x) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

impl ColorScale {
    fn color(self, v: f64) -> (String, bool) {
        match self {
            ColorScale::Sequential { min, max } => {
                let t = (v - min) / (max - min);
                (lerp(WHITE, BLUE, t), t > 0.6)
            }
            ColorScale::Diverging { abs_max } => {
                let t = v / abs_max;
                if t >= 0.0 {
                    (lerp(WHITE, BLUE, t), t > 0.6)
                } else {
                    (lerp(WHITE, RED, -t), -t > 0.6)
                }
            }
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Static heatmap with the value printed in every cell (two decimals).
pub fn heatmap_svg(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[Vec<f64>],
    scale: ColorScale,
) -> String {
    const CELL_W: usize = 72;
    const CELL_H: usize = 36;
    let left = 16 + 8 * row_labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let top = 64;
    let width = left + CELL_W * col_labels.len() + 16;
    let height = top + CELL_H * row_labels.len() + 16;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14">{}</text>"#,
        left,
        escape(title)
    );
    for (c, label) in col_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + c * CELL_W + CELL_W / 2,
            top - 8,
            escape(label)
        );
    }
    for (r, label) in row_labels.iter().enumerate() {
        let y = top + r * CELL_H;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 8,
            y + CELL_H / 2 + 4,
            escape(label)
        );
        for c in 0..col_labels.len() {
            let v = values.get(r).and_then(|row| row.get(c)).copied().unwrap_or(f64::NAN);
            let (fill, dark) = scale.color(v);
            let x = left + c * CELL_W;
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#888"/>"##
            );
            let text = if v.is_finite() { format!("{v:.2}") } else { "-".into() };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{}">{}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4,
                if dark { "white" } else { "black" },
                text
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_table_marks_missing_cells() {
        let mut t = ResultsTable::new(vec!["hyperbole-en".into(), "idiom-en".into()]);
        t.add_row("baseline", BTreeMap::from([("idiom-en".to_string(), 86.0)]));
        let text = t.render_text();
        assert!(text.contains("86.00"));
        assert!(text.lines().nth(2).unwrap().contains('-'));
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let svg = heatmap_svg(
            "a<b",
            &["en".into(), "overall".into()],
            &["en".into()],
            &[vec![100.0], vec![50.0]],
            ColorScale::Sequential { min: 0.0, max: 100.0 },
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("100.00") && svg.contains("50.00"));
        assert_eq!(svg.matches("<rect").count(), 3);
    }

    #[test]
    fn colors() {
        let s = ColorScale::Diverging { abs_max: 2.0 };
        assert_eq!(s.color(0.0).0, "#ffffff");
        assert_eq!(s.color(2.0).0, "#2166ac");
        assert_eq!(s.color(-2.0).0, "#b2182b");
    }
}
