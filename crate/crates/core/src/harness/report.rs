//! CSV, SVG and plain-text rendering of metric reports.

use std::fmt::Write;

use super::protocol::{MetricReport, Summary, METRIC_COLUMNS};
use crate::analytics::bar_svg;

/// Headers matching the published tables.
pub const DISPLAY_HEADERS: [&str; 8] = ["V. (%)", "A. (%)", "F1", "IoU V. (%)", "IoU A. (%)", "DSC V. (%)", "DSC A. (%)", "RMSE"];

/// Fractions shown as percent; F1 and RMSE shown raw.
const PERCENT: [bool; 8] = [true, true, false, true, true, true, true, false];

/// Published values carried for comparison only.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub label: String,
    /// `(mean, std)` in display units.
    pub values: [Option<(f64, Option<f64>)>; 8],
}

impl ReferenceRow {
    fn new(label: &str, pairs: &[(usize, f64, Option<f64>)]) -> Self {
        let mut values = [None; 8];
        for &(c, m, s) in pairs {
            values[c] = Some((m, s));
        }
        Self { label: label.to_string(), values }
    }
}

/// Best classification row (PointNet++ with features, 512 points).
pub fn reference_classification() -> Vec<ReferenceRow> {
    vec![ReferenceRow::new(
        "PointNet++ with features, 512",
        &[(0, 99.88, Some(0.16)), (1, 100.0, Some(0.00)), (2, 0.9990, Some(0.0014))],
    )]
}

/// Best segmentation row (PointNet with features, 2048 points).
pub fn reference_segmentation() -> Vec<ReferenceRow> {
    vec![ReferenceRow::new(
        "PointNet with features, 2048",
        &[(3, 96.57, Some(0.28)), (4, 88.67, Some(1.82)), (5, 98.26, Some(0.15)), (6, 93.99, Some(1.03))],
    )]
}

/// Simulation rows, small and large surrogate, with and without features.
pub fn reference_simulation() -> Vec<ReferenceRow> {
    [("S/1", 7.57, 1.103), ("S/1 + feats", 6.09, 0.637), ("L/1", 4.03, 0.330), ("L/1 + feats", 3.55, 0.170)]
        .iter()
        .map(|&(l, m, s)| ReferenceRow::new(l, &[(7, m, Some(s))]))
        .collect()
}

pub const REFERENCE_MARK: &str = "reference, not reproduced";

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub csv: String,
    pub svg: String,
    pub text: String,
}

fn display(c: usize, s: &Summary) -> (f64, f64) {
    let k = if PERCENT[c] { 100.0 } else { 1.0 };
    (s.mean * k, s.std * k)
}

/// Columns with a value in any row.
fn used_columns(reports: &[MetricReport], references: &[ReferenceRow]) -> Vec<usize> {
    (0..8)
        .filter(|&c| reports.iter().any(|r| r.summary[c].is_some()) || references.iter().any(|r| r.values[c].is_some()))
        .collect()
}

pub fn report_render(reports: &[MetricReport], references: &[ReferenceRow]) -> RenderedReport {
    let cols = used_columns(reports, references);

    let mut csv = String::from("label,kind,runs,failed");
    for &c in &cols {
        let _ = write!(csv, ",{}_mean,{}_std", METRIC_COLUMNS[c], METRIC_COLUMNS[c]);
    }
    csv.push('\n');
    let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
    for r in reports {
        let _ = write!(csv, "{},{},{},{}", quote(&r.label), r.protocol, r.runs.len(), r.failures.len());
        for &c in &cols {
            match &r.summary[c] {
                Some(s) => {
                    let (m, d) = display(c, s);
                    let _ = write!(csv, ",{m:.6},{d:.6}");
                }
                None => csv.push_str(",,"),
            }
        }
        csv.push('\n');
    }
    for r in references {
        let _ = write!(csv, "{},{},,", quote(&r.label), quote(REFERENCE_MARK));
        for &c in &cols {
            match r.values[c] {
                Some((m, s)) => {
                    let _ = write!(csv, ",{m},{}", s.map_or(String::new(), |s| s.to_string()));
                }
                None => csv.push_str(",,"),
            }
        }
        csv.push('\n');
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Model".to_string()];
    header.extend(cols.iter().map(|&c| DISPLAY_HEADERS[c].to_string()));
    rows.push(header);
    for r in reports {
        let mut row = vec![if r.partial() { format!("{} (partial {}/{})", r.label, r.runs.len(), r.seeds.len()) } else { r.label.clone() }];
        row.extend(cols.iter().map(|&c| {
            r.summary[c].map_or("-".to_string(), |s| {
                let (m, d) = display(c, &s);
                if PERCENT[c] { format!("{m:.2} ± {d:.2}") } else { format!("{m:.4} ± {d:.4}") }
            })
        }));
        rows.push(row);
    }
    for r in references {
        let mut row = vec![format!("{} [{REFERENCE_MARK}]", r.label)];
        row.extend(cols.iter().map(|&c| match r.values[c] {
            Some((m, Some(s))) => format!("{m} ± {s}"),
            Some((m, None)) => format!("{m}"),
            None => "-".to_string(),
        }));
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
    let mut text = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(s, &w)| format!("{s:<w$}")).collect();
        text.push_str(cells.join("  ").trim_end());
        text.push('\n');
        if i == 0 {
            text.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
            text.push('\n');
        }
    }

    // toolkit rows only: reference units differ from the synthetic benchmarks
    let headline = cols.iter().copied().find(|&c| reports.iter().any(|r| r.summary[c].is_some()));
    let svg = match headline {
        Some(c) => {
            let bars: Vec<(String, f64, Option<f64>)> = reports
                .iter()
                .filter_map(|r| r.summary[c].map(|s| display(c, &s)).map(|(m, d)| (r.label.clone(), m, Some(d))))
                .collect();
            bar_svg(&bars, &format!("{} by run group", DISPLAY_HEADERS[c]), DISPLAY_HEADERS[c])
        }
        None => bar_svg(&[], "no results", ""),
    };
    RenderedReport { csv, svg, text }
}
