//! Text and CSV renderings of an [`AggregateTable`]. Every number is printed
//! with three decimals.

use std::fmt::Write;

use crate::harness::{AggregateTable, LEN_SUCC};

pub const PRECISION: usize = 3;

fn num(v: f64) -> String {
    format!("{v:.PRECISION$}")
}

fn label(table: &AggregateTable, method: &str) -> String {
    table.scenario.method_label(method).unwrap_or(method).to_owned()
}

/// Aligned plain-text table: method labels left-aligned, numbers
/// right-aligned under the short column names.
pub fn render_text(table: &AggregateTable) -> String {
    let s = table.scenario;
    let headers = s.column_labels();
    let cells: Vec<(String, Vec<String>)> = table
        .rows
        .iter()
        .map(|row| {
            let vals = s
                .columns()
                .iter()
                .map(|m| row.mean.get(*m).map_or_else(|| "-".into(), |v| num(*v)))
                .collect();
            (label(table, &row.method), vals)
        })
        .collect();

    let first = cells.iter().map(|(l, _)| l.len()).chain([6]).max().unwrap_or(6);
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| cells.iter().map(|(_, v)| v[i].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let _ = write!(out, "{:<first$}", "Method");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (l, vals) in &cells {
        let _ = write!(out, "{l:<first$}");
        for (v, w) in vals.iter().zip(&widths) {
            let _ = write!(out, "  {v:>w$}");
        }
        out.push('\n');
    }

    let succ_lens: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| r.mean.get(LEN_SUCC).map(|v| format!("{} {}", label(table, &r.method), num(*v))))
        .collect();
    if !succ_lens.is_empty() {
        let _ = writeln!(out, "Len. over successful rounds: {}", succ_lens.join(", "));
    }
    out
}

/// CSV with a `method` key column followed by the metric keys.
pub fn render_csv(table: &AggregateTable) -> String {
    let metrics = table.scenario.columns();
    let mut out = String::from("method");
    for m in metrics {
        out.push(',');
        out.push_str(m);
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.method);
        for m in metrics {
            out.push(',');
            if let Some(v) = row.mean.get(*m) {
                out.push_str(&num(*v));
            }
        }
        out.push('\n');
    }
    out
}
