//! Static SVG bar charts built from rects and text. Output bytes depend only
//! on the aggregate table.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use uptodate_core::ScenarioId;

use crate::error::HarnessError;
use crate::harness::AggregateTable;

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub method: String,
    pub label: String,
    pub value: f64,
}

/// One bar group: a metric across methods.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub metric: String,
    pub title: String,
    pub bars: Vec<Bar>,
}

/// A file with one or more side-by-side panels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub file_name: String,
    pub title: String,
    pub panels: Vec<Panel>,
}

/// File name and metrics of each chart per scenario.
fn layout(s: ScenarioId) -> &'static [(&'static str, &'static [&'static str])] {
    match s {
        ScenarioId::Feature => &[("feature_accuracy_cost.svg", &["acc", "cost"])],
        ScenarioId::Openset => &[("openset_unknown_model.svg", &["unk", "model"])],
        ScenarioId::Routine => &[
            ("routine_success_length.svg", &["succ", "len"]),
            ("routine_compression.svg", &["comp"]),
        ],
        ScenarioId::Evidence => &[("evidence_useful_cost.svg", &["useful", "cost"])],
    }
}

pub fn charts_for(table: &AggregateTable) -> Vec<ChartSpec> {
    let s = table.scenario;
    layout(s)
        .iter()
        .map(|(file, metrics)| {
            let panels: Vec<Panel> = metrics
                .iter()
                .map(|m| {
                    Panel {
                        metric: (*m).to_owned(),
                        title: s.metric_label(m).expect("layout uses scenario metrics").to_owned(),
                        bars: table
                            .rows
                            .iter()
                            .map(|r| Bar {
                                method: r.method.clone(),
                                label: s.method_label(&r.method).unwrap_or(&r.method).to_owned(),
                                value: r.mean.get(*m).copied().unwrap_or(0.0),
                            })
                            .collect(),
                    }
                })
                .collect();
            let title = format!(
                "{s}: {}",
                panels.iter().map(|p| p.title.as_str()).collect::<Vec<_>>().join(" / ")
            );
            ChartSpec { file_name: (*file).to_owned(), title, panels }
        })
        .collect()
}

/// Smallest of 1, 2, 5 times a power of ten that is ≥ `max`; 1 when there
/// is nothing positive to show.
pub fn axis_max(max: f64) -> f64 {
    if max.is_nan() || max <= 0.0 || max.is_infinite() {
        return 1.0;
    }
    let mag = 10f64.powi(max.log10().floor() as i32);
    for step in [1.0, 2.0, 5.0, 10.0] {
        let top = step * mag;
        if top >= max {
            return top;
        }
    }
    10.0 * mag
}

const PANEL_W: f64 = 320.0;
const PLOT_X: f64 = 56.0;
const PLOT_W: f64 = 244.0;
const PLOT_TOP: f64 = 56.0;
const PLOT_H: f64 = 180.0;
const HEIGHT: f64 = 320.0;
const PALETTE: [&str; 4] = ["#9e9e9e", "#f2a541", "#5b8cc0", "#2f8f5b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn f(v: f64) -> String {
    format!("{v:.2}")
}

pub fn render_svg(chart: &ChartSpec) -> String {
    let width = PANEL_W * chart.panels.len() as f64;
    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
        w = f(width),
        h = f(HEIGHT)
    );
    let _ = writeln!(o, r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##, f(width), f(HEIGHT));
    let _ = writeln!(
        o,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        f(width / 2.0),
        esc(&chart.title)
    );
    for (pi, panel) in chart.panels.iter().enumerate() {
        let ox = PANEL_W * pi as f64;
        let top = axis_max(panel.bars.iter().map(|b| b.value).fold(0.0, f64::max));
        let base = PLOT_TOP + PLOT_H;
        let _ = writeln!(
            o,
            r#"<g class="panel" data-metric="{}" data-axis-max="{}" transform="translate({},0)">"#,
            esc(&panel.metric),
            top,
            f(ox)
        );
        let _ = writeln!(
            o,
            r#"<text x="{}" y="44" text-anchor="middle" font-size="12">{}</text>"#,
            f(PLOT_X + PLOT_W / 2.0),
            esc(&panel.title)
        );
        for tick in 0..=4 {
            let frac = f64::from(tick) / 4.0;
            let y = base - frac * PLOT_H;
            let _ = writeln!(
                o,
                r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/>"##,
                f(PLOT_X),
                f(PLOT_X + PLOT_W),
                y = f(y)
            );
            let _ = writeln!(
                o,
                r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
                f(PLOT_X - 6.0),
                f(y + 4.0),
                top * frac
            );
        }
        let _ = writeln!(
            o,
            r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#333333"/>"##,
            f(PLOT_TOP),
            f(base),
            x = f(PLOT_X)
        );
        let n = panel.bars.len().max(1) as f64;
        let slot = PLOT_W / n;
        let bw = slot * 0.6;
        for (bi, bar) in panel.bars.iter().enumerate() {
            let h = (bar.value.max(0.0) / top * PLOT_H).min(PLOT_H);
            let x = PLOT_X + slot * bi as f64 + (slot - bw) / 2.0;
            let cx = x + bw / 2.0;
            let _ = writeln!(
                o,
                r#"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="{}" data-method="{}" data-value="{}"/>"#,
                f(x),
                f(base - h),
                f(bw),
                f(h),
                PALETTE[bi % PALETTE.len()],
                esc(&bar.method),
                bar.value
            );
            let _ = writeln!(
                o,
                r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text>"#,
                f(cx),
                f(base - h - 4.0),
                bar.value
            );
            let _ = writeln!(
                o,
                r#"<text x="{cx}" y="{y}" text-anchor="end" font-size="10" transform="rotate(-30 {cx} {y})">{}</text>"#,
                esc(&bar.label),
                cx = f(cx),
                y = f(base + 14.0)
            );
        }
        let _ = writeln!(
            o,
            r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#333333"/>"##,
            f(PLOT_X),
            f(PLOT_X + PLOT_W),
            y = f(base)
        );
        o.push_str("</g>\n");
    }
    o.push_str("</svg>\n");
    o
}

/// Writes every chart of the table into `dir`, creating it if needed.
pub fn write_charts(table: &AggregateTable, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let wrap = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Write { path, source }
    };
    fs::create_dir_all(dir).map_err(wrap(dir))?;
    let mut written = Vec::new();
    for chart in charts_for(table) {
        let path = dir.join(&chart.file_name);
        fs::write(&path, render_svg(&chart)).map_err(wrap(&path))?;
        written.push(path);
    }
    Ok(written)
}
