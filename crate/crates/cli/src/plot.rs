//! Trade-off plots: a tidy CSV of every series and a static SVG.
//!
//! Each run contributes three series: emissions vs. accuracy, instances vs.
//! accuracy and instances vs. emissions. The instance axis is log-scaled.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::report::{read_checkpoints, CheckpointRecord, ReportError, CHECKPOINTS_FILE};

pub struct Panel {
    pub name: &'static str,
    pub title: &'static str,
    pub x: &'static str,
    pub y: &'static str,
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub log_x: bool,
}

pub const PANELS: [Panel; 3] = [
    Panel {
        name: "tradeoff",
        title: "Emissions vs. performance",
        x: "gco2e",
        y: "accuracy",
        x_label: "cumulative gCO2e",
        y_label: "accuracy",
        log_x: false,
    },
    Panel {
        name: "performance",
        title: "Performance over the stream",
        x: "t_k",
        y: "accuracy",
        x_label: "instances (log)",
        y_label: "accuracy",
        log_x: true,
    },
    Panel {
        name: "emissions",
        title: "Emissions over the stream",
        x: "t_k",
        y: "gco2e",
        x_label: "instances (log)",
        y_label: "cumulative gCO2e",
        log_x: true,
    },
];

#[derive(Debug, Clone)]
pub struct RunSeries {
    pub run_id: String,
    pub source: PathBuf,
    pub rows: Vec<CheckpointRecord>,
}

/// Loads `checkpoints.csv` from every directory. Runs without checkpoints
/// are labelled by their directory name.
pub fn load_runs(dirs: &[PathBuf]) -> Result<Vec<RunSeries>, ReportError> {
    dirs.iter()
        .map(|dir| {
            let path = dir.join(CHECKPOINTS_FILE);
            let rows = read_checkpoints(&path)?;
            let run_id = rows.first().map_or_else(
                || dir.file_name().unwrap_or(dir.as_os_str()).to_string_lossy().into_owned(),
                |r| r.get("run_id").to_string(),
            );
            Ok(RunSeries {
                run_id,
                source: dir.clone(),
                rows,
            })
        })
        .collect()
}

pub const PLOT_COLUMNS: [&str; 8] = ["run_id", "source", "panel", "k", "x_column", "x", "y_column", "y"];

/// One row per (run, panel, checkpoint); values are copied verbatim.
pub fn write_series_csv(path: &Path, runs: &[RunSeries]) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(PLOT_COLUMNS).map_err(err)?;
    for run in runs {
        let source = run.source.display().to_string();
        for panel in &PANELS {
            for row in &run.rows {
                w.write_record([
                    row.get("run_id"),
                    &source,
                    panel.name,
                    row.get("k"),
                    panel.x,
                    row.get(panel.x),
                    panel.y,
                    row.get(panel.y),
                ])
                .map_err(err)?;
            }
        }
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 240.0;
const LEFT: f64 = 70.0;
const GAP: f64 = 100.0;
const TOP: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.max(f64::MIN_POSITIVE).log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if log { 0.5 } else { lo.abs().max(1.0) * 0.1 };
            (lo, hi) = (lo - pad, hi + pad);
        } else if !log {
            let pad = (hi - lo) * 0.05;
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self { lo, hi, log }
    }

    /// Position in [0, 1].
    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.max(f64::MIN_POSITIVE).log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let mut ticks: Vec<f64> = (self.lo.ceil() as i32..=self.hi.floor() as i32).map(|e| 10f64.powi(e)).collect();
            if ticks.len() < 2 {
                ticks = vec![10f64.powf(self.lo), 10f64.powf(self.hi)];
            }
            return ticks;
        }
        let raw = (self.hi - self.lo) / 4.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut ticks = Vec::new();
        while t <= self.hi + step * 1e-9 {
            ticks.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
            t += step;
        }
        ticks
    }
}

fn points(run: &RunSeries, panel: &Panel) -> Vec<(f64, f64)> {
    run.rows
        .iter()
        .filter_map(|r| {
            let x = r.get(panel.x).parse::<f64>().ok()?;
            let y = r.get(panel.y).parse::<f64>().ok()?;
            Some((x, y))
        })
        .collect()
}

/// Three panels side by side with one line per run.
pub fn render_svg(runs: &[RunSeries]) -> String {
    let legend_h = 20.0 * runs.len() as f64 + 20.0;
    let width = LEFT + 3.0 * PANEL_W + 2.0 * GAP + 40.0;
    let height = TOP + PANEL_H + 60.0 + legend_h;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for (p, panel) in PANELS.iter().enumerate() {
        let ox = LEFT + p as f64 * (PANEL_W + GAP);
        let series: Vec<Vec<(f64, f64)>> = runs.iter().map(|r| points(r, panel)).collect();
        let xa = Axis::fit(series.iter().flatten().map(|&(x, _)| x), panel.log_x);
        let ya = Axis::fit(series.iter().flatten().map(|&(_, y)| y), false);
        let sx = |x: f64| ox + xa.unit(x) * PANEL_W;
        let sy = |y: f64| TOP + PANEL_H - ya.unit(y) * PANEL_H;

        let _ = writeln!(svg, r#"<g class="panel" id="{}">"#, panel.name);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            ox + PANEL_W / 2.0,
            TOP - 20.0,
            escape(panel.title)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{ox}" y="{TOP}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#333"/>"##
        );
        for t in xa.ticks() {
            let x = sx(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#333"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                TOP + PANEL_H,
                TOP + PANEL_H + 5.0,
                TOP + PANEL_H + 18.0,
                tick_label(t)
            );
        }
        for t in ya.ticks() {
            let y = sy(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{}" y1="{y:.2}" x2="{ox}" y2="{y:.2}" stroke="#333"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                ox - 5.0,
                ox - 8.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            ox + PANEL_W / 2.0,
            TOP + PANEL_H + 36.0,
            escape(panel.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate({},{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            ox - 50.0,
            TOP + PANEL_H / 2.0,
            escape(panel.y_label)
        );
        for (i, pts) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-run="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                escape(&runs[i].run_id),
                coords.join(" ")
            );
            for &(x, y) in pts {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    let ly = TOP + PANEL_H + 60.0;
    for (i, run) in runs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = ly + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            LEFT + 24.0,
            LEFT + 30.0,
            y + 4.0,
            escape(&run.run_id)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Output paths for `plot -o <path>`: the SVG and a sibling CSV.
pub fn output_paths(out: &Path) -> (PathBuf, PathBuf) {
    (out.with_extension("svg"), out.with_extension("csv"))
}

pub fn plot(dirs: &[PathBuf], out: &Path) -> Result<(PathBuf, PathBuf), ReportError> {
    let runs = load_runs(dirs)?;
    let (svg_path, csv_path) = output_paths(out);
    if let Some(parent) = svg_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    write_series_csv(&csv_path, &runs)?;
    std::fs::write(&svg_path, render_svg(&runs)).map_err(|source| ReportError::Io {
        path: svg_path.display().to_string(),
        source,
    })?;
    Ok((svg_path, csv_path))
}
