//! Dependency-free SVG figures for run and sweep directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sparse_node::datagen::DatasetMeta;
use sparse_node::{ControlTrajectory, Form, SparsityReport, TimeGrid};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::run::read_json;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
/// Most heatmaps written for one run; longer grids are subsampled.
const MAX_HEATMAPS: usize = 16;

pub fn require(dir: &Path, files: &[&str]) -> CliResult<()> {
    let missing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| !dir.join(f).is_file())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::MissingFiles {
            dir: dir.display().to_string(),
            missing: missing.join(", "),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    /// Draw as a piecewise-constant staircase (`points[k]` holds on
    /// `[x_k, x_{k+1})`, with the last point closing the final step).
    pub step: bool,
    pub markers: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub hlines: Vec<(f64, String)>,
    pub vlines: Vec<(f64, String)>,
    pub log_x: bool,
    pub log_y: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let usable = |x: f64, y: f64| {
            (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0) && x.is_finite() && y.is_finite()
        };

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if usable(x, y) {
                    xs.push(tx(x));
                    ys.push(ty(y));
                }
            }
        }
        for (y, _) in &self.hlines {
            if !self.log_y || *y > 0.0 {
                ys.push(ty(*y));
            }
        }
        for (x, _) in &self.vlines {
            if !self.log_x || *x > 0.0 {
                xs.push(tx(*x));
            }
        }
        let range = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = range(&xs);
        let (y0, y1) = range(&ys);
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let px = |v: f64| MARGIN_L + (v - x0) / (x1 - x0) * pw;
        let py = |v: f64| MARGIN_T + (1.0 - (v - y0) / (y1 - y0)) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let lx = if self.log_x { 10f64.powf(fx) } else { fx };
            let ly = if self.log_y { 10f64.powf(fy) } else { fy };
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                px(fx),
                HEIGHT - MARGIN_B + 16.0,
                fmt_tick(lx)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN_L - 6.0,
                py(fy) + 4.0,
                fmt_tick(ly)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        for (y, label) in &self.hlines {
            if self.log_y && *y <= 0.0 {
                continue;
            }
            let yy = py(ty(*y));
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_L}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#888" stroke-dasharray="6 4"/>"##,
                MARGIN_L + pw
            );
            let _ = writeln!(
                svg,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#555">{}</text>"##,
                MARGIN_L + pw - 4.0,
                yy - 4.0,
                escape(label)
            );
        }
        for (x, label) in &self.vlines {
            if self.log_x && *x <= 0.0 {
                continue;
            }
            let xx = px(tx(*x));
            let _ = writeln!(
                svg,
                r##"<line x1="{xx:.1}" y1="{MARGIN_T}" x2="{xx:.1}" y2="{:.1}" stroke="#c33" stroke-dasharray="4 3"/>"##,
                MARGIN_T + ph
            );
            let _ = writeln!(
                svg,
                r##"<text x="{:.1}" y="{:.1}" fill="#c33">{}</text>"##,
                xx + 4.0,
                MARGIN_T + 14.0,
                escape(label)
            );
        }
        for s in &self.series {
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|&&(x, y)| usable(x, y))
                .map(|&(x, y)| (px(tx(x)), py(ty(y))))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let mut path = String::new();
            for (i, &(x, y)) in pts.iter().enumerate() {
                if i == 0 {
                    let _ = write!(path, "M{x:.2},{y:.2}");
                } else if s.step {
                    let _ = write!(path, " H{x:.2} V{y:.2}");
                } else {
                    let _ = write!(path, " L{x:.2},{y:.2}");
                }
            }
            let _ = writeln!(
                svg,
                r#"<path d="{path}" fill="none" stroke="{}" stroke-width="2"/>"#,
                s.color
            );
            if s.markers {
                for (x, y) in &pts {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"/>"#,
                        s.color
                    );
                }
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Diverging blue/white/red grid of a matrix.
pub fn heatmap(title: &str, matrix: &[Vec<f64>], scale: f64) -> String {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    let cell = 48.0;
    let (w, h) = (cols as f64 * cell + 40.0, rows as f64 * cell + 60.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let s = if scale > 0.0 {
                (v / scale).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            let fade = |c: f64| (255.0 * (1.0 - s.abs()) + c * s.abs()).round() as u8;
            let (r, g, b) = if s >= 0.0 {
                (fade(200.0), fade(40.0), fade(40.0))
            } else {
                (fade(40.0), fade(70.0), fade(200.0))
            };
            let (x, y) = (20.0 + j as f64 * cell, 40.0 + i as f64 * cell);
            let _ = writeln!(
                svg,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({r},{g},{b})" stroke="#999"/>"##
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                fmt_tick((v * 1000.0).round() / 1000.0)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_svg(dir: &Path, name: &str, svg: &str, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let path = dir.join(name);
    std::fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
    out.push(path);
    Ok(())
}

/// Header names and rows; empty cells read as `None`.
type Columns = (Vec<String>, Vec<Vec<Option<f64>>>);

fn read_columns(path: &Path) -> CliResult<Columns> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(|s| s.trim().parse::<f64>().ok()).collect());
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> CliResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::MissingFiles {
            dir: path.display().to_string(),
            missing: format!("column {name}"),
        })
}

/// Writes every figure the directory supports and returns their paths.
pub fn plot_dir(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if dir.join("sweep.json").is_file() {
        plot_sweep(dir)
    } else {
        plot_run(dir)
    }
}

pub fn plot_run(dir: &Path) -> CliResult<Vec<PathBuf>> {
    require(
        dir,
        &[
            "metrics.csv",
            "report.json",
            "controls.csv",
            "config.json",
            "dataset.json",
        ],
    )?;
    let report: SparsityReport = read_json(&dir.join("report.json"))?;
    let metrics = dir.join("metrics.csv");
    let (header, rows) = read_columns(&metrics)?;
    let (ti, ei, ui) = (
        column(&header, "t", &metrics)?,
        column(&header, "E", &metrics)?,
        column(&header, "u_l1", &metrics)?,
    );
    let t: Vec<f64> = rows.iter().filter_map(|r| r[ti]).collect();
    let errors: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r[ti]?, r[ei]?))).collect();
    let mut profile: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r[ti]?, r[ui]?))).collect();
    if let (Some(&last_t), Some(&(_, last_u))) = (t.last(), profile.last()) {
        profile.push((last_t, last_u));
    }
    let tstar_label = format!("T* = {}", fmt_tick(report.tstar));
    let mut out = Vec::new();

    let chart = Chart {
        title: "control norm per step".into(),
        x_label: "t".into(),
        y_label: "‖u(t)‖₁".into(),
        series: vec![Series {
            points: profile,
            color: "#1f4e9c",
            step: true,
            markers: false,
        }],
        hlines: vec![(report.bound, format!("M = {}", fmt_tick(report.bound)))],
        vlines: vec![(report.tstar, tstar_label.clone())],
        ..Chart::default()
    };
    write_svg(dir, "u_l1_vs_t.svg", &chart.render(), &mut out)?;

    let floor = errors
        .iter()
        .map(|e| e.1)
        .filter(|&e| e > 0.0)
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
        * 0.1;
    let chart = Chart {
        title: "training error along the flow".into(),
        x_label: "t".into(),
        y_label: "E(x(t))".into(),
        series: vec![Series {
            points: errors.iter().map(|&(t, e)| (t, e.max(floor))).collect(),
            color: "#2a7d2a",
            step: false,
            markers: true,
        }],
        vlines: vec![(report.tstar, tstar_label)],
        log_y: true,
        ..Chart::default()
    };
    write_svg(dir, "error_vs_t.svg", &chart.render(), &mut out)?;

    let cfg: RunConfig = read_json(&dir.join("config.json"))?;
    if cfg.dynamics.form != Form::DriftlessAffine {
        let meta: DatasetMeta = read_json(&dir.join("dataset.json"))?;
        let d = meta.d;
        let grid = TimeGrid::new(cfg.grid.horizon, cfg.grid.steps)?;
        let file = std::fs::File::open(dir.join("controls.csv"))
            .map_err(|e| CliError::io(&dir.join("controls.csv"), e))?;
        let ctrl = ControlTrajectory::read_csv(file, grid)?;
        let scale = ctrl
            .points()
            .iter()
            .flat_map(|p| p[..d * d].iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let steps = ctrl.steps();
        let picks: Vec<usize> = if steps <= MAX_HEATMAPS {
            (0..steps).collect()
        } else {
            (0..MAX_HEATMAPS)
                .map(|i| i * (steps - 1) / (MAX_HEATMAPS - 1))
                .collect()
        };
        for k in picks {
            let w: Vec<Vec<f64>> = ctrl.point(k)[..d * d]
                .chunks(d)
                .map(<[f64]>::to_vec)
                .collect();
            let title = format!("w at t = {}", fmt_tick(grid.time(k)));
            write_svg(
                dir,
                &format!("w_heatmap_t{k}.svg"),
                &heatmap(&title, &w, scale),
                &mut out,
            )?;
        }
    }
    Ok(out)
}

pub fn plot_sweep(dir: &Path) -> CliResult<Vec<PathBuf>> {
    require(dir, &["sweep.json", "sweep.csv"])?;
    let summary: crate::sweep::SweepSummary = read_json(&dir.join("sweep.json"))?;
    let path = dir.join("sweep.csv");
    let (header, rows) = read_columns(&path)?;
    let (ti, mi, si, ei) = (
        column(&header, "T", &path)?,
        column(&header, "M", &path)?,
        column(&header, "Tstar", &path)?,
        column(&header, "E_at_Tstar", &path)?,
    );
    let mut out = Vec::new();
    match summary.axis {
        crate::sweep::Axis::T(_) => {
            let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r[ti]?, r[ei]?))).collect();
            let mut series = vec![Series {
                points: pts.clone(),
                color: "#1f4e9c",
                step: false,
                markers: true,
            }];
            // Reference slope c/T through the first point.
            if let Some(&(t0, e0)) = pts.first() {
                series.push(Series {
                    points: pts.iter().map(|&(t, _)| (t, e0 * t0 / t)).collect(),
                    color: "#999",
                    step: false,
                    markers: false,
                });
            }
            let chart = Chart {
                title: "error at T* against the horizon".into(),
                x_label: "T".into(),
                y_label: "E(x(T*))".into(),
                series,
                log_x: true,
                log_y: true,
                ..Chart::default()
            };
            write_svg(dir, "decay_vs_T.svg", &chart.render(), &mut out)?;
        }
        crate::sweep::Axis::M(_) => {
            let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r[mi]?, r[si]?))).collect();
            let chart = Chart {
                title: "stopping time against the control bound".into(),
                x_label: "M".into(),
                y_label: "T*".into(),
                series: vec![Series {
                    points: pts,
                    color: "#1f4e9c",
                    step: false,
                    markers: true,
                }],
                log_x: true,
                ..Chart::default()
            };
            write_svg(dir, "tstar_vs_M.svg", &chart.render(), &mut out)?;
        }
    }
    Ok(out)
}
