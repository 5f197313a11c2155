//! `sweep`: one run per value of `T` or `M`, then the bound table.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sparse_node::analysis::{attach_fit, bound_rows, check_theorem_bounds, BoundRun, BoundTable};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::run::{read_json, run_config, write_json};

/// Spread a fitted constant may show across runs before the fit is flagged.
pub const DEFAULT_SLACK: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values")]
pub enum Axis {
    T(Vec<f64>),
    M(Vec<f64>),
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| format!("expected T=.. or M=.., got {s:?}"))?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad value {v:?}: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err("axis needs at least one value".into());
        }
        match name.trim() {
            "T" => Ok(Axis::T(values)),
            "M" => Ok(Axis::M(values)),
            other => Err(format!("unknown axis {other:?}; use T or M")),
        }
    }
}

impl Axis {
    pub fn values(&self) -> &[f64] {
        match self {
            Axis::T(v) | Axis::M(v) => v,
        }
    }

    fn label(&self, v: f64) -> String {
        match self {
            Axis::T(_) => format!("T={v}"),
            Axis::M(_) => format!("M={v}"),
        }
    }

    /// Config for one value. Varying `T` keeps the step size of the base grid.
    pub fn apply(&self, base: &RunConfig, v: f64) -> CliResult<RunConfig> {
        let mut cfg = base.clone();
        match self {
            Axis::T(_) => {
                let dt = base.grid.horizon / base.grid.steps as f64;
                let steps = (v / dt).round();
                if steps < 1.0 || (steps * dt - v).abs() > 1e-9 * v.max(1.0) {
                    return Err(CliError::Core(sparse_node::Error::Misaligned {
                        horizon: v,
                        dt,
                        suggested_steps: (v / dt).ceil().max(1.0) as usize,
                    }));
                }
                cfg.grid.horizon = v;
                cfg.grid.steps = steps as usize;
            }
            Axis::M(_) => cfg.objective.bound = v,
        }
        cfg.name = Some(match &base.name {
            Some(n) => format!("{n} {}", self.label(v)),
            None => self.label(v),
        });
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub value: f64,
    pub dir: PathBuf,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    #[serde(flatten)]
    pub axis: Axis,
    pub runs: Vec<RunStatus>,
    /// `T*` non-increasing in `M` up to one grid step (M sweeps only).
    pub tstar_nonincreasing: Option<bool>,
    /// `E(T*)` non-increasing in `T` up to 10% (T sweeps only).
    pub error_nonincreasing: Option<bool>,
    pub table: BoundTable,
}

/// `T*` non-increasing along the sweep, allowing one grid step of slack.
pub fn tstar_trend(rows: &[(f64, f64)], dt: f64) -> bool {
    rows.windows(2).all(|w| w[1].1 <= w[0].1 + dt + 1e-12)
}

/// `E(T*)` non-increasing along the sweep up to a relative slack.
pub fn error_trend(errors: &[f64], slack: f64) -> bool {
    errors.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}

pub fn run_sweep(
    base: &RunConfig,
    axis: &Axis,
    dir: &Path,
    jobs: Option<usize>,
) -> CliResult<SweepSummary> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join("base_config.json"), base)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<(RunStatus, Option<BoundRun>)> = pool.install(|| {
        axis.values()
            .par_iter()
            .map(|&v| {
                let run_dir = dir.join(axis.label(v));
                let attempt = axis
                    .apply(base, v)
                    .and_then(|cfg| run_config(&cfg, &run_dir));
                match attempt {
                    Ok(out) => (
                        RunStatus {
                            value: v,
                            dir: run_dir,
                            ok: true,
                            error: None,
                        },
                        Some(BoundRun {
                            horizon: out.report.horizon,
                            bound: out.report.bound,
                            report: out.report,
                        }),
                    ),
                    Err(e) => (
                        RunStatus {
                            value: v,
                            dir: run_dir,
                            ok: false,
                            error: Some(e.to_string()),
                        },
                        None,
                    ),
                }
            })
            .collect()
    });

    let (runs, bound_runs): (Vec<RunStatus>, Vec<Option<BoundRun>>) = outcomes.into_iter().unzip();
    let bound_runs: Vec<BoundRun> = bound_runs.into_iter().flatten().collect();
    let table = finish(&runs, &bound_runs, dir)?;
    let dt = base.grid.horizon / base.grid.steps as f64;
    let summary = SweepSummary {
        axis: axis.clone(),
        tstar_nonincreasing: matches!(axis, Axis::M(_)).then(|| {
            tstar_trend(
                &bound_runs
                    .iter()
                    .map(|r| (r.bound, r.report.tstar))
                    .collect::<Vec<_>>(),
                dt,
            )
        }),
        error_nonincreasing: matches!(axis, Axis::T(_)).then(|| {
            error_trend(
                &bound_runs
                    .iter()
                    .map(|r| r.report.error_at_tstar)
                    .collect::<Vec<_>>(),
                0.1,
            )
        }),
        runs,
        table,
    };
    write_json(&dir.join("sweep.json"), &summary)?;
    Ok(summary)
}

/// Fits the bounds (when there are enough runs), writes `sweep.csv` and
/// `bounds.json`, and stores the fitted values in each run's `report.json`.
fn finish(runs: &[RunStatus], bound_runs: &[BoundRun], dir: &Path) -> CliResult<BoundTable> {
    let table = match check_theorem_bounds(bound_runs, DEFAULT_SLACK) {
        Ok(t) => t,
        Err(sparse_node::Error::InsufficientRuns(_)) => BoundTable {
            rows: bound_rows(bound_runs),
            slack: DEFAULT_SLACK,
            tstar_fit: None,
            error_fit: None,
        },
        Err(e) => return Err(e.into()),
    };
    table.write_csv(crate::run::create(&dir.join("sweep.csv"))?)?;
    write_json(&dir.join("bounds.json"), &table)?;
    for status in runs.iter().filter(|s| s.ok) {
        let path = status.dir.join("report.json");
        let mut report: sparse_node::SparsityReport = read_json(&path)?;
        attach_fit(&mut report, &table);
        write_json(&path, &report)?;
    }
    Ok(table)
}

/// Rebuilds the bound table of an existing sweep directory from its runs.
pub fn reanalyse_sweep(dir: &Path) -> CliResult<BoundTable> {
    crate::plot::require(dir, &["sweep.json"])?;
    let summary: SweepSummary = read_json(&dir.join("sweep.json"))?;
    let mut bound_runs = Vec::new();
    for status in summary.runs.iter().filter(|s| s.ok) {
        let report: sparse_node::SparsityReport = read_json(&status.dir.join("report.json"))?;
        bound_runs.push(BoundRun {
            horizon: report.horizon,
            bound: report.bound,
            report,
        });
    }
    finish(&summary.runs, &bound_runs, dir)
}
