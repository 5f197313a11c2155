//! `train`: one run from a config into a self-describing directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_node::analysis::{
    detect_tstar, sparsity_report, turnpike_check, zero_tail_check, SparsityReport, TurnpikeReport,
    ZeroTailCheck,
};
use sparse_node::objective::margin;
use sparse_node::optimizer::train_observed;
use sparse_node::{Form, Labels, TrainResult};

use crate::config::{Problem, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: Option<String>,
    #[serde(rename = "J")]
    pub total: f64,
    pub running: f64,
    pub penalty: f64,
    #[serde(rename = "Tstar")]
    pub tstar: f64,
    pub idx: usize,
    pub at_boundary: bool,
    #[serde(rename = "E_at_Tstar")]
    pub error_at_tstar: f64,
    #[serde(rename = "E_final")]
    pub error_final: f64,
    pub iters: usize,
    pub intermediate_fraction: f64,
    pub zero_tail: ZeroTailCheck,
    /// Classification margin of the state at `T*` (two or more classes only).
    pub margin_at_tstar: Option<f64>,
    pub turnpike: Option<TurnpikeReport>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: SparsityReport,
    pub summary: Summary,
    pub result: TrainResult,
}

pub(crate) fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Trains the resolved config and writes every artifact into `dir`.
pub fn run_config(cfg: &RunConfig, dir: &Path) -> CliResult<RunOutcome> {
    let problem = cfg.build()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join("config.json"), cfg)?;
    problem
        .dataset
        .write_csv(create(&dir.join("dataset.csv"))?)?;
    write_json(
        &dir.join("dataset.json"),
        &problem
            .dataset
            .meta(cfg.dataset_seed(), cfg.dataset_generator()),
    )?;

    let checkpoint_dir = dir.join("checkpoints");
    let every = cfg.checkpoint_every.filter(|&n| n > 0);
    if every.is_some() {
        std::fs::create_dir_all(&checkpoint_dir).map_err(|e| CliError::io(&checkpoint_dir, e))?;
    }
    let result = train_observed(
        &problem.dynamics,
        &problem.x0,
        &problem.objective,
        problem.grid,
        &cfg.train,
        |iter, ctrl| {
            if let Some(n) = every {
                if iter % n == 0 {
                    let path = checkpoint_dir.join(format!("controls_{iter:06}.json"));
                    serde_json::to_writer(File::create(&path).map(BufWriter::new)?, ctrl)?;
                }
            }
            Ok(())
        },
    )
    .map_err(CliError::Core)?;

    let (report, summary) = analyse(cfg, &problem, &result)?;
    write_outputs(dir, &problem, &result, &report, &summary)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        report,
        summary,
        result,
    })
}

pub(crate) fn analyse(
    cfg: &RunConfig,
    problem: &Problem,
    result: &TrainResult,
) -> CliResult<(SparsityReport, Summary)> {
    let obj = &problem.objective;
    let report = sparsity_report(
        &result.traj,
        &result.ctrl,
        obj,
        cfg.analysis.eps_sat,
        cfg.analysis.eps_zero,
    )?;
    let zero_tail = zero_tail_check(
        &problem.dynamics,
        &problem.x0,
        &result.ctrl,
        obj,
        cfg.train.scheme,
    )?;
    let ts = detect_tstar(&result.traj, obj);
    let margin_at_tstar = match obj.labels() {
        Labels::Classes(classes) if obj.output().m() >= 2 => {
            Some(margin(&result.traj.states[ts.idx], obj.output(), classes)?)
        }
        _ => None,
    };
    let turnpike = match (&cfg.turnpike, problem.dynamics.form()) {
        (Some(tp), Form::DriftlessAffine) => {
            let target = match (&tp.target, obj.labels()) {
                (Some(t), _) => t.clone(),
                (None, Labels::Targets(t)) => t.iter().flatten().copied().collect(),
                (None, Labels::Classes(_)) => {
                    return Err(CliError::Config(
                        "turnpike.target is required for classification data".into(),
                    ))
                }
            };
            Some(turnpike_check(
                &problem.dynamics,
                &target,
                tp.p,
                obj,
                result,
            )?)
        }
        (Some(_), form) => {
            return Err(CliError::Config(format!(
                "turnpike diagnostics need the driftless form, got {form:?}"
            )))
        }
        (None, _) => None,
    };
    let cost = result.final_cost();
    let summary = Summary {
        name: cfg.name.clone(),
        total: cost.total,
        running: cost.running,
        penalty: cost.penalty,
        tstar: report.tstar,
        idx: report.idx,
        at_boundary: report.at_boundary,
        error_at_tstar: report.error_at_tstar,
        error_final: sparse_node::empirical_error(result.traj.final_state(), obj),
        iters: cfg.train.iters,
        intermediate_fraction: report.intermediate_fraction(),
        zero_tail,
        margin_at_tstar,
        turnpike,
    };
    Ok((report, summary))
}

fn write_outputs(
    dir: &Path,
    problem: &Problem,
    result: &TrainResult,
    report: &SparsityReport,
    summary: &Summary,
) -> CliResult<()> {
    result.write_history_csv(create(&dir.join("history.csv"))?)?;
    result.ctrl.write_csv(create(&dir.join("controls.csv"))?)?;
    result
        .traj
        .write_csv(create(&dir.join("trajectory.csv"))?)?;

    let errors = problem.objective.errors_along(&result.traj);
    let norms = result.ctrl.l1_norms();
    let mut w = csv::Writer::from_writer(create(&dir.join("metrics.csv"))?);
    w.write_record(["t", "E", "u_l1"])?;
    for (k, e) in errors.iter().enumerate() {
        let u = norms.get(k).map(f64::to_string).unwrap_or_default();
        w.write_record([problem.grid.time(k).to_string(), e.to_string(), u])?;
    }
    w.flush()
        .map_err(|e| CliError::io(&dir.join("metrics.csv"), e))?;

    write_json(&dir.join("report.json"), report)?;
    write_json(&dir.join("summary.json"), summary)
}

/// Recomputes the analysis of an existing run directory from `config.json`,
/// `dataset.csv` and `controls.csv` alone.
pub fn reanalyse(dir: &Path) -> CliResult<(SparsityReport, Summary)> {
    crate::plot::require(dir, &["config.json", "dataset.csv", "controls.csv"])?;
    let mut cfg: RunConfig = read_json(&dir.join("config.json"))?;
    let kind = match &cfg.dataset.source {
        crate::config::DatasetSource::Points { kind, .. }
        | crate::config::DatasetSource::File { kind, .. } => *kind,
        _ => read_json::<sparse_node::datagen::DatasetMeta>(&dir.join("dataset.json"))?.kind,
    };
    // The written dataset already carries any augmentation.
    cfg.dataset = crate::config::DatasetConfig {
        source: crate::config::DatasetSource::File {
            path: dir.join("dataset.csv"),
            kind,
        },
        augment: 0,
    };
    let problem = cfg.build()?;
    let file = File::open(dir.join("controls.csv"))
        .map_err(|e| CliError::io(&dir.join("controls.csv"), e))?;
    let ctrl = sparse_node::ControlTrajectory::read_csv(file, problem.grid)?;
    let traj = sparse_node::integrate(&problem.dynamics, &problem.x0, &ctrl, cfg.train.scheme)?;
    let cost = sparse_node::functional(&traj, &ctrl, &problem.objective)?;
    let result = TrainResult {
        ctrl,
        history: vec![sparse_node::optimizer::HistoryEntry {
            iter: cfg.train.iters,
            cost,
        }],
        traj,
    };
    analyse(&cfg, &problem, &result)
}
