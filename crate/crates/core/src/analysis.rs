//! Post-training diagnostics: stopping time, saturation pattern, bound fits,
//! the interval-compression improvement and turnpike deviations.

use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsSpec, Form};
use crate::error::{check_len, Error, Result};
use crate::integrator::{integrate, ControlTrajectory, Scheme, StateTrajectory, TimeGrid};
use crate::objective::{functional, ObjectiveSpec};
use crate::optimizer::TrainResult;

pub const DEFAULT_EPS_SAT: f64 = 0.05;
pub const DEFAULT_EPS_ZERO: f64 = 1e-3;
/// Largest refinement factor [`improve_control`] will build.
pub const MAX_REFINE: usize = 1000;

/// First node at which the error reaches its minimum over the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TStar {
    pub time: f64,
    pub idx: usize,
    pub error: f64,
    /// Set when the minimum is attained at `t = 0`.
    pub at_boundary: bool,
}

pub fn detect_tstar(traj: &StateTrajectory, objective: &ObjectiveSpec) -> TStar {
    tstar_from_errors(&objective.errors_along(traj), traj.grid)
}

/// Ties go to the smallest index.
pub fn tstar_from_errors(errors: &[f64], grid: TimeGrid) -> TStar {
    let mut idx = 0;
    for (k, &e) in errors.iter().enumerate() {
        if e < errors[idx] {
            idx = k;
        }
    }
    TStar {
        time: grid.time(idx),
        idx,
        error: errors[idx],
        at_boundary: idx == 0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepClass {
    Saturated,
    Zero,
    Intermediate,
}

pub fn saturation_profile(
    ctrl: &ControlTrajectory,
    bound: f64,
    eps_sat: f64,
    eps_zero: f64,
) -> Result<Vec<StepClass>> {
    if !(eps_sat > 0.0) || !(eps_zero > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "saturation thresholds must be positive, got eps_sat = {eps_sat}, eps_zero = {eps_zero}"
        )));
    }
    if !(bound > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "constraint level must be positive, got {bound}"
        )));
    }
    Ok(ctrl
        .l1_norms()
        .into_iter()
        .map(|norm| {
            if norm >= (1.0 - eps_sat) * bound {
                StepClass::Saturated
            } else if norm <= eps_zero * bound {
                StepClass::Zero
            } else {
                StepClass::Intermediate
            }
        })
        .collect())
}

/// Normalised bound ratios of a single run; `bound_*` are filled in once a
/// constant has been fitted across a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    /// `T* / (1/M + 1/M²)`.
    pub tstar_ratio: f64,
    /// `E(T*)·T / (1/M + 1)`.
    pub error_ratio: f64,
    #[serde(rename = "bound_Tstar")]
    pub bound_tstar: Option<f64>,
    #[serde(rename = "bound_E")]
    pub bound_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    #[serde(rename = "Tstar")]
    pub tstar: f64,
    pub idx: usize,
    pub at_boundary: bool,
    #[serde(rename = "E_at_Tstar")]
    pub error_at_tstar: f64,
    /// Fraction of the steps before `T*` classified saturated (1 when empty).
    pub frac_saturated_before: f64,
    /// Fraction of the steps from `T*` on classified zero (1 when empty).
    pub frac_zero_after: f64,
    pub intermediate_steps: Vec<usize>,
    pub sat_mask: Vec<StepClass>,
    pub horizon: f64,
    pub bound: f64,
    pub bounds: BoundEntry,
}

impl SparsityReport {
    pub fn intermediate_fraction(&self) -> f64 {
        self.intermediate_steps.len() as f64 / self.sat_mask.len() as f64
    }
}

pub fn tstar_scale(bound: f64) -> f64 {
    1.0 / bound + 1.0 / (bound * bound)
}

pub fn error_scale(horizon: f64, bound: f64) -> f64 {
    (1.0 / bound + 1.0) / horizon
}

pub fn sparsity_report(
    traj: &StateTrajectory,
    ctrl: &ControlTrajectory,
    objective: &ObjectiveSpec,
    eps_sat: f64,
    eps_zero: f64,
) -> Result<SparsityReport> {
    if !traj.grid.same_as(&ctrl.grid()) {
        return Err(Error::GridMismatch(format!(
            "state grid {:?} vs control grid {:?}",
            traj.grid,
            ctrl.grid()
        )));
    }
    let bound = objective.bound();
    let ts = detect_tstar(traj, objective);
    let mask = saturation_profile(ctrl, bound, eps_sat, eps_zero)?;
    let fraction = |range: &[StepClass], class: StepClass| {
        if range.is_empty() {
            1.0
        } else {
            range.iter().filter(|&&c| c == class).count() as f64 / range.len() as f64
        }
    };
    let horizon = traj.grid.horizon();
    Ok(SparsityReport {
        tstar: ts.time,
        idx: ts.idx,
        at_boundary: ts.at_boundary,
        error_at_tstar: ts.error,
        frac_saturated_before: fraction(&mask[..ts.idx], StepClass::Saturated),
        frac_zero_after: fraction(&mask[ts.idx..], StepClass::Zero),
        intermediate_steps: mask
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == StepClass::Intermediate)
            .map(|(k, _)| k)
            .collect(),
        bounds: BoundEntry {
            tstar_ratio: ts.time / tstar_scale(bound),
            error_ratio: ts.error / error_scale(horizon, bound),
            bound_tstar: None,
            bound_error: None,
        },
        sat_mask: mask,
        horizon,
        bound,
    })
}

/// Copy of `ctrl` with every step from `idx` on set to zero.
pub fn zero_after(ctrl: &ControlTrajectory, idx: usize) -> ControlTrajectory {
    let mut out = ctrl.clone();
    for k in idx.min(ctrl.steps())..ctrl.steps() {
        out.point_mut(k).fill(0.0);
    }
    out
}

/// Discretisation slack `5·dt·(max E − min E)` used by the executable
/// optimality certificates.
pub fn quadrature_tolerance(errors: &[f64], dt: f64) -> f64 {
    let max = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    5.0 * dt * (max - min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroTailCheck {
    pub idx: usize,
    pub j_before: f64,
    pub j_after: f64,
    pub tol_quad: f64,
}

impl ZeroTailCheck {
    pub fn holds(&self) -> bool {
        self.j_after <= self.j_before + self.tol_quad
    }
}

/// Compares `J` before and after switching the control off from `T*`.
pub fn zero_tail_check(
    spec: &DynamicsSpec,
    x0: &[f64],
    ctrl: &ControlTrajectory,
    objective: &ObjectiveSpec,
    scheme: Scheme,
) -> Result<ZeroTailCheck> {
    let traj = integrate(spec, x0, ctrl, scheme)?;
    let errors = objective.errors_along(&traj);
    let ts = tstar_from_errors(&errors, traj.grid);
    let zeroed = zero_after(ctrl, ts.idx);
    let after = integrate(spec, x0, &zeroed, scheme)?;
    Ok(ZeroTailCheck {
        idx: ts.idx,
        j_before: functional(&traj, ctrl, objective)?.total,
        j_after: functional(&after, &zeroed, objective)?.total,
        tol_quad: quadrature_tolerance(&errors, traj.grid.dt()),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Improvement {
    /// `ū` on the grid refined by `refine`.
    pub ctrl: ControlTrajectory,
    pub refine: usize,
    pub predicted_decrease: f64,
    /// `J(u)` evaluated on the refined grid.
    pub j_before: f64,
    pub j_after: f64,
    pub tol_quad: f64,
}

impl Improvement {
    pub fn certified(&self) -> bool {
        self.j_after <= self.j_before - self.predicted_decrease + self.tol_quad
    }
}

/// Smallest `q ≤ MAX_REFINE` with `(1 − θ)·q` an integer.
fn compression_ratio(theta: f64) -> Result<(usize, usize)> {
    let keep = 1.0 - theta;
    for q in 1..=MAX_REFINE {
        let p = (keep * q as f64).round();
        if (p / q as f64 - keep).abs() <= 1e-12 {
            return Ok((p as usize, q));
        }
    }
    Err(Error::InvalidArgument(format!(
        "1 − θ = {keep} has no denominator up to {MAX_REFINE}"
    )))
}

fn node_index(grid: TimeGrid, t: f64, name: &str) -> Result<usize> {
    let dt = grid.dt();
    let k = (t / dt).round();
    if (t - k * dt).abs() > 1e-9 * dt.max(1.0) || k < 0.0 || k as usize > grid.steps() {
        return Err(Error::InvalidArgument(format!(
            "interval endpoint {name} = {t} is not a node of the grid (dt = {dt})"
        )));
    }
    Ok(k as usize)
}

/// Compresses `[a, b)` by the factor `1 − θ`, shifts the remainder left by
/// `τ = θ(b − a)` and switches the control off from `T* − τ`.
///
/// The result lives on the grid refined by the denominator of `1 − θ`, where
/// all of these maps send cells to cells.
pub fn improve_control(
    spec: &DynamicsSpec,
    x0: &[f64],
    ctrl: &ControlTrajectory,
    objective: &ObjectiveSpec,
    scheme: Scheme,
    interval: (f64, f64),
    theta: f64,
) -> Result<Improvement> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "θ must lie in [0, 1), got {theta}"
        )));
    }
    let grid = ctrl.grid();
    let (a, b) = interval;
    let ia = node_index(grid, a, "a")?;
    let ib = node_index(grid, b, "b")?;
    if ia >= ib {
        return Err(Error::InvalidArgument(format!("empty interval [{a}, {b})")));
    }

    let traj = integrate(spec, x0, ctrl, scheme)?;
    let errors = objective.errors_along(&traj);
    let ts = tstar_from_errors(&errors, grid);
    if ib > ts.idx {
        return Err(Error::Precondition(format!(
            "interval must end by T* = {}, got b = {b}",
            ts.time
        )));
    }
    let bound = objective.bound();
    for k in ia..ib {
        let norm = crate::dynamics::l1_norm(ctrl.point(k));
        if norm > (1.0 - theta) * bound + 1e-9 {
            return Err(Error::Precondition(format!(
                "control level: ‖u‖₁ = {norm} at step {k} exceeds (1 − θ)M = {}",
                (1.0 - theta) * bound
            )));
        }
    }
    for (k, &e) in errors.iter().enumerate().take(ib + 1).skip(ia) {
        if e - ts.error < theta {
            return Err(Error::Precondition(format!(
                "error gap: E − E(T*) = {} at node {k} is below θ = {theta}",
                e - ts.error
            )));
        }
    }

    let (p, q) = compression_ratio(theta)?;
    let len = ib - ia;
    let shift = len * (q - p);
    let fine_grid = TimeGrid::new(grid.horizon(), grid.steps() * q)?;
    let dim = ctrl.dim();
    let scale = q as f64 / p as f64;
    let compressed_end = ia * q + len * p;
    let tail_start = ts.idx * q - shift;

    let mut refined = Vec::with_capacity(fine_grid.steps());
    let mut improved = Vec::with_capacity(fine_grid.steps());
    for j in 0..fine_grid.steps() {
        refined.push(ctrl.point(j / q).to_vec());
        let point = if j < ia * q {
            ctrl.point(j / q).to_vec()
        } else if j < compressed_end {
            // Fine cell j of [a, c) pulls back to a cell of length dt/p
            // inside coarse step ia + (j − ia·q)/p.
            let k = ia + (j - ia * q) / p;
            ctrl.point(k).iter().map(|v| v * scale).collect()
        } else if j < tail_start {
            ctrl.point((j + shift) / q).to_vec()
        } else {
            vec![0.0; dim]
        };
        improved.push(point);
    }
    let refined = ControlTrajectory::new(fine_grid, refined)?;
    let improved = ControlTrajectory::new(fine_grid, improved)?;

    let before = integrate(spec, x0, &refined, scheme)?;
    let after = integrate(spec, x0, &improved, scheme)?;
    let tau = theta * (b - a);
    Ok(Improvement {
        j_before: functional(&before, &refined, objective)?.total,
        j_after: functional(&after, &improved, objective)?.total,
        ctrl: improved,
        refine: q,
        predicted_decrease: theta * tau,
        tol_quad: quadrature_tolerance(&errors, grid.dt()),
    })
}

/// One run of a `(T, M)` sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRun {
    pub horizon: f64,
    pub bound: f64,
    pub report: SparsityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub bound: f64,
    #[serde(rename = "Tstar")]
    pub tstar: f64,
    #[serde(rename = "E_at_Tstar")]
    pub error_at_tstar: f64,
    #[serde(rename = "product_ET")]
    pub product_et: f64,
    pub tstar_ratio: f64,
    pub error_ratio: f64,
    pub at_boundary: bool,
}

/// Smallest constant covering every run (the largest ratio), and the spread
/// `max/min` between the loosest and tightest run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    pub constant: f64,
    pub spread: f64,
    pub within_slack: bool,
    pub runs_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub rows: Vec<BoundRow>,
    pub slack: f64,
    #[serde(rename = "Tstar_fit")]
    pub tstar_fit: Option<BoundFit>,
    #[serde(rename = "E_fit")]
    pub error_fit: Option<BoundFit>,
}

impl BoundTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["T", "M", "Tstar", "E_at_Tstar", "product_ET"])?;
        for r in &self.rows {
            w.write_record([
                r.horizon.to_string(),
                r.bound.to_string(),
                r.tstar.to_string(),
                r.error_at_tstar.to_string(),
                r.product_et.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fit(ratios: impl Iterator<Item = f64>, slack: f64) -> Option<BoundFit> {
    let used: Vec<f64> = ratios.filter(|r| *r > 0.0 && r.is_finite()).collect();
    if used.is_empty() {
        return None;
    }
    let min = used.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = used.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = max / min;
    Some(BoundFit {
        constant: max,
        spread,
        within_slack: spread <= slack,
        runs_used: used.len(),
    })
}

/// Fits the constants of `T* ≤ c(1/M + 1/M²)` and `E(T*) ≤ c/T·(1/M + 1)`
/// over a sweep; `within_slack` says whether a single constant fitted on any
/// run would cover the others up to the factor `slack`. Runs whose `T*` sits
/// at `t = 0` are kept in the table but left out of the `T*` fit.
pub fn check_theorem_bounds(runs: &[BoundRun], slack: f64) -> Result<BoundTable> {
    if runs.len() < 2 {
        return Err(Error::InsufficientRuns(format!(
            "a bound fit needs at least two runs, got {}",
            runs.len()
        )));
    }
    if !(slack >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "slack factor must be at least 1, got {slack}"
        )));
    }
    let rows = bound_rows(runs);
    let tstar_fit = fit(
        rows.iter()
            .filter(|r| !r.at_boundary)
            .map(|r| r.tstar_ratio),
        slack,
    );
    let error_fit = fit(rows.iter().map(|r| r.error_ratio), slack);
    Ok(BoundTable {
        rows,
        slack,
        tstar_fit,
        error_fit,
    })
}

/// Table rows without any fit, e.g. for a single run.
pub fn bound_rows(runs: &[BoundRun]) -> Vec<BoundRow> {
    runs.iter()
        .map(|r| BoundRow {
            horizon: r.horizon,
            bound: r.bound,
            tstar: r.report.tstar,
            error_at_tstar: r.report.error_at_tstar,
            product_et: r.report.error_at_tstar * r.horizon,
            tstar_ratio: r.report.tstar / tstar_scale(r.bound),
            error_ratio: r.report.error_at_tstar / error_scale(r.horizon, r.bound),
            at_boundary: r.report.at_boundary,
        })
        .collect()
}

/// Fills the fitted bound values into a report.
pub fn attach_fit(report: &mut SparsityReport, table: &BoundTable) {
    report.bounds.bound_tstar = table
        .tstar_fit
        .map(|f| f.constant * tstar_scale(report.bound));
    report.bounds.bound_error = table
        .error_fit
        .map(|f| f.constant * error_scale(report.horizon, report.bound));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnpikeReport {
    #[serde(rename = "Tstar")]
    pub tstar: f64,
    pub idx: usize,
    pub at_boundary: bool,
    /// `max_{t ≥ T*} ‖x(t) − x̄‖_p^p` over grid nodes.
    pub max_state_deviation_after_tstar: f64,
    #[serde(rename = "CT_product")]
    pub ct_product: f64,
    /// No step classified intermediate.
    pub bang_bang: bool,
    pub saturated_then_zero: bool,
    pub sat_mask: Vec<StepClass>,
}

pub fn state_deviation(x: &[f64], target: &[f64], p: u32) -> f64 {
    x.iter()
        .zip(target)
        .map(|(a, b)| (a - b).abs().powi(p as i32))
        .sum()
}

pub fn turnpike_check(
    spec: &DynamicsSpec,
    target: &[f64],
    p: u32,
    objective: &ObjectiveSpec,
    run: &TrainResult,
) -> Result<TurnpikeReport> {
    if spec.form() != Form::DriftlessAffine {
        return Err(Error::InvalidArgument(format!(
            "turnpike diagnostics need a driftless system, got {:?}",
            spec.form()
        )));
    }
    if p != 1 && p != 2 {
        return Err(Error::InvalidArgument(format!("p must be 1 or 2, got {p}")));
    }
    check_len("turnpike target", spec.state_dim(), target.len())?;
    let ts = detect_tstar(&run.traj, objective);
    let mask = saturation_profile(
        &run.ctrl,
        objective.bound(),
        DEFAULT_EPS_SAT,
        DEFAULT_EPS_ZERO,
    )?;
    let deviation = run.traj.states[ts.idx..]
        .iter()
        .map(|x| state_deviation(x, target, p))
        .fold(0.0, f64::max);
    let saturated_then_zero = mask[..ts.idx].iter().all(|&c| c == StepClass::Saturated)
        && mask[ts.idx..].iter().all(|&c| c == StepClass::Zero);
    Ok(TurnpikeReport {
        tstar: ts.time,
        idx: ts.idx,
        at_boundary: ts.at_boundary,
        max_state_deviation_after_tstar: deviation,
        ct_product: deviation * run.traj.grid.horizon(),
        bang_bang: !mask.contains(&StepClass::Intermediate),
        saturated_then_zero,
        sat_mask: mask,
    })
}
