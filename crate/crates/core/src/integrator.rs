//! Uniform-grid time stepping for the stacked system with piecewise-constant
//! controls (one control point per step, i.e. one ResNet layer per step).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{l1_norm, DynamicsSpec};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "a time grid needs at least one step".into(),
            ));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time of node `k`, `0 ≤ k ≤ steps`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps && (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Euler,
    Midpoint,
}

/// Piecewise-constant control: `points[k]` acts on `[t_k, t_{k+1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlTrajectory {
    grid: TimeGrid,
    points: Vec<Vec<f64>>,
}

impl ControlTrajectory {
    pub fn new(grid: TimeGrid, points: Vec<Vec<f64>>) -> Result<Self> {
        check_len("control steps", grid.steps(), points.len())?;
        let dim = points[0].len();
        for p in &points {
            check_len("control point", dim, p.len())?;
        }
        Ok(ControlTrajectory { grid, points })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        ControlTrajectory {
            grid,
            points: vec![vec![0.0; dim]; grid.steps()],
        }
    }

    pub fn constant(grid: TimeGrid, point: &[f64]) -> Self {
        ControlTrajectory {
            grid,
            points: vec![point.to_vec(); grid.steps()],
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn steps(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn point_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.points[k]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn l1_norms(&self) -> Vec<f64> {
        self.points.iter().map(|p| l1_norm(p)).collect()
    }

    /// `Σ_k dt·‖u_k‖₁`.
    pub fn control_cost(&self) -> f64 {
        let dt = self.grid.dt();
        self.points.iter().map(|p| dt * l1_norm(p)).sum()
    }

    /// `‖u_k‖₁ ≤ M + 1e-9` for every step.
    pub fn is_admissible(&self, bound: f64) -> bool {
        self.points.iter().all(|p| l1_norm(p) <= bound + 1e-9)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|j| format!("u_{j}")));
        w.write_record(&header)?;
        for (k, p) in self.points.iter().enumerate() {
            let mut row = vec![self.grid.time(k).to_string()];
            row.extend(p.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a controls CSV written by [`ControlTrajectory::write_csv`].
    pub fn read_csv<R: Read>(reader: R, grid: TimeGrid) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut points = Vec::new();
        for record in r.records() {
            let record = record?;
            let values = record
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>().map_err(|e| {
                        Error::InvalidArgument(format!("bad control entry {s:?}: {e}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            points.push(values);
        }
        if points.is_empty() {
            return Err(Error::InvalidArgument("controls CSV has no rows".into()));
        }
        ControlTrajectory::new(grid, points)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub grid: TimeGrid,
    pub scheme: Scheme,
    /// `steps + 1` stacked states; `states[0]` is the initial datum.
    pub states: Vec<Vec<f64>>,
}

impl StateTrajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least one node")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.states[0].len()).map(|j| format!("x_{j}")));
        w.write_record(&header)?;
        for (k, s) in self.states.iter().enumerate() {
            let mut row = vec![self.grid.time(k).to_string()];
            row.extend(s.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One step of the scheme, written into `next`. `work` must hold `2·d_x`
/// scratch entries.
pub(crate) fn step_into(
    spec: &DynamicsSpec,
    scheme: Scheme,
    x: &[f64],
    u: &[f64],
    dt: f64,
    next: &mut [f64],
    work: &mut [f64],
) {
    let (k1, rest) = work.split_at_mut(x.len());
    spec.field_into(x, u, k1);
    match scheme {
        Scheme::Euler => {
            for ((n, &xv), &f) in next.iter_mut().zip(x).zip(k1.iter()) {
                *n = xv + dt * f;
            }
        }
        Scheme::Midpoint => {
            let half = 0.5 * dt;
            for ((y, &xv), &f) in next.iter_mut().zip(x).zip(k1.iter()) {
                *y = xv + half * f;
            }
            let k2 = &mut rest[..x.len()];
            spec.field_into(next, u, k2);
            for ((n, &xv), &f) in next.iter_mut().zip(x).zip(k2.iter()) {
                *n = xv + dt * f;
            }
        }
    }
}

pub fn integrate(
    spec: &DynamicsSpec,
    x0: &[f64],
    ctrl: &ControlTrajectory,
    scheme: Scheme,
) -> Result<StateTrajectory> {
    check_len("initial state", spec.state_dim(), x0.len())?;
    check_len("control point", spec.control_dim(), ctrl.dim())?;
    let grid = ctrl.grid();
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.steps() + 1);
    states.push(x0.to_vec());
    let mut work = vec![0.0; 2 * x0.len()];
    for k in 0..grid.steps() {
        let mut next = vec![0.0; x0.len()];
        step_into(
            spec,
            scheme,
            &states[k],
            ctrl.point(k),
            dt,
            &mut next,
            &mut work,
        );
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k + 1 });
        }
        states.push(next);
    }
    Ok(StateTrajectory {
        grid,
        scheme,
        states,
    })
}

/// Time-rescales a control from `[0, T0]` to `[0, T]`: same number of steps,
/// `u'_k = (T0/T)·u_k`, so that `dt'·u'_k = dt·u_k` step by step.
pub fn rescale_control(ctrl: &ControlTrajectory, horizon: f64) -> Result<ControlTrajectory> {
    let grid = TimeGrid::new(horizon, ctrl.steps())?;
    let factor = ctrl.grid().horizon() / horizon;
    let points = ctrl
        .points()
        .iter()
        .map(|p| p.iter().map(|v| factor * v).collect())
        .collect();
    ControlTrajectory::new(grid, points)
}

/// Extends a control by zeros up to `horizon`, keeping the step size.
pub fn zero_extend(ctrl: &ControlTrajectory, horizon: f64) -> Result<ControlTrajectory> {
    let old = ctrl.grid();
    if horizon < old.horizon() {
        return Err(Error::InvalidArgument(format!(
            "zero extension needs T ≥ {}, got {horizon}",
            old.horizon()
        )));
    }
    let dt = old.dt();
    let ratio = horizon / dt;
    let steps = ratio.round() as usize;
    if (steps as f64 * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::Misaligned {
            horizon,
            dt,
            suggested_steps: ratio.ceil() as usize,
        });
    }
    let grid = TimeGrid::new(horizon, steps)?;
    let mut points = ctrl.points().to_vec();
    points.resize(steps, vec![0.0; ctrl.dim()]);
    ControlTrajectory::new(grid, points)
}
