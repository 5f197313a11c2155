//! Projected proximal Adam for
//! `min Σ ω_k E(x^k) + λ Σ dt‖u_k‖₁  s.t. ‖u_k‖₁ ≤ M`.
//!
//! Each iteration takes an Adam step on the smooth running cost, applies the
//! soft-threshold of the penalty, then projects every control point back onto
//! the ℓ1 ball so that iterates are always admissible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::value_and_grad;
use crate::dynamics::{l1_norm, DynamicsSpec};
use crate::error::{check_len, Error, Result};
use crate::integrator::{ControlTrajectory, Scheme, StateTrajectory, TimeGrid};
use crate::objective::{CostBreakdown, ObjectiveSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    Zeros,
    /// Uniform in `[-scale, scale]`; `scale` defaults to `0.1/√d_u`.
    UniformSmall {
        #[serde(default)]
        scale: Option<f64>,
    },
}

impl Default for Init {
    fn default() -> Self {
        Init::UniformSmall { scale: None }
    }
}

/// How the soft-threshold level is matched to the Adam step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxScaling {
    /// Per-coordinate `τ_i = lr·λ·dt / (√v̂_i + ε)`: the proximal step in the
    /// same diagonal metric Adam uses for the smooth part.
    #[default]
    Preconditioned,
    /// A single `τ = lr·λ·dt` for every coordinate.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iters: usize,
    pub seed: u64,
    pub init: Init,
    pub scheme: Scheme,
    pub prox: ProxScaling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            iters: 1000,
            seed: 0,
            init: Init::default(),
            scheme: Scheme::Euler,
            prox: ProxScaling::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if let Init::UniformSmall { scale: Some(s) } = self.init {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "init scale must be non-negative, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// First/second moment estimates and step count for one parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// `lr / (√v̂_i + ε)` at the current step count.
    pub fn step_scale(&self, cfg: &TrainConfig, out: &mut [f64]) {
        let bc2 = 1.0 - cfg.beta2.powi(self.t.max(1) as i32);
        for (o, &v) in out.iter_mut().zip(&self.v) {
            *o = cfg.lr / ((v / bc2).sqrt() + cfg.eps);
        }
    }
}

/// Standard bias-corrected Adam update of `u` along `-g`.
pub fn adam_step(u: &mut [f64], g: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((ui, &gi), mi), vi) in u.iter_mut().zip(g).zip(&mut state.m).zip(&mut state.v) {
        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *ui -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Soft-threshold `sign(v)·(|v| − τ)₊`.
pub fn prox_l1(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be non-negative, got {tau}"
        )));
    }
    Ok(v.iter().map(|&x| soft_threshold(x, tau)).collect())
}

#[inline]
fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Euclidean projection onto `{z : ‖z‖₁ ≤ M}`.
pub fn project_l1(v: &[f64], bound: f64) -> Result<Vec<f64>> {
    if !(bound > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ball radius must be positive, got {bound}"
        )));
    }
    let mut out = v.to_vec();
    project_l1_in_place(&mut out, bound);
    Ok(out)
}

pub(crate) fn project_l1_in_place(v: &mut [f64], bound: f64) {
    if l1_norm(v) <= bound {
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    // θ solves Σ(|v_i| − θ)₊ = M; scan the sorted magnitudes for the support.
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &a) in mags.iter().enumerate() {
        cumsum += a;
        let candidate = (cumsum - bound) / (j + 1) as f64;
        if a > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = soft_threshold(*x, theta);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iter: usize,
    #[serde(flatten)]
    pub cost: CostBreakdown,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub ctrl: ControlTrajectory,
    /// Cost of the iterate entering each iteration, plus the final iterate.
    pub history: Vec<HistoryEntry>,
    pub traj: StateTrajectory,
}

impl TrainResult {
    pub fn final_cost(&self) -> CostBreakdown {
        self.history.last().expect("history is never empty").cost
    }

    pub fn write_history_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iter", "J", "running", "penalty"])?;
        for h in &self.history {
            w.write_record([
                h.iter.to_string(),
                h.cost.total.to_string(),
                h.cost.running.to_string(),
                h.cost.penalty.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn initial_control(
    grid: TimeGrid,
    dim: usize,
    cfg: &TrainConfig,
    bound: f64,
) -> ControlTrajectory {
    match cfg.init {
        Init::Zeros => ControlTrajectory::zeros(grid, dim),
        Init::UniformSmall { scale } => {
            let s = scale.unwrap_or(0.1 / (dim as f64).sqrt());
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut ctrl = ControlTrajectory::zeros(grid, dim);
            for k in 0..grid.steps() {
                let p = ctrl.point_mut(k);
                if s > 0.0 {
                    for x in p.iter_mut() {
                        *x = rng.random_range(-s..=s);
                    }
                }
                project_l1_in_place(p, bound);
            }
            ctrl
        }
    }
}

pub fn train(
    spec: &DynamicsSpec,
    x0: &[f64],
    objective: &ObjectiveSpec,
    grid: TimeGrid,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    train_observed(spec, x0, objective, grid, cfg, |_, _| Ok(()))
}

/// [`train`] with a callback invoked after every update with the iteration
/// count and the new iterate.
pub fn train_observed<F>(
    spec: &DynamicsSpec,
    x0: &[f64],
    objective: &ObjectiveSpec,
    grid: TimeGrid,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<TrainResult>
where
    F: FnMut(usize, &ControlTrajectory) -> Result<()>,
{
    cfg.validate()?;
    check_len("initial state", spec.state_dim(), x0.len())?;
    let bound = objective.bound();
    let weight = objective.penalty_weight();
    let dim = spec.control_dim();
    let dt = grid.dt();

    let mut ctrl = initial_control(grid, dim, cfg, bound);
    let mut adam = vec![AdamState::new(dim); grid.steps()];
    let mut history = Vec::with_capacity(cfg.iters + 1);
    let mut scale = vec![0.0; dim];

    for iter in 0..=cfg.iters {
        let (traj, running, grad) = value_and_grad(spec, x0, &ctrl, objective, cfg.scheme)
            .map_err(|e| Error::TrainingDiverged {
                iteration: iter,
                source: Box::new(e),
            })?;
        let penalty = weight * ctrl.control_cost();
        history.push(HistoryEntry {
            iter,
            cost: CostBreakdown {
                total: running + penalty,
                running,
                penalty,
            },
        });
        if iter == cfg.iters {
            return Ok(TrainResult {
                ctrl,
                history,
                traj,
            });
        }
        for (k, state) in adam.iter_mut().enumerate() {
            let u = ctrl.point_mut(k);
            adam_step(u, &grad.points[k], state, cfg);
            match cfg.prox {
                ProxScaling::Preconditioned => {
                    state.step_scale(cfg, &mut scale);
                    for (x, s) in u.iter_mut().zip(&scale) {
                        *x = soft_threshold(*x, s * weight * dt);
                    }
                }
                ProxScaling::Uniform => {
                    let tau = cfg.lr * weight * dt;
                    for x in u.iter_mut() {
                        *x = soft_threshold(*x, tau);
                    }
                }
            }
            project_l1_in_place(u, bound);
        }
        observer(iter + 1, &ctrl)?;
    }
    unreachable!("loop returns on the final iteration")
}
