//! Reverse-mode differentiation of the discrete running cost through the
//! time-stepping scheme, plus a central-difference oracle.
//!
//! Only the smooth part `Σ_k ω_k E(x^k)` is differentiated; the L1 penalty is
//! left to the optimizer's proximal step.

use std::io::Write;

use crate::dynamics::DynamicsSpec;
use crate::error::{check_len, Error, Result};
use crate::integrator::{integrate, ControlTrajectory, Scheme, StateTrajectory, TimeGrid};
use crate::objective::{empirical_error, running_cost, ObjectiveSpec};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Per-step gradient with the same shape as a [`ControlTrajectory`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub points: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros(steps: usize, dim: usize) -> Self {
        Gradient {
            points: vec![vec![0.0; dim]; steps],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.points
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.points.iter().flatten()
    }

    pub fn step_norms(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Debug dump: one row per step with the gradient's 2-norm and max-norm.
    pub fn write_norms_csv<W: Write>(&self, grid: TimeGrid, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "grad_l2", "grad_linf"])?;
        for (k, p) in self.points.iter().enumerate() {
            let l2 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let linf = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            w.write_record([grid.time(k).to_string(), l2.to_string(), linf.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_problem(
    spec: &DynamicsSpec,
    ctrl: &ControlTrajectory,
    objective: &ObjectiveSpec,
) -> Result<()> {
    check_len("objective state", spec.state_dim(), objective.state_dim())?;
    check_len("control point", spec.control_dim(), ctrl.dim())
}

/// Forward pass, discrete running cost and its exact gradient.
pub fn value_and_grad(
    spec: &DynamicsSpec,
    x0: &[f64],
    ctrl: &ControlTrajectory,
    objective: &ObjectiveSpec,
    scheme: Scheme,
) -> Result<(StateTrajectory, f64, Gradient)> {
    check_problem(spec, ctrl, objective)?;
    let traj = integrate(spec, x0, ctrl, scheme)?;
    let grid = ctrl.grid();
    let dt = grid.dt();
    let weights = objective.quadrature().node_weights(grid);
    let errors: Vec<f64> = traj
        .states
        .iter()
        .map(|s| empirical_error(s, objective))
        .collect();
    let running = running_cost(&errors, grid, objective.quadrature());

    let dx = x0.len();
    let steps = grid.steps();
    let mut grad = Gradient::zeros(steps, ctrl.dim());
    let mut lam = vec![0.0; dx];
    objective.error_grad_into(&traj.states[steps], weights[steps], &mut lam);

    let mut stage = vec![0.0; dx];
    let mut mu = vec![0.0; dx];
    for k in (0..steps).rev() {
        let x = &traj.states[k];
        let u = ctrl.point(k);
        let gk = &mut grad.points[k];
        // lam_prev starts as the identity part of the step Jacobian.
        let mut lam_prev = lam.clone();
        match scheme {
            Scheme::Euler => spec.pullback(x, u, &lam, dt, &mut lam_prev, gk),
            Scheme::Midpoint => {
                spec.field_into(x, u, &mut stage);
                for (s, &xv) in stage.iter_mut().zip(x) {
                    *s = xv + 0.5 * dt * *s;
                }
                mu.iter_mut().for_each(|m| *m = 0.0);
                spec.pullback(&stage, u, &lam, dt, &mut mu, gk);
                for (l, m) in lam_prev.iter_mut().zip(&mu) {
                    *l += m;
                }
                spec.pullback(x, u, &mu, 0.5 * dt, &mut lam_prev, gk);
            }
        }
        objective.error_grad_into(x, weights[k], &mut lam_prev);
        if lam_prev.iter().chain(gk.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        lam = lam_prev;
    }
    Ok((traj, running, grad))
}

/// Exact gradient of the discrete running cost w.r.t. every control point.
pub fn grad_running(
    spec: &DynamicsSpec,
    x0: &[f64],
    ctrl: &ControlTrajectory,
    objective: &ObjectiveSpec,
    scheme: Scheme,
) -> Result<Gradient> {
    value_and_grad(spec, x0, ctrl, objective, scheme).map(|(_, _, g)| g)
}

/// Discrete running cost of a control.
pub fn running_value(
    spec: &DynamicsSpec,
    x0: &[f64],
    ctrl: &ControlTrajectory,
    objective: &ObjectiveSpec,
    scheme: Scheme,
) -> Result<f64> {
    check_problem(spec, ctrl, objective)?;
    let traj = integrate(spec, x0, ctrl, scheme)?;
    let errors = objective.errors_along(&traj);
    Ok(running_cost(&errors, ctrl.grid(), objective.quadrature()))
}

/// Central finite differences of the running cost, coordinate by coordinate.
pub fn grad_fd(
    spec: &DynamicsSpec,
    x0: &[f64],
    ctrl: &ControlTrajectory,
    objective: &ObjectiveSpec,
    scheme: Scheme,
    h: f64,
) -> Result<Gradient> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut grad = Gradient::zeros(ctrl.steps(), ctrl.dim());
    let mut probe = ctrl.clone();
    for k in 0..ctrl.steps() {
        for j in 0..ctrl.dim() {
            let orig = ctrl.point(k)[j];
            probe.point_mut(k)[j] = orig + h;
            let plus = running_value(spec, x0, &probe, objective, scheme)?;
            probe.point_mut(k)[j] = orig - h;
            let minus = running_value(spec, x0, &probe, objective, scheme)?;
            probe.point_mut(k)[j] = orig;
            grad.points[k][j] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// Componentwise sign with `0` at `0`: a subgradient of `‖·‖₁`.
pub fn l1_subgradient(u: &[f64]) -> Vec<f64> {
    u.iter()
        .map(|&v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Coordinatewise comparison used by the gradient checks: relative error where
/// either value is at least `1e-8` in magnitude, absolute error otherwise.
pub fn max_relative_error(exact: &Gradient, approx: &Gradient) -> f64 {
    exact
        .iter()
        .zip(approx.iter())
        .map(|(a, b)| {
            let scale = a.abs().max(b.abs());
            let diff = (a - b).abs();
            if scale < 1e-8 {
                diff
            } else {
                diff / scale
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{l1_norm, Activation};
    use crate::objective::{Labels, LossKind, OutputMap, Quadrature};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_ls(target: f64) -> ObjectiveSpec {
        ObjectiveSpec::new(
            LossKind::LeastSquares,
            OutputMap::identity(1),
            Labels::Targets(vec![vec![target]]),
            5.0,
        )
        .unwrap()
    }

    #[test]
    fn single_euler_step_by_hand() {
        // One step: x1 = x0 + dt(w x0 + b); only the final node carries weight
        // under the trapezoid rule with the initial node independent of u.
        let spec = DynamicsSpec::inside(1, 1, Activation::Identity).unwrap();
        let (x0, y, w, b, dt) = (0.7, 1.9, 0.4, -0.3, 0.5);
        let obj = scalar_ls(y).with_quadrature(Quadrature::Trapezoid);
        let grid = TimeGrid::new(dt, 1).unwrap();
        let ctrl = ControlTrajectory::constant(grid, &[w, b]);
        let g = grad_running(&spec, &[x0], &ctrl, &obj, Scheme::Euler).unwrap();
        let x1 = x0 + dt * (w * x0 + b);
        let weight = 0.5 * dt;
        let expect = [
            weight * 2.0 * (x1 - y) * dt * x0,
            weight * 2.0 * (x1 - y) * dt,
        ];
        assert!((g.points[0][0] - expect[0]).abs() < 1e-12);
        assert!((g.points[0][1] - expect[1]).abs() < 1e-12);

        // With the left rule and n_t = 2, node 1 carries weight dt: the closed
        // form from the hand chain rule is dt·2(x1 − y)·dt·(x0, 1).
        let grid = TimeGrid::new(2.0 * dt, 2).unwrap();
        let ctrl = ControlTrajectory::constant(grid, &[w, b]);
        let g = grad_running(&spec, &[x0], &ctrl, &scalar_ls(y), Scheme::Euler).unwrap();
        assert!((g.points[0][0] - dt * 2.0 * (x1 - y) * dt * x0).abs() < 1e-12);
        assert!((g.points[0][1] - dt * 2.0 * (x1 - y) * dt).abs() < 1e-12);
        assert_eq!(g.points[1], vec![0.0, 0.0]);
    }

    #[test]
    fn zero_residual_sample_pulls_nothing() {
        let spec = DynamicsSpec::inside(1, 1, Activation::Tanh).unwrap();
        let ctrl = ControlTrajectory::zeros(TimeGrid::new(1.0, 4).unwrap(), 2);
        let g = grad_running(&spec, &[1.5], &ctrl, &scalar_ls(1.5), Scheme::Midpoint).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let fd = grad_fd(
            &spec,
            &[1.5],
            &ctrl,
            &scalar_ls(1.5),
            Scheme::Midpoint,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!(fd.max_abs() < 1e-12);

        // Off target, tanh has nonzero ∂f/∂u at u = 0.
        let g = grad_running(&spec, &[0.5], &ctrl, &scalar_ls(1.5), Scheme::Euler).unwrap();
        assert!(g.max_abs() > 0.0);
    }

    #[test]
    fn finite_differences_are_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spec = DynamicsSpec::inside(2, 2, Activation::Tanh).unwrap();
        let obj = ObjectiveSpec::new(
            LossKind::LeastSquares,
            OutputMap::identity(2),
            Labels::Targets(vec![vec![1.0, 0.0], vec![-1.0, 0.5]]),
            5.0,
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let points = (0..3)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ctrl = ControlTrajectory::new(grid, points).unwrap();
        let x0 = [0.3, -0.2, 0.8, 0.1];
        let exact = grad_running(&spec, &x0, &ctrl, &obj, Scheme::Midpoint).unwrap();
        let err = |h| {
            let fd = grad_fd(&spec, &x0, &ctrl, &obj, Scheme::Midpoint, h).unwrap();
            exact
                .iter()
                .zip(fd.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(4e-2) / err(2e-2);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(l1_subgradient(&[2.0, -3.0, 0.0]), vec![1.0, -1.0, 0.0]);
        assert_eq!(l1_subgradient(&[0.0, -0.0]), vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s = l1_subgradient(&u);
            let dot: f64 = s.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!((dot - l1_norm(&u)).abs() < 1e-12);
        }
    }

    #[test]
    fn per_sample_gradients_add_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = DynamicsSpec::outside(2, 3, Activation::LeakyRelu { a: 0.2 }).unwrap();
        let p = vec![vec![1.0, 0.5], vec![-0.5, 1.0]];
        let classes = vec![0, 1, 1];
        let obj = ObjectiveSpec::new(
            LossKind::CrossEntropy,
            OutputMap::new(p.clone(), vec![0.0, 0.0]).unwrap(),
            Labels::Classes(classes.clone()),
            5.0,
        )
        .unwrap();
        let grid = TimeGrid::new(1.5, 5).unwrap();
        let points = (0..5)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ctrl = ControlTrajectory::new(grid, points).unwrap();
        let x0: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let full = grad_running(&spec, &x0, &ctrl, &obj, Scheme::Midpoint).unwrap();

        let single_spec = DynamicsSpec::outside(2, 1, Activation::LeakyRelu { a: 0.2 }).unwrap();
        let mut sum = Gradient::zeros(5, 6);
        for (i, &c) in classes.iter().enumerate() {
            let single = ObjectiveSpec::new(
                LossKind::CrossEntropy,
                OutputMap::new(p.clone(), vec![0.0, 0.0]).unwrap(),
                Labels::Classes(vec![c]),
                5.0,
            )
            .unwrap();
            let g = grad_running(
                &single_spec,
                &x0[2 * i..2 * i + 2],
                &ctrl,
                &single,
                Scheme::Midpoint,
            )
            .unwrap();
            for (s, v) in sum.points.iter_mut().flatten().zip(g.iter()) {
                *s += v / 3.0;
            }
        }
        for (a, b) in full.iter().zip(sum.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn euler_and_midpoint_gradients_converge() {
        let spec = DynamicsSpec::inside(1, 2, Activation::Tanh).unwrap();
        let obj = ObjectiveSpec::new(
            LossKind::LeastSquares,
            OutputMap::identity(1),
            Labels::Targets(vec![vec![1.0], vec![-0.5]]),
            5.0,
        )
        .unwrap();
        // Compare the gradient density g_k / dt at t = 0 across refinements.
        let mut gaps = Vec::new();
        for steps in [10, 20, 40, 80] {
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let ctrl = ControlTrajectory::constant(grid, &[0.5, 0.2]);
            let ge = grad_running(&spec, &[0.3, 0.1], &ctrl, &obj, Scheme::Euler).unwrap();
            let gm = grad_running(&spec, &[0.3, 0.1], &ctrl, &obj, Scheme::Midpoint).unwrap();
            let dt = grid.dt();
            gaps.push((ge.points[0][0] - gm.points[0][0]).abs() / dt);
        }
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn norm_dump_has_one_row_per_step() {
        let g = Gradient {
            points: vec![vec![3.0, 4.0], vec![0.0, -1.0]],
        };
        let mut buf = Vec::new();
        g.write_norms_csv(TimeGrid::new(1.0, 2).unwrap(), &mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,grad_l2,grad_linf\n0,5,4\n0.5,1,1\n");
    }
}
