//! Randomised property suites behind `verify <suite>`.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sparse_node::adjoint::{grad_fd, grad_running, max_relative_error, DEFAULT_FD_STEP};
use sparse_node::analysis::improve_control;
use sparse_node::dynamics::l1_norm;
use sparse_node::{
    functional, integrate, project_l1, rescale_control, Activation, AffineField, ControlTrajectory,
    DynamicsSpec, Form, Labels, LossKind, ObjectiveSpec, OutputMap, Scheme, TimeGrid,
};

use crate::error::{CliError, CliResult};

pub const SCALING_TOL: f64 = 1e-12;
pub const HOMOGENEITY_TOL: f64 = 1e-10;
pub const GRADIENT_TOL: f64 = 1e-5;
pub const PROJECTION_TOL: f64 = 1e-8;
/// Instances whose activation arguments come this close to a kink are redrawn.
pub const KINK_FILTER: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Scaling,
    Gradient,
    Projection,
    Improvement,
    Homogeneity,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Scaling,
        Suite::Gradient,
        Suite::Projection,
        Suite::Improvement,
        Suite::Homogeneity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Scaling => "scaling",
            Suite::Gradient => "gradient",
            Suite::Projection => "projection",
            Suite::Improvement => "improvement",
            Suite::Homogeneity => "homogeneity",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?}; expected one of scaling, gradient, projection, improvement, homogeneity"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub cases: usize,
    pub skipped: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(suite: Suite, seed: u64, tolerance: f64) -> Self {
        SuiteReport {
            suite,
            seed,
            cases: 0,
            skipped: 0,
            max_error: 0.0,
            tolerance,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.cases > 0
    }

    fn record(&mut self, label: impl FnOnce() -> String, error: f64) {
        self.cases += 1;
        self.max_error = self.max_error.max(error);
        if !(error <= self.tolerance) {
            self.failures.push(format!("{}: error {error:e}", label()));
        }
    }

    pub fn into_result(self) -> CliResult<SuiteReport> {
        if self.passed() {
            Ok(self)
        } else {
            Err(CliError::SuiteFailed {
                suite: self.suite.name().into(),
                detail: format!(
                    "{} of {} cases failed (max error {:e}, tolerance {:e}){}",
                    self.failures.len(),
                    self.cases,
                    self.max_error,
                    self.tolerance,
                    self.failures
                        .first()
                        .map(|f| format!("; first: {f}"))
                        .unwrap_or_default()
                ),
            })
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> CliResult<SuiteReport> {
    match suite {
        Suite::Scaling => scaling(seed, 100),
        Suite::Gradient => gradient(seed, 3),
        Suite::Projection => projection(seed, 500),
        Suite::Improvement => improvement(seed, 12),
        Suite::Homogeneity => homogeneity(seed, 1000),
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..=scale)).collect()
}

fn random_control(
    rng: &mut ChaCha8Rng,
    grid: TimeGrid,
    dim: usize,
    scale: f64,
) -> ControlTrajectory {
    let pts = (0..grid.steps())
        .map(|_| uniform_vec(rng, dim, scale))
        .collect();
    ControlTrajectory::new(grid, pts).expect("consistent sizes")
}

fn random_fields(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<AffineField> {
    (0..count)
        .map(|_| AffineField {
            a: (0..dim).map(|_| uniform_vec(rng, dim, 1.0)).collect(),
            c: uniform_vec(rng, dim, 1.0),
        })
        .collect()
}

/// Rescaling `T0 → T` with `u ↦ (T0/T)u` on the same number of steps.
pub fn scaling(seed: u64, cases: usize) -> CliResult<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new(Suite::Scaling, seed, SCALING_TOL);
    let mut worst_midpoint: f64 = 0.0;
    for case in 0..cases {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(1..=3);
        let spec = if case % 2 == 0 {
            DynamicsSpec::inside(d, n, Activation::Tanh)?
        } else {
            DynamicsSpec::outside(d, n, Activation::LeakyRelu { a: 0.1 })?
        };
        let steps = rng.random_range(1..=12);
        let t0 = rng.random_range(0.5..3.0);
        let t1 = rng.random_range(0.5..6.0);
        let ctrl = random_control(&mut rng, TimeGrid::new(t0, steps)?, spec.control_dim(), 1.0);
        let x0 = uniform_vec(&mut rng, spec.state_dim(), 1.0);
        let scaled = rescale_control(&ctrl, t1)?;
        let cost_gap = (scaled.control_cost() - ctrl.control_cost()).abs();
        let mut state_gap: f64 = 0.0;
        for scheme in [Scheme::Euler, Scheme::Midpoint] {
            let a = integrate(&spec, &x0, &ctrl, scheme)?;
            let b = integrate(&spec, &x0, &scaled, scheme)?;
            let gap = a
                .states
                .iter()
                .zip(&b.states)
                .flat_map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            match scheme {
                Scheme::Euler => state_gap = gap,
                Scheme::Midpoint => worst_midpoint = worst_midpoint.max(gap),
            }
        }
        report.record(
            || {
                format!(
                    "case {case} ({:?}, T0 = {t0}, T = {t1}, {steps} steps)",
                    spec.form()
                )
            },
            cost_gap.max(state_gap),
        );
    }
    report.notes.push(format!(
        "midpoint node-state deviation max {worst_midpoint:e}"
    ));
    Ok(report)
}

fn random_spec(rng: &mut ChaCha8Rng, kind: usize) -> CliResult<DynamicsSpec> {
    let d = rng.random_range(1..=3);
    let n = rng.random_range(1..=3);
    Ok(match kind % 5 {
        0 => DynamicsSpec::inside(d, n, Activation::Tanh)?,
        1 => DynamicsSpec::inside(d, n, Activation::Relu)?,
        2 => DynamicsSpec::outside(d, n, Activation::Relu)?,
        3 => DynamicsSpec::outside(
            d,
            n,
            Activation::LeakyRelu {
                a: rng.random_range(0.0..0.9),
            },
        )?,
        _ => {
            let count = rng.random_range(1..=3);
            DynamicsSpec::driftless(d, n, random_fields(rng, n * d, count))?
        }
    })
}

/// `f(x, αu) = α f(x, u)` over every admitted form.
pub fn homogeneity(seed: u64, cases: usize) -> CliResult<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new(Suite::Homogeneity, seed, HOMOGENEITY_TOL);
    for case in 0..cases {
        let spec = random_spec(&mut rng, case)?;
        let x = uniform_vec(&mut rng, spec.state_dim(), 2.0);
        let u = uniform_vec(&mut rng, spec.control_dim(), 2.0);
        let alpha = rng.random_range(1e-3..10.0);
        let dev = spec.check_homogeneity(&x, &u, alpha)?;
        report.record(
            || format!("case {case} ({:?}, α = {alpha})", spec.form()),
            dev,
        );
    }
    Ok(report)
}

/// Smallest kink distance along the trajectory, including midpoint stages.
fn trajectory_kink_gap(
    spec: &DynamicsSpec,
    x0: &[f64],
    ctrl: &ControlTrajectory,
    scheme: Scheme,
) -> CliResult<f64> {
    let traj = integrate(spec, x0, ctrl, scheme)?;
    let dt = ctrl.grid().dt();
    let mut gap = f64::INFINITY;
    for k in 0..ctrl.steps() {
        let (x, u) = (&traj.states[k], ctrl.point(k));
        gap = gap.min(spec.kink_gap(x, u));
        if scheme == Scheme::Midpoint {
            let f = spec.eval_field(x, u)?;
            let y: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + 0.5 * dt * b).collect();
            gap = gap.min(spec.kink_gap(&y, u));
        }
    }
    Ok(gap)
}

/// Adjoint gradient against central differences over
/// scheme × form × loss, `per_combo` accepted instances each.
pub fn gradient(seed: u64, per_combo: usize) -> CliResult<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new(Suite::Gradient, seed, GRADIENT_TOL);
    for scheme in [Scheme::Euler, Scheme::Midpoint] {
        for form in [Form::InsideSigma, Form::OutsideSigma] {
            for loss in [LossKind::LeastSquares, LossKind::CrossEntropy] {
                let mut accepted = 0;
                let mut attempts = 0;
                while accepted < per_combo {
                    attempts += 1;
                    if attempts > 50 * per_combo {
                        report.failures.push(format!(
                            "{scheme:?}/{form:?}/{loss:?}: no kink-free instance found"
                        ));
                        break;
                    }
                    let d = rng.random_range(2..=3);
                    let n = rng.random_range(1..=3);
                    let spec = match form {
                        Form::InsideSigma => DynamicsSpec::inside(d, n, Activation::Tanh)?,
                        _ => DynamicsSpec::outside(d, n, Activation::LeakyRelu { a: 0.1 })?,
                    };
                    let m = 2;
                    let output = OutputMap::new(
                        (0..m).map(|_| uniform_vec(&mut rng, d, 1.0)).collect(),
                        uniform_vec(&mut rng, m, 0.5),
                    )?;
                    let labels = match loss {
                        LossKind::LeastSquares => {
                            Labels::Targets((0..n).map(|_| uniform_vec(&mut rng, m, 1.0)).collect())
                        }
                        LossKind::CrossEntropy => {
                            Labels::Classes((0..n).map(|_| rng.random_range(0..m)).collect())
                        }
                    };
                    let obj = ObjectiveSpec::new(loss, output, labels, 10.0)?;
                    let steps = rng.random_range(2..=5);
                    let grid = TimeGrid::new(rng.random_range(0.5..2.0), steps)?;
                    let ctrl = random_control(&mut rng, grid, spec.control_dim(), 0.8);
                    let x0 = uniform_vec(&mut rng, spec.state_dim(), 1.0);
                    if trajectory_kink_gap(&spec, &x0, &ctrl, scheme)? < KINK_FILTER {
                        report.skipped += 1;
                        continue;
                    }
                    let exact = grad_running(&spec, &x0, &ctrl, &obj, scheme)?;
                    let fd = grad_fd(&spec, &x0, &ctrl, &obj, scheme, DEFAULT_FD_STEP)?;
                    let err = max_relative_error(&exact, &fd);
                    report.record(
                        || format!("{scheme:?}/{form:?}/{loss:?} instance {accepted}"),
                        err,
                    );
                    accepted += 1;
                }
            }
        }
    }
    if report.skipped > 0 {
        report
            .notes
            .push(format!("{} kink-adjacent draws redrawn", report.skipped));
    }
    Ok(report)
}

/// Projection radius `θ` found by bisection on `Σ(|v_i| − θ)₊ = M`.
fn bisection_projection(v: &[f64], bound: f64) -> Vec<f64> {
    if l1_norm(v) <= bound {
        return v.to_vec();
    }
    let excess = |t: f64| v.iter().map(|x| (x.abs() - t).max(0.0)).sum::<f64>() - bound;
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    v.iter()
        .map(|x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Sort-based projection against a bisection oracle, plus KKT residuals,
/// idempotence, and non-expansiveness against a partner of the same length.
pub fn projection(seed: u64, cases: usize) -> CliResult<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new(Suite::Projection, seed, PROJECTION_TOL);
    for case in 0..cases {
        let dim = rng.random_range(1..=6);
        let scale = [0.1, 1.0, 10.0][case % 3];
        let v = uniform_vec(&mut rng, dim, scale);
        let bound = rng.random_range(0.1..5.0);
        let p = project_l1(&v, bound)?;
        let oracle = bisection_projection(&v, bound);
        let mut err = max_abs_diff(&p, &oracle);
        // Idempotence.
        err = err.max(max_abs_diff(&project_l1(&p, bound)?, &p));
        // Feasibility.
        err = err.max((l1_norm(&p) - bound).max(0.0));
        // KKT: v − p lies in the normal cone, i.e. ⟨v − p, z − p⟩ ≤ 0 at the
        // vertices ±M e_i of the ball.
        for i in 0..dim {
            for s in [-1.0, 1.0] {
                let mut z = vec![0.0; dim];
                z[i] = s * bound;
                let inner: f64 = v
                    .iter()
                    .zip(&p)
                    .zip(&z)
                    .map(|((vi, pi), zi)| (vi - pi) * (zi - pi))
                    .sum();
                err = err.max(inner.max(0.0));
            }
        }
        report.record(|| format!("case {case} (d_u = {dim}, M = {bound})"), err);
        let partner = uniform_vec(&mut rng, dim, scale);
        let q = project_l1(&partner, bound)?;
        let ne = (dist(&p, &q) - dist(&v, &partner)).max(0.0);
        report.record(|| format!("pair {case} non-expansiveness"), ne);
    }
    Ok(report)
}

/// Dynamics, objective, control, interval `[a, b)` and `θ`.
pub type Instance = (
    DynamicsSpec,
    ObjectiveSpec,
    ControlTrajectory,
    (f64, f64),
    f64,
);

/// The worked improvement instance: `ẋ = u` towards `x̄ = 3`, `M = 1`,
/// `θ = 0.5` on `[0.4, 0.8)` where `‖u‖₁ = (1 − θ)M`.
pub fn worked_example() -> CliResult<Instance> {
    let spec = DynamicsSpec::driftless(
        1,
        1,
        vec![AffineField {
            a: vec![vec![0.0]],
            c: vec![1.0],
        }],
    )?;
    let obj = ObjectiveSpec::new(
        LossKind::LeastSquares,
        OutputMap::identity(1),
        Labels::Targets(vec![vec![3.0]]),
        1.0,
    )?
    .with_penalty_weight(0.1)?;
    let grid = TimeGrid::new(4.0, 20)?;
    let pts = (0..20)
        .map(|k| {
            vec![if (2..4).contains(&k) {
                0.5
            } else if k < 12 {
                0.2
            } else {
                0.0
            }]
        })
        .collect();
    Ok((
        spec,
        obj,
        ControlTrajectory::new(grid, pts)?,
        (0.4, 0.8),
        0.5,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateCase {
    pub theta: f64,
    pub length: f64,
    pub predicted: f64,
    /// `J(u)` on the original grid.
    pub j_before: f64,
    /// `J(u)` on the refined grid `ū` lives on.
    pub j_before_refined: f64,
    pub j_after: f64,
    pub tol_quad: f64,
}

impl CertificateCase {
    /// Slack left in `J(ū) ≤ J(u) − θ²(b − a) + tol`; negative means violated.
    pub fn margin(&self) -> f64 {
        self.j_before - self.predicted + self.tol_quad - self.j_after
    }
}

pub fn certificate(
    spec: &DynamicsSpec,
    x0: &[f64],
    ctrl: &ControlTrajectory,
    obj: &ObjectiveSpec,
    scheme: Scheme,
    interval: (f64, f64),
    theta: f64,
) -> CliResult<CertificateCase> {
    let imp = improve_control(spec, x0, ctrl, obj, scheme, interval, theta)?;
    // Recompute both sides from scratch.
    let before = integrate(spec, x0, ctrl, scheme)?;
    let after = integrate(spec, x0, &imp.ctrl, scheme)?;
    Ok(CertificateCase {
        theta,
        length: interval.1 - interval.0,
        predicted: imp.predicted_decrease,
        j_before: functional(&before, ctrl, obj)?.total,
        j_before_refined: imp.j_before,
        j_after: functional(&after, &imp.ctrl, obj)?.total,
        tol_quad: imp.tol_quad,
    })
}

/// Interval-compression certificate on constructed reach instances.
pub fn improvement(seed: u64, cases: usize) -> CliResult<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new(Suite::Improvement, seed, 0.0);
    let (spec, obj, ctrl, interval, theta) = worked_example()?;
    let worked = certificate(&spec, &[0.0], &ctrl, &obj, Scheme::Euler, interval, theta)?;
    report.record(
        || format!("worked example {worked:?}"),
        (-worked.margin()).max(0.0),
    );
    report.notes.push(format!(
        "worked example: predicted {} measured decrease {} tol {}",
        worked.predicted,
        worked.j_before - worked.j_after,
        worked.tol_quad
    ));

    let thetas = [0.5, 0.25, 0.2, 0.4, 0.1, 0.75];
    let mut attempts = 0;
    while report.cases < cases + 1 && attempts < 50 * cases {
        attempts += 1;
        let case = report.cases;
        let theta = thetas[attempts % thetas.len()];
        let scheme = if attempts % 2 == 0 {
            Scheme::Euler
        } else {
            Scheme::Midpoint
        };
        let inside = attempts % 3 == 0;
        let spec = if inside {
            DynamicsSpec::inside(1, 1, Activation::Identity)?
        } else {
            DynamicsSpec::driftless(
                1,
                1,
                vec![AffineField {
                    a: vec![vec![0.0]],
                    c: vec![1.0],
                }],
            )?
        };
        let bound = rng.random_range(1.0..3.0);
        let target = rng.random_range(2.0..5.0);
        let obj = ObjectiveSpec::new(
            LossKind::LeastSquares,
            OutputMap::identity(1),
            Labels::Targets(vec![vec![target]]),
            bound,
        )?
        .with_penalty_weight(rng.random_range(0.0..1.0))?;
        let steps = 20;
        let grid = TimeGrid::new(4.0, steps)?;
        let stop = rng.random_range(6..steps);
        let a_idx = rng.random_range(0..stop - 3);
        let b_idx = a_idx + rng.random_range(1..=3);
        let level = |rng: &mut ChaCha8Rng, k: usize| -> f64 {
            if (a_idx..b_idx).contains(&k) {
                (1.0 - theta) * bound
            } else if k < stop {
                rng.random_range(0.1..1.0) * bound
            } else {
                0.0
            }
        };
        let pts = (0..steps)
            .map(|k| {
                let l = level(&mut rng, k);
                if inside {
                    // Split the level between w and b with b carrying most of it.
                    let share = rng.random_range(0.0..0.3);
                    vec![share * l, (1.0 - share) * l]
                } else {
                    vec![l]
                }
            })
            .collect();
        let ctrl = ControlTrajectory::new(grid, pts)?;
        let x0 = [rng.random_range(-0.5..0.5)];
        let dt = grid.dt();
        let interval = (a_idx as f64 * dt, b_idx as f64 * dt);
        match certificate(&spec, &x0, &ctrl, &obj, scheme, interval, theta) {
            Ok(c) => {
                report.record(
                    || {
                        format!(
                            "case {case} ({scheme:?}, {:?}, θ = {theta}, {c:?})",
                            spec.form()
                        )
                    },
                    (-c.margin()).max(0.0),
                );
                if c.j_after > c.j_before_refined - c.predicted + c.tol_quad {
                    report
                        .notes
                        .push(format!("case {case}: refined-grid comparison violated"));
                }
            }
            Err(CliError::Core(sparse_node::Error::Precondition(_))) => report.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if report.cases < cases + 1 {
        report.failures.push(format!(
            "only {} instances met the preconditions",
            report.cases - 1
        ));
    }
    report.notes.push(format!(
        "{} draws rejected by the preconditions",
        report.skipped
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nonsense".parse::<Suite>().is_err());
    }

    #[test]
    fn bisection_oracle_matches_examples() {
        assert_eq!(bisection_projection(&[0.5, -0.2], 1.0), vec![0.5, -0.2]);
        let p = bisection_projection(&[3.0, 3.0], 2.0);
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn failing_report_maps_to_suite_exit_code() {
        let mut r = SuiteReport::new(Suite::Scaling, 0, 1e-12);
        r.record(|| "bad".into(), 1.0);
        let err = r.into_result().unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
