//! Empirical error, running cost, and the L1-penalized functional
//! `J = ∫ E(x(t)) dt + ∫ ‖u(t)‖₁ dt` on the discrete grid.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrator::{ControlTrajectory, StateTrajectory, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    LeastSquares,
    CrossEntropy,
}

/// Fixed affine readout `x_i ↦ P x_i + q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputMap {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

impl OutputMap {
    pub fn new(p: Vec<Vec<f64>>, q: Vec<f64>) -> Result<Self> {
        let map = OutputMap { p, q };
        map.validate()?;
        Ok(map)
    }

    pub fn identity(d: usize) -> Self {
        let p = (0..d)
            .map(|r| (0..d).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect();
        OutputMap { p, q: vec![0.0; d] }
    }

    fn validate(&self) -> Result<()> {
        if self.p.is_empty() || self.p[0].is_empty() {
            return Err(Error::InvalidArgument(
                "output map must be at least 1x1".into(),
            ));
        }
        check_len("output offset", self.p.len(), self.q.len())?;
        let d = self.p[0].len();
        for row in &self.p {
            check_len("output map row", d, row.len())?;
        }
        Ok(())
    }

    /// Output dimension `m`.
    pub fn m(&self) -> usize {
        self.p.len()
    }

    /// Per-sample state dimension `d`.
    pub fn d(&self) -> usize {
        self.p[0].len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, row), q) in out.iter_mut().zip(&self.p).zip(&self.q) {
            *o = row.iter().zip(x).map(|(p, x)| p * x).sum::<f64>() + q;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        self.apply_into(x, &mut out);
        out
    }

    /// Accumulates `Pᵀ g` into `out`.
    fn pullback_into(&self, g: &[f64], scale: f64, out: &mut [f64]) {
        for (row, &gr) in self.p.iter().zip(g) {
            let s = scale * gr;
            for (o, p) in out.iter_mut().zip(row) {
                *o += s * p;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    /// Class indices in `0..m`.
    Classes(Vec<usize>),
    /// Regression targets in `ℝ^m`.
    Targets(Vec<Vec<f64>>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Targets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Label<'_> {
        match self {
            Labels::Classes(c) => Label::Class(c[i]),
            Labels::Targets(t) => Label::Target(&t[i]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label<'a> {
    Class(usize),
    Target(&'a [f64]),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// `Σ_{k<n_t} dt·E(x^k)`
    #[default]
    Left,
    Trapezoid,
}

impl Quadrature {
    /// Weight of each of the `steps + 1` nodes in the running cost.
    pub fn node_weights(self, grid: TimeGrid) -> Vec<f64> {
        let dt = grid.dt();
        let n = grid.steps();
        let mut w = vec![dt; n + 1];
        match self {
            Quadrature::Left => w[n] = 0.0,
            Quadrature::Trapezoid => {
                w[0] = 0.5 * dt;
                w[n] = 0.5 * dt;
            }
        }
        w
    }
}

fn default_penalty_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
struct RawObjective {
    loss: LossKind,
    output: OutputMap,
    labels: Labels,
    bound: f64,
    #[serde(default)]
    quadrature: Quadrature,
    #[serde(default = "default_penalty_weight")]
    penalty_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObjective")]
pub struct ObjectiveSpec {
    loss: LossKind,
    output: OutputMap,
    labels: Labels,
    /// Constraint level `M` of the admissible set `‖u(t)‖₁ ≤ M`.
    bound: f64,
    quadrature: Quadrature,
    penalty_weight: f64,
}

impl TryFrom<RawObjective> for ObjectiveSpec {
    type Error = Error;

    fn try_from(raw: RawObjective) -> Result<Self> {
        raw.output.validate()?;
        if !(raw.bound > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "constraint level M must be positive, got {}",
                raw.bound
            )));
        }
        if !(raw.penalty_weight >= 0.0) || !raw.penalty_weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "penalty weight must be finite and non-negative, got {}",
                raw.penalty_weight
            )));
        }
        if raw.labels.is_empty() {
            return Err(Error::InvalidArgument(
                "objective needs at least one label".into(),
            ));
        }
        let m = raw.output.m();
        match (&raw.loss, &raw.labels) {
            (LossKind::CrossEntropy, Labels::Classes(classes)) => {
                if let Some(&bad) = classes.iter().find(|&&c| c >= m) {
                    return Err(Error::InvalidArgument(format!(
                        "class index {bad} out of range for m = {m}"
                    )));
                }
            }
            (LossKind::LeastSquares, Labels::Targets(targets)) => {
                for t in targets {
                    check_len("regression target", m, t.len())?;
                }
            }
            (loss, _) => {
                return Err(Error::InvalidArgument(format!(
                    "labels do not match loss {loss:?}: cross_entropy takes classes, least_squares takes targets"
                )))
            }
        }
        Ok(ObjectiveSpec {
            loss: raw.loss,
            output: raw.output,
            labels: raw.labels,
            bound: raw.bound,
            quadrature: raw.quadrature,
            penalty_weight: raw.penalty_weight,
        })
    }
}

impl ObjectiveSpec {
    pub fn new(loss: LossKind, output: OutputMap, labels: Labels, bound: f64) -> Result<Self> {
        RawObjective {
            loss,
            output,
            labels,
            bound,
            quadrature: Quadrature::Left,
            penalty_weight: 1.0,
        }
        .try_into()
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn with_penalty_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "penalty weight must be finite and non-negative, got {weight}"
            )));
        }
        self.penalty_weight = weight;
        Ok(self)
    }

    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "constraint level M must be positive, got {bound}"
            )));
        }
        self.bound = bound;
        Ok(self)
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn output(&self) -> &OutputMap {
        &self.output
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn penalty_weight(&self) -> f64 {
        self.penalty_weight
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    /// Stacked state length `n·d` this objective expects.
    pub fn state_dim(&self) -> usize {
        self.n_samples() * self.output.d()
    }

    /// Accumulates `scale·∇E(x)` into `out`.
    pub(crate) fn error_grad_into(&self, state: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.output.d();
        let mut z = vec![0.0; self.output.m()];
        let mut g = vec![0.0; self.output.m()];
        let s = scale / self.n_samples() as f64;
        for (i, (xi, oi)) in state
            .chunks_exact(d)
            .zip(out.chunks_exact_mut(d))
            .enumerate()
        {
            self.output.apply_into(xi, &mut z);
            loss_grad_into(self.loss, &z, self.labels.get(i), &mut g);
            self.output.pullback_into(&g, s, oi);
        }
    }

    /// `E(x^k)` at every node of a trajectory.
    pub fn errors_along(&self, traj: &StateTrajectory) -> Vec<f64> {
        traj.states
            .iter()
            .map(|s| empirical_error(s, self))
            .collect()
    }
}

pub fn loss_eval(kind: LossKind, z: &[f64], label: Label<'_>) -> Result<f64> {
    match (kind, label) {
        (LossKind::CrossEntropy, Label::Class(y)) => {
            if y >= z.len() {
                return Err(Error::InvalidArgument(format!(
                    "class index {y} out of range for m = {}",
                    z.len()
                )));
            }
            Ok(cross_entropy(z, y))
        }
        (LossKind::LeastSquares, Label::Target(t)) => {
            check_len("regression target", z.len(), t.len())?;
            Ok(squared_distance(z, t))
        }
        _ => Err(Error::InvalidArgument(format!(
            "label kind does not match loss {kind:?}"
        ))),
    }
}

fn squared_distance(z: &[f64], t: &[f64]) -> f64 {
    z.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[y]
}

fn unchecked_loss(kind: LossKind, z: &[f64], label: Label<'_>) -> f64 {
    match (kind, label) {
        (LossKind::CrossEntropy, Label::Class(y)) => cross_entropy(z, y),
        (LossKind::LeastSquares, Label::Target(t)) => squared_distance(z, t),
        _ => unreachable!("labels validated against loss kind"),
    }
}

fn loss_grad_into(kind: LossKind, z: &[f64], label: Label<'_>, g: &mut [f64]) {
    match (kind, label) {
        (LossKind::CrossEntropy, Label::Class(y)) => {
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (gj, zj) in g.iter_mut().zip(z) {
                *gj = (zj - max).exp();
                total += *gj;
            }
            for gj in g.iter_mut() {
                *gj /= total;
            }
            g[y] -= 1.0;
        }
        (LossKind::LeastSquares, Label::Target(t)) => {
            for ((gj, zj), tj) in g.iter_mut().zip(z).zip(t) {
                *gj = 2.0 * (zj - tj);
            }
        }
        _ => unreachable!("labels validated against loss kind"),
    }
}

/// `E(x) = (1/n) Σ_i loss(P x_i + q, y_i)` for one stacked state.
pub fn empirical_error(state: &[f64], spec: &ObjectiveSpec) -> f64 {
    let d = spec.output.d();
    let mut z = vec![0.0; spec.output.m()];
    let mut total = 0.0;
    for (i, xi) in state.chunks_exact(d).enumerate() {
        spec.output.apply_into(xi, &mut z);
        total += unchecked_loss(spec.loss, &z, spec.labels.get(i));
    }
    total / spec.n_samples() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    #[serde(rename = "J")]
    pub total: f64,
    pub running: f64,
    pub penalty: f64,
}

/// Discrete running cost from per-node errors.
pub fn running_cost(errors: &[f64], grid: TimeGrid, quadrature: Quadrature) -> f64 {
    quadrature
        .node_weights(grid)
        .iter()
        .zip(errors)
        .map(|(w, e)| w * e)
        .sum()
}

pub fn functional(
    traj: &StateTrajectory,
    ctrl: &ControlTrajectory,
    spec: &ObjectiveSpec,
) -> Result<CostBreakdown> {
    if !traj.grid.same_as(&ctrl.grid()) {
        return Err(Error::GridMismatch(format!(
            "state grid {:?} vs control grid {:?}",
            traj.grid,
            ctrl.grid()
        )));
    }
    check_len("trajectory state", spec.state_dim(), traj.states[0].len())?;
    let errors = spec.errors_along(traj);
    let running = running_cost(&errors, traj.grid, spec.quadrature);
    let penalty = spec.penalty_weight * ctrl.control_cost();
    Ok(CostBreakdown {
        total: running + penalty,
        running,
        penalty,
    })
}

/// `min_i [ (P x_i)_{y_i} − max_{j≠y_i} (P x_i)_j ]`.
pub fn margin(state: &[f64], output: &OutputMap, classes: &[usize]) -> Result<f64> {
    let m = output.m();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "margin needs at least two classes".into(),
        ));
    }
    let d = output.d();
    check_len("stacked state", classes.len() * d, state.len())?;
    let mut z = vec![0.0; m];
    let mut worst = f64::INFINITY;
    for (xi, &y) in state.chunks_exact(d).zip(classes) {
        if y >= m {
            return Err(Error::InvalidArgument(format!(
                "class index {y} out of range for m = {m}"
            )));
        }
        output.apply_into(xi, &mut z);
        let rival = z
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.min(z[y] - rival);
    }
    Ok(worst)
}

/// `h(t) = log(1 + (m − 1)·exp(−γ eᵗ))`, the cross-entropy decay profile
/// available once a positive margin `γ` is reached.
pub fn h_bound(gamma: f64, m: usize, t: f64) -> Result<f64> {
    check_h_params(gamma, m)?;
    Ok(((m - 1) as f64 * (-gamma * t.exp()).exp()).ln_1p())
}

/// Inverse of [`h_bound`] on `(0, log m)`.
pub fn h_inverse(gamma: f64, m: usize, v: f64) -> Result<f64> {
    check_h_params(gamma, m)?;
    let top = (m as f64).ln();
    if !(v > 0.0 && v < top) {
        return Err(Error::InvalidArgument(format!(
            "h is only invertible on (0, log m) = (0, {top}), got {v}"
        )));
    }
    let ratio = v.exp_m1() / (m - 1) as f64;
    Ok((-ratio.ln() / gamma).ln())
}

fn check_h_params(gamma: f64, m: usize) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "margin must be positive for the interpolation bound, got {gamma}"
        )));
    }
    if m < 2 {
        return Err(Error::InvalidArgument(
            "h needs at least two classes".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Activation, DynamicsSpec};
    use crate::integrator::{integrate, Scheme};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn classification(n: usize, rng: &mut ChaCha8Rng) -> ObjectiveSpec {
        let p = vec![
            vec![1.0, -0.5, 0.25],
            vec![0.0, 2.0, -1.0],
            vec![0.5, 0.5, 0.5],
        ];
        let classes = (0..n).map(|_| rng.random_range(0..3)).collect();
        ObjectiveSpec::new(
            LossKind::CrossEntropy,
            OutputMap::new(p, vec![0.1, 0.0, -0.2]).unwrap(),
            Labels::Classes(classes),
            4.0,
        )
        .unwrap()
    }

    #[test]
    fn loss_examples() {
        let ce = loss_eval(LossKind::CrossEntropy, &[0.0, 0.0], Label::Class(0)).unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-15);
        let ce = loss_eval(LossKind::CrossEntropy, &[10.0, 0.0], Label::Class(0)).unwrap();
        let direct = -((10.0f64).exp() / ((10.0f64).exp() + 1.0)).ln();
        assert!((ce - direct).abs() < 1e-15);
        assert!((ce - 4.53989e-5).abs() < 1e-10);
        let ls = loss_eval(
            LossKind::LeastSquares,
            &[1.0, 2.0],
            Label::Target(&[1.0, 2.0]),
        )
        .unwrap();
        assert_eq!(ls, 0.0);
        assert!(loss_eval(LossKind::CrossEntropy, &[0.0, 0.0], Label::Class(2)).is_err());
    }

    #[test]
    fn cross_entropy_is_stable_and_positive() {
        let ce = loss_eval(LossKind::CrossEntropy, &[1000.0, -1000.0], Label::Class(1)).unwrap();
        assert!((ce - 2000.0).abs() < 1e-9);
        let ce = loss_eval(LossKind::CrossEntropy, &[30.0, 0.0], Label::Class(0)).unwrap();
        assert!(ce > 0.0);
    }

    #[test]
    fn empirical_error_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = classification(7, &mut rng);
        let x: Vec<f64> = (0..21).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut total = 0.0;
        for i in 0..7 {
            let z = spec.output().apply(&x[3 * i..3 * i + 3]);
            total += loss_eval(spec.loss(), &z, spec.labels().get(i)).unwrap();
        }
        assert!((empirical_error(&x, &spec) - total / 7.0).abs() < 1e-14);

        let single = ObjectiveSpec::new(
            LossKind::LeastSquares,
            OutputMap::identity(2),
            Labels::Targets(vec![vec![1.0, -1.0]]),
            1.0,
        )
        .unwrap();
        assert_eq!(empirical_error(&[1.0, -1.0], &single), 0.0);
        assert_eq!(empirical_error(&[2.0, -1.0], &single), 1.0);
    }

    #[test]
    fn functional_examples() {
        let spec = DynamicsSpec::inside(1, 1, Activation::Identity).unwrap();
        let obj = ObjectiveSpec::new(
            LossKind::LeastSquares,
            OutputMap::identity(1),
            Labels::Targets(vec![vec![2.0]]),
            3.0,
        )
        .unwrap();
        let grid = TimeGrid::new(2.0, 8).unwrap();

        let zero = ControlTrajectory::zeros(grid, 2);
        let traj = integrate(&spec, &[0.5], &zero, Scheme::Euler).unwrap();
        let cost = functional(&traj, &zero, &obj).unwrap();
        assert!((cost.total - 2.0 * 2.25).abs() < 1e-14);
        assert_eq!(cost.penalty, 0.0);

        let mut half = ControlTrajectory::zeros(grid, 2);
        for k in 0..4 {
            half.point_mut(k).copy_from_slice(&[1.0, -2.0]);
        }
        let traj = integrate(&spec, &[0.5], &half, Scheme::Euler).unwrap();
        let cost = functional(&traj, &half, &obj).unwrap();
        assert!((cost.penalty - 3.0 * 2.0 / 2.0).abs() < 1e-14);
        assert_eq!(cost.total, cost.running + cost.penalty);

        let other = ControlTrajectory::zeros(TimeGrid::new(2.0, 4).unwrap(), 2);
        assert!(matches!(
            functional(&traj, &other, &obj),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn quadrature_rules_converge_together() {
        // ẋ = -x + 1 (w = -1 on identity σ, b = 1), x0 = 0; E = (x - 1)².
        let spec = DynamicsSpec::inside(1, 1, Activation::Identity).unwrap();
        let obj = ObjectiveSpec::new(
            LossKind::LeastSquares,
            OutputMap::identity(1),
            Labels::Targets(vec![vec![1.0]]),
            3.0,
        )
        .unwrap();
        let exact = (1.0 - (-4.0f64).exp()) / 2.0;
        let mut prev_gap = f64::INFINITY;
        for steps in [50, 100, 200, 400] {
            let grid = TimeGrid::new(2.0, steps).unwrap();
            let ctrl = ControlTrajectory::constant(grid, &[-1.0, 1.0]);
            let traj = integrate(&spec, &[0.0], &ctrl, Scheme::Midpoint).unwrap();
            let errs = obj.errors_along(&traj);
            let left = running_cost(&errs, grid, Quadrature::Left);
            let trap = running_cost(&errs, grid, Quadrature::Trapezoid);
            let gap = (left - trap).abs();
            assert!(gap <= grid.dt() * 1.0);
            assert!(gap < prev_gap);
            prev_gap = gap;
            assert!((trap - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn margin_examples() {
        let out = OutputMap::identity(2);
        assert_eq!(margin(&[2.0, -1.0], &out, &[0]).unwrap(), 3.0);
        assert_eq!(margin(&[0.5, 0.5], &out, &[1]).unwrap(), 0.0);
        assert!(margin(&[1.0], &OutputMap::identity(1), &[0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = classification(9, &mut rng);
        let x: Vec<f64> = (0..27).map(|_| rng.random_range(-2.0..2.0)).collect();
        let Labels::Classes(classes) = spec.labels() else {
            unreachable!()
        };
        let mut oracle = f64::INFINITY;
        for (i, &y) in classes.iter().enumerate() {
            let z = spec.output().apply(&x[3 * i..3 * i + 3]);
            let mut best_wrong = f64::NEG_INFINITY;
            for (j, &zj) in z.iter().enumerate() {
                if j != y && zj > best_wrong {
                    best_wrong = zj;
                }
            }
            oracle = oracle.min(z[y] - best_wrong);
        }
        assert_eq!(margin(&x, spec.output(), classes).unwrap(), oracle);
    }

    #[test]
    fn h_examples() {
        let h0 = h_bound(1.0, 2, 0.0).unwrap();
        assert!((h0 - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
        assert!((h0 - 0.313262).abs() < 1e-6);
        assert!(h_bound(1.0, 2, 4.0).unwrap() <= 1e-8);
        // γeᵗ → 0⁺ recovers log m.
        assert!((h_bound(1e-12, 3, 0.0).unwrap() - 3.0f64.ln()).abs() < 1e-10);
        assert!(h_bound(0.0, 2, 0.0).is_err());
        assert!(h_bound(-1.0, 2, 0.0).is_err());
    }

    #[test]
    fn h_inverse_examples() {
        let t = h_inverse(1.0, 2, 0.1).unwrap();
        assert!((h_bound(1.0, 2, t).unwrap() - 0.1).abs() <= 1e-10);
        let anchor = h_bound(1.0, 2, 0.0).unwrap();
        assert!(h_inverse(1.0, 2, anchor).unwrap().abs() < 1e-12);
        assert!(h_inverse(1.0, 2, 0.05).unwrap() > h_inverse(1.0, 2, 0.2).unwrap());
        assert!(h_inverse(1.0, 2, 0.0).is_err());
        assert!(h_inverse(1.0, 2, std::f64::consts::LN_2).is_err());
    }

    #[test]
    fn objective_validation() {
        let bad_class = ObjectiveSpec::new(
            LossKind::CrossEntropy,
            OutputMap::identity(2),
            Labels::Classes(vec![0, 2]),
            1.0,
        );
        assert!(bad_class.is_err());
        let mismatch = ObjectiveSpec::new(
            LossKind::LeastSquares,
            OutputMap::identity(2),
            Labels::Classes(vec![0]),
            1.0,
        );
        assert!(mismatch.is_err());
        let bad_bound = ObjectiveSpec::new(
            LossKind::LeastSquares,
            OutputMap::identity(1),
            Labels::Targets(vec![vec![0.0]]),
            0.0,
        );
        assert!(bad_bound.is_err());
        let json = r#"{"loss":"cross_entropy","output":{"p":[[1,0],[0,1]],"q":[0,0]},
                       "labels":{"classes":[0,1]},"bound":8}"#;
        let spec: ObjectiveSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.penalty_weight(), 1.0);
        assert_eq!(spec.quadrature(), Quadrature::Left);
    }
}
