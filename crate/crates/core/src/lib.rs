//! L1-penalized optimal control of stacked neural ODEs.
//!
//! The crate is organised bottom-up: [`dynamics`] evaluates the vector field,
//! [`integrator`] rolls it out on a uniform grid, [`objective`] scores the
//! rollout, [`adjoint`] differentiates it, [`optimizer`] trains the controls
//! and [`analysis`] inspects the result. [`datagen`] builds small datasets.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod analysis;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod objective;
pub mod optimizer;

pub use adjoint::{grad_fd, grad_running, value_and_grad, Gradient};
pub use analysis::{
    check_theorem_bounds, detect_tstar, improve_control, saturation_profile, sparsity_report,
    turnpike_check, BoundFit, BoundTable, Improvement, SparsityReport, StepClass, TStar,
    TurnpikeReport,
};
pub use datagen::{
    augment_zero, gen_circles, gen_two_gaussians, separability_check, Dataset, DatasetKind,
};
pub use dynamics::{l1_norm, Activation, AffineField, DynamicsSpec, Form};
pub use error::{Error, Result};
pub use integrator::{
    integrate, rescale_control, zero_extend, ControlTrajectory, Scheme, StateTrajectory, TimeGrid,
};
pub use objective::{
    empirical_error, functional, CostBreakdown, Label, Labels, LossKind, ObjectiveSpec, OutputMap,
    Quadrature,
};
pub use optimizer::{
    project_l1, prox_l1, train, train_observed, Init, ProxScaling, TrainConfig, TrainResult,
};
