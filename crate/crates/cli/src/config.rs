//! Run configuration: everything needed to reproduce a run from one JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_node::datagen::{augment_zero, gen_circles, gen_two_gaussians, Dataset, DatasetKind};
use sparse_node::{
    Activation, AffineField, DynamicsSpec, Form, Labels, LossKind, ObjectiveSpec, OutputMap,
    Quadrature, TimeGrid, TrainConfig,
};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    TwoGaussians {
        n: usize,
        separation: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Circles {
        n: usize,
        r_in: f64,
        r_out: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Points given inline.
    Points {
        xs: Vec<Vec<f64>>,
        labels: Labels,
        kind: DatasetKind,
    },
    /// A `dataset.csv`, relative paths resolved against the config file.
    File { path: PathBuf, kind: DatasetKind },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub source: DatasetSource,
    /// Number of zero coordinates appended to every point.
    #[serde(default)]
    pub augment: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub form: Form,
    #[serde(default = "identity")]
    pub activation: Activation,
    #[serde(default)]
    pub fields: Vec<AffineField>,
}

fn identity() -> Activation {
    Activation::Identity
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub loss: LossKind,
    /// Defaults to the identity readout.
    #[serde(default)]
    pub output: Option<OutputMap>,
    #[serde(rename = "M")]
    pub bound: f64,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default = "one")]
    pub penalty_weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnpikeConfig {
    /// Steady state `x̄`; defaults to the regression targets.
    #[serde(default)]
    pub target: Option<Vec<f64>>,
    #[serde(default = "two")]
    pub p: u32,
}

fn two() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "eps_sat")]
    pub eps_sat: f64,
    #[serde(default = "eps_zero")]
    pub eps_zero: f64,
}

fn eps_sat() -> f64 {
    sparse_node::analysis::DEFAULT_EPS_SAT
}

fn eps_zero() -> f64 {
    sparse_node::analysis::DEFAULT_EPS_ZERO
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            eps_sat: eps_sat(),
            eps_zero: eps_zero(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetConfig,
    pub dynamics: DynamicsConfig,
    pub objective: ObjectiveConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub turnpike: Option<TurnpikeConfig>,
    /// Write the control iterate every this many iterations.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// A config turned into library objects.
#[derive(Clone, Debug)]
pub struct Problem {
    pub dataset: Dataset,
    pub dynamics: DynamicsSpec,
    pub objective: ObjectiveSpec,
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let DatasetSource::File { path: p, .. } = &mut cfg.dataset.source {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies the `--seed` override and pins generator seeds so the written
    /// config alone reproduces the run.
    pub fn resolve(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.train.seed = s;
        }
        let train_seed = self.train.seed;
        match &mut self.dataset.source {
            DatasetSource::TwoGaussians { seed, .. } | DatasetSource::Circles { seed, .. } => {
                seed.get_or_insert(train_seed);
            }
            _ => {}
        }
        self
    }

    /// Replaces the sample count of a generated dataset.
    pub fn with_samples(mut self, samples: Option<usize>) -> CliResult<Self> {
        let Some(count) = samples else {
            return Ok(self);
        };
        match &mut self.dataset.source {
            DatasetSource::TwoGaussians { n, .. } | DatasetSource::Circles { n, .. } => *n = count,
            _ => {
                return Err(CliError::Config(
                    "--samples only applies to generated datasets".into(),
                ))
            }
        }
        Ok(self)
    }

    pub fn build(&self) -> CliResult<Problem> {
        self.train.validate()?;
        let mut dataset = match &self.dataset.source {
            DatasetSource::TwoGaussians {
                n,
                separation,
                seed,
            } => gen_two_gaussians(*n, *separation, seed.unwrap_or(self.train.seed))?,
            DatasetSource::Circles {
                n,
                r_in,
                r_out,
                noise,
                seed,
            } => gen_circles(*n, (*r_in, *r_out), *noise, seed.unwrap_or(self.train.seed))?,
            DatasetSource::Points { xs, labels, kind } => {
                Dataset::new(xs.clone(), labels.clone(), *kind)?
            }
            DatasetSource::File { path, kind } => {
                let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
                Dataset::read_csv(file, *kind)?
            }
        };
        for _ in 0..self.dataset.augment {
            dataset = augment_zero(&dataset);
        }
        let (d, n) = (dataset.d(), dataset.n());
        let dynamics = match self.dynamics.form {
            Form::InsideSigma => DynamicsSpec::inside(d, n, self.dynamics.activation)?,
            Form::OutsideSigma => DynamicsSpec::outside(d, n, self.dynamics.activation)?,
            Form::DriftlessAffine => DynamicsSpec::driftless(d, n, self.dynamics.fields.clone())?,
        };
        let output = self
            .objective
            .output
            .clone()
            .unwrap_or_else(|| OutputMap::identity(d));
        if output.d() != d {
            return Err(CliError::Config(format!(
                "objective.output reads {} coordinates but the dataset has d = {d}",
                output.d()
            )));
        }
        let objective = ObjectiveSpec::new(
            self.objective.loss,
            output,
            dataset.labels.clone(),
            self.objective.bound,
        )?
        .with_quadrature(self.objective.quadrature)
        .with_penalty_weight(self.objective.penalty_weight)?;
        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps)?;
        let x0 = dataset.stacked();
        Ok(Problem {
            dataset,
            dynamics,
            objective,
            grid,
            x0,
        })
    }

    pub fn dataset_generator(&self) -> serde_json::Value {
        serde_json::to_value(&self.dataset).unwrap_or(serde_json::Value::Null)
    }

    pub fn dataset_seed(&self) -> Option<u64> {
        match &self.dataset.source {
            DatasetSource::TwoGaussians { seed, .. } | DatasetSource::Circles { seed, .. } => *seed,
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REACH: &str = r#"{
        "dataset": {"generator": "points", "xs": [[0.0]], "labels": {"targets": [[1.0]]}, "kind": {"type": "regression", "m": 1}},
        "dynamics": {"form": "driftless", "fields": [{"a": [[0.0]], "c": [1.0]}]},
        "objective": {"loss": "least_squares", "M": 2.0},
        "grid": {"T": 4.0, "steps": 160}
    }"#;

    #[test]
    fn minimal_config_builds() {
        let cfg: RunConfig = serde_json::from_str(REACH).unwrap();
        let p = cfg.resolve(Some(3)).build().unwrap();
        assert_eq!(p.x0, vec![0.0]);
        assert_eq!(p.dynamics.control_dim(), 1);
        assert_eq!(p.objective.bound(), 2.0);
        assert_eq!(p.objective.penalty_weight(), 1.0);
        assert_eq!(p.grid.steps(), 160);
    }

    #[test]
    fn unknown_fields_are_rejected_by_name() {
        let bad = REACH.replace("\"M\": 2.0", "\"M\": 2.0, \"bogus\": 1");
        let err = serde_json::from_str::<RunConfig>(&bad)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn seeds_are_pinned_on_resolve() {
        let text = r#"{
            "dataset": {"generator": "circles", "n": 10, "r_in": 1.0, "r_out": 3.0, "noise": 0.1, "augment": 1},
            "dynamics": {"form": "inside", "activation": {"kind": "tanh"}},
            "objective": {"loss": "cross_entropy", "output": {"p": [[0,0,1],[0,0,-1]], "q": [0,0]}, "M": 8.0},
            "grid": {"T": 5.0, "steps": 15}
        }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        let cfg = cfg.resolve(Some(42));
        assert_eq!(cfg.dataset_seed(), Some(42));
        let p = cfg.build().unwrap();
        assert_eq!(p.dataset.d(), 3);
        assert_eq!(p.x0.len(), 30);
        let again: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn output_width_is_checked() {
        let bad = REACH.replace(
            "\"M\": 2.0",
            "\"M\": 2.0, \"output\": {\"p\": [[1.0, 0.0]], \"q\": [0.0]}",
        );
        let cfg: RunConfig = serde_json::from_str(&bad).unwrap();
        assert!(cfg.build().is_err());
    }
}
