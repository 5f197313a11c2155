//! Experiment runner behind the `sparse-node` binary.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod plot;
pub mod run;
pub mod sweep;
pub mod verify;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sparse_node::SparsityReport;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

/// Result of re-deriving a run's analysis from its directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reanalysis {
    pub report: SparsityReport,
    pub summary: run::Summary,
    /// Whether `T*`, its index and `E(T*)` agree with the stored report.
    pub matches_stored: bool,
}

pub fn analyze_run(dir: &Path) -> CliResult<Reanalysis> {
    let (report, summary) = run::reanalyse(dir)?;
    let stored: Option<SparsityReport> = run::read_json(&dir.join("report.json")).ok();
    let matches_stored = stored.is_some_and(|s| {
        s.idx == report.idx
            && s.tstar == report.tstar
            && (s.error_at_tstar - report.error_at_tstar).abs()
                <= 1e-12 * (1.0 + s.error_at_tstar.abs())
    });
    let out = Reanalysis {
        report,
        summary,
        matches_stored,
    };
    run::write_json(&dir.join("analysis.json"), &out)?;
    Ok(out)
}
