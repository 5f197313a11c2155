use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparse_node_cli::sweep::{run_sweep, Axis};
use sparse_node_cli::verify::{run_suite, Suite};
use sparse_node_cli::{analyze_run, plot, run, CliResult, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "sparse-node",
    version,
    about = "Train and analyse L1-penalised neural ODE controls"
)]
struct Cli {
    /// Overrides the training seed (and the dataset seed when the config leaves it unset).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Sample count for generated datasets (e.g. 3000 for the full-size experiment).
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one config and write a run directory.
    Train { config: PathBuf },
    /// One run per axis value, e.g. `--axis T=1,2,4,8` or `--axis M=2,4,8,16`.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: Axis,
    },
    /// Run a property suite: scaling, gradient, projection, improvement, homogeneity.
    Verify { suite: Suite },
    /// Write SVG figures for a run or sweep directory.
    Plot { dir: PathBuf },
    /// Recompute the analysis of a run or sweep directory.
    Analyze { dir: PathBuf },
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?
                .resolve(cli.seed)
                .with_samples(cli.samples)?;
            let dir = cli
                .out
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(stem(&config)));
            let outcome = run::run_config(&cfg, &dir)?;
            eprintln!("wrote {}", outcome.dir.display());
            print_json(&outcome.summary)
        }
        Command::Sweep { config, axis } => {
            let cfg = RunConfig::load(&config)?
                .resolve(cli.seed)
                .with_samples(cli.samples)?;
            let name = match &axis {
                Axis::T(_) => "sweep-T",
                Axis::M(_) => "sweep-M",
            };
            let dir = cli
                .out
                .or_else(|| cfg.out.as_ref().map(|o| o.join(name)))
                .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{name}", stem(&config))));
            let summary = run_sweep(&cfg, &axis, &dir, cli.jobs)?;
            for r in summary.runs.iter().filter(|r| !r.ok) {
                eprintln!(
                    "run {} failed: {}",
                    r.value,
                    r.error.as_deref().unwrap_or("unknown error")
                );
            }
            eprintln!("wrote {}", dir.display());
            print_json(&summary.table)
        }
        Command::Verify { suite } => {
            let report = run_suite(suite, cli.seed.unwrap_or(0))?;
            print_json(&report)?;
            report.into_result().map(|_| ())
        }
        Command::Plot { dir } => {
            for p in plot::plot_dir(&dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Analyze { dir } => {
            if dir.join("sweep.json").is_file() {
                print_json(&sparse_node_cli::sweep::reanalyse_sweep(&dir)?)
            } else {
                print_json(&analyze_run(&dir)?)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
