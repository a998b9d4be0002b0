//! Command-line front end: experiment runs, boundary tables, empirical
//! validation, regret bounds, constant estimation, and assumption checks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use toprank_lab::boundary::{estimate_constants, BoundarySpec, BoundaryVariant};
use toprank_lab::cli::{
    assumptions_report, boundary_table, bounds_table, constants_report, run_experiment,
    run_validate, CliError,
};
use toprank_lab::config::{ExperimentConfig, DEFAULT_GRID_MAX, DEFAULT_GRID_MIN, DEFAULT_GRID_POINTS};

#[derive(Parser)]
#[command(name = "toprank-lab", version, about = "Online learning-to-rank laboratory")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: config `out_dir`, then `./out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured episodes; writes regret.csv and summary.json.
    Run,
    /// Tabulate thresholds of all four boundary variants at the configured
    /// delta; writes boundary.csv.
    Boundary {
        /// Number of log-spaced N values (from 1 to the horizon).
        #[arg(long, default_value_t = 40)]
        grid_points: usize,
    },
    /// Empirical crossing-frequency or failure-rate check; writes
    /// validate.json. Exits nonzero when the measured frequency exceeds
    /// its bound by more than three standard errors.
    Validate {
        /// Also write per-trial first crossing rounds to crossings.csv.
        #[arg(long)]
        trial_csv: bool,
    },
    /// Evaluate the regret-bound families over an n grid; writes bounds.csv.
    Bounds {
        #[arg(long, default_value_t = 25)]
        grid_points: usize,
        /// Largest n (default: configured horizon).
        #[arg(long)]
        n_max: Option<u64>,
    },
    /// Estimate the envelope constants over a log-spaced grid; writes
    /// constants.json.
    Constants {
        /// Confidence parameter (default: resolved from the config).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_GRID_MIN)]
        v_min: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_MAX)]
        v_max: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
    },
    /// Exhaustively check the environment assumptions for the configured
    /// model; writes assumptions.json and exits nonzero on violation.
    Assumptions,
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    let path = path
        .as_deref()
        .ok_or_else(|| CliError::SelfCheck("--config is required for this command".into()))?;
    Ok(ExperimentConfig::from_path(path)?)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.experiment.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Log-spaced integer grid over `[lo, hi]`, deduplicated.
fn int_log_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut grid: Vec<u64> = (0..points)
        .map(|i| {
            let t = if points > 1 {
                i as f64 / (points - 1) as f64
            } else {
                0.0
            };
            (a + t * (b - a)).exp().round() as u64
        })
        .collect();
    grid.dedup();
    grid
}

fn real_main(cli: &Cli) -> Result<bool, CliError> {
    match &cli.command {
        Command::Run => {
            let cfg = load_config(&cli.config)?;
            let out = out_dir(cli, Some(&cfg));
            run_experiment(&cfg, &out, cli.seed, cli.threads)?;
            eprintln!("wrote {}", out.join("regret.csv").display());
            Ok(true)
        }
        Command::Boundary { grid_points } => {
            let cfg = load_config(&cli.config)?;
            let out = out_dir(cli, Some(&cfg));
            let horizon = cfg.experiment.horizon;
            let delta = cfg.boundary.delta.resolve(horizon)?;
            let quadrature = cfg.boundary.quadrature.unwrap_or_default();
            let (c1, c2) = match (cfg.boundary.c1, cfg.boundary.c2) {
                (Some(c1), Some(c2)) => (c1, c2),
                (c1, c2) => {
                    let est = estimate_constants(
                        delta,
                        DEFAULT_GRID_MIN,
                        DEFAULT_GRID_MAX,
                        DEFAULT_GRID_POINTS,
                        &quadrature,
                    )?;
                    (c1.unwrap_or(est.c1), c2.unwrap_or(est.c2))
                }
            };
            let n_min = cfg.boundary.n_min;
            let mut specs = Vec::new();
            for (name, variant) in [
                ("baseline", BoundaryVariant::Baseline),
                ("mixture_exact", BoundaryVariant::MixtureExact),
                ("asymptotic_c1", BoundaryVariant::AsymptoticC1 { c1, n_min }),
                ("simple_lil", BoundaryVariant::SimpleLIL { c2, n_min }),
            ] {
                let mut spec = BoundarySpec::new(variant, delta)?;
                spec.quadrature = quadrature;
                specs.push((name.to_string(), spec));
            }
            let grid = int_log_grid(1, horizon, *grid_points);
            boundary_table(&specs, &grid, &out)?;
            eprintln!("wrote {}", out.join("boundary.csv").display());
            Ok(true)
        }
        Command::Validate { trial_csv } => {
            let cfg = load_config(&cli.config)?;
            let out = out_dir(cli, Some(&cfg));
            let passed = run_validate(&cfg, &out, cli.seed, cli.threads, *trial_csv)?;
            eprintln!(
                "wrote {} ({})",
                out.join("validate.json").display(),
                if passed { "within bound" } else { "EXCEEDS bound" }
            );
            Ok(passed)
        }
        Command::Bounds { grid_points, n_max } => {
            let cfg = load_config(&cli.config)?;
            let out = out_dir(cli, Some(&cfg));
            let hi = n_max.unwrap_or(cfg.experiment.horizon);
            // refined variants need n above e^e; start the grid at 16
            let grid = int_log_grid(16, hi.max(16), *grid_points);
            bounds_table(&cfg, &grid, &out)?;
            eprintln!("wrote {}", out.join("bounds.csv").display());
            Ok(true)
        }
        Command::Constants {
            delta,
            v_min,
            v_max,
            points,
        } => {
            let (delta, cfg) = match delta {
                Some(d) => (*d, None),
                None => {
                    let cfg = load_config(&cli.config)?;
                    (cfg.boundary.delta.resolve(cfg.experiment.horizon)?, Some(cfg))
                }
            };
            let out = out_dir(cli, cfg.as_ref());
            constants_report(delta, *v_min, *v_max, *points, &out)?;
            eprintln!("wrote {}", out.join("constants.json").display());
            Ok(true)
        }
        Command::Assumptions => {
            let cfg = load_config(&cli.config)?;
            let out = out_dir(cli, Some(&cfg));
            let passed = assumptions_report(&cfg, &out)?;
            eprintln!(
                "wrote {} ({})",
                out.join("assumptions.json").display(),
                if passed { "all assumptions hold" } else { "VIOLATIONS found" }
            );
            Ok(passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
