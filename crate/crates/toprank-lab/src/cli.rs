//! Batch entry points behind the command-line interface. Every artifact
//! embeds the configuration and master seed that produced it, and all
//! output is canonicalized before writing so the bytes do not depend on
//! the thread count.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::boundary::{BoundaryError, BoundarySpec};
use crate::config::{ConfigError, ExperimentConfig, ProcessConfig, ValidateMode};
use crate::env::EnvError;
use crate::montecarlo::{
    failure_event_rate, simulate_crossing_times, CrossingReport, McError, SyntheticProcess,
};
use crate::seeding::derive_seed;
use crate::theory::{regret_bound_gapfree, regret_bound_gapped, BoundVariant, TheoryError};
use crate::toprank::{run_episode, RegretTrace, TopRankError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    TopRank(#[from] TopRankError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs `f` inside a dedicated rayon pool when a thread count is given.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub seed: u64,
    pub cumulative_expected_regret: f64,
    pub cumulative_realized_regret: f64,
    pub wrong_edge: bool,
    pub rank_violations: u64,
    pub edges: Vec<(usize, usize)>,
    pub final_s: Vec<Vec<f64>>,
    pub final_n: Vec<Vec<u64>>,
}

/// Runs the configured episodes and writes `regret.csv` plus
/// `summary.json` into `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
    threads: Option<usize>,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let model = cfg.model.build()?;
    let n = cfg.experiment.horizon;
    let resolved = cfg.boundary.build(n)?;
    let table = resolved.spec.threshold_table(n)?;
    let master = seed_override.unwrap_or(cfg.experiment.seed);
    let episodes = cfg.experiment.episodes;

    let traces: Result<Vec<RegretTrace>, CliError> = with_pool(threads, || {
        (0..episodes)
            .into_par_iter()
            .map(|ep| {
                let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(master, ep));
                Ok(run_episode(&model, &table, n, &mut rng, &mut ())?)
            })
            .collect()
    });
    let traces = traces?;

    // regret.csv, episodes in order
    let csv_path = out_dir.join("regret.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "episode",
        "t",
        "expected_regret_increment",
        "cumulative_regret",
        "edges_added",
        "wrong_edge_flag",
    ])?;
    for (ep, trace) in traces.iter().enumerate() {
        let mut cum = 0.0;
        for t in 0..trace.expected_increments.len() {
            cum += trace.expected_increments[t];
            let wrong = trace
                .wrong_edge_round
                .map(|r| (t as u64 + 1) >= r)
                .unwrap_or(false);
            w.write_record([
                ep.to_string(),
                (t + 1).to_string(),
                format!("{}", trace.expected_increments[t]),
                format!("{cum}"),
                trace.edges_added[t].to_string(),
                u8::from(wrong).to_string(),
            ])?;
        }
    }
    w.flush().map_err(io_err(&csv_path))?;

    // theory bounds at the same inputs
    let delta = resolved.effective_delta;
    let catalog = model.catalog();
    let mut bounds = serde_json::Map::new();
    bounds.insert(
        "gapfree_original".into(),
        json!(regret_bound_gapfree(
            catalog.display_len(),
            catalog.len(),
            n,
            delta,
            BoundVariant::Original
        )?),
    );
    if catalog.strictly_decreasing() {
        bounds.insert(
            "gapped_original".into(),
            json!(regret_bound_gapped(catalog, n, delta, BoundVariant::Original)?),
        );
    }
    let (c1, c2) = (
        cfg.boundary
            .c1
            .or(resolved.estimated_constants.as_ref().map(|e| e.c1)),
        cfg.boundary
            .c2
            .or(resolved.estimated_constants.as_ref().map(|e| e.c2)),
    );
    if let Some(c1) = c1 {
        bounds.insert(
            "gapfree_refined_c1".into(),
            json!(regret_bound_gapfree(
                catalog.display_len(),
                catalog.len(),
                n,
                delta,
                BoundVariant::RefinedC1 { c1 }
            )?),
        );
    }
    if let Some(c2) = c2 {
        bounds.insert(
            "gapfree_refined_c2".into(),
            json!(regret_bound_gapfree(
                catalog.display_len(),
                catalog.len(),
                n,
                delta,
                BoundVariant::RefinedC2 { c2 }
            )?),
        );
    }

    let episode_summaries: Vec<EpisodeSummary> = traces
        .iter()
        .enumerate()
        .map(|(ep, trace)| {
            let l = model.num_items();
            EpisodeSummary {
                episode: ep as u64,
                seed: derive_seed(master, ep as u64),
                cumulative_expected_regret: trace.cumulative_expected(),
                cumulative_realized_regret: trace.cumulative_realized(),
                wrong_edge: trace.wrong_edge(),
                rank_violations: trace.rank_violations,
                edges: trace.final_edges.clone(),
                final_s: (0..l)
                    .map(|i| (0..l).map(|j| trace.final_stats.s(i, j)).collect())
                    .collect(),
                final_n: (0..l)
                    .map(|i| (0..l).map(|j| trace.final_stats.n(i, j)).collect())
                    .collect(),
            }
        })
        .collect();
    let mut regrets: Vec<f64> = episode_summaries
        .iter()
        .map(|e| e.cumulative_expected_regret)
        .collect();
    regrets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = regrets.iter().sum::<f64>() / regrets.len().max(1) as f64;
    let median = regrets.get(regrets.len() / 2).copied().unwrap_or(0.0);

    let summary = json!({
        "config": cfg,
        "master_seed": master,
        "effective_delta": delta,
        "code_version": env!("CARGO_PKG_VERSION"),
        "estimated_constants": resolved.estimated_constants,
        "bounds": bounds,
        "aggregate": {
            "episodes": episodes,
            "mean_expected_regret": mean,
            "median_expected_regret": median,
            "wrong_edge_episodes": episode_summaries.iter().filter(|e| e.wrong_edge).count(),
        },
        "episodes": episode_summaries,
    });
    write_json(&out_dir.join("summary.json"), &summary)
}

/// Tabulates thresholds for the named specs over an `N` grid as CSV,
/// with a sibling metadata file recording the inputs.
pub fn boundary_table(
    specs: &[(String, BoundarySpec)],
    n_grid: &[u64],
    out_dir: &Path,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let csv_path = out_dir.join("boundary.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["variant", "delta", "N", "threshold"])?;
    for (name, spec) in specs {
        for &n in n_grid {
            w.write_record([
                name.clone(),
                format!("{}", spec.delta),
                n.to_string(),
                format!("{}", spec.threshold(n)?),
            ])?;
        }
    }
    w.flush().map_err(io_err(&csv_path))?;
    write_json(
        &out_dir.join("boundary_meta.json"),
        &json!({
            "specs": specs.iter().map(|(n, s)| json!({"name": n, "spec": s})).collect::<Vec<_>>(),
            "n_grid": n_grid,
            "code_version": env!("CARGO_PKG_VERSION"),
        }),
    )
}

/// Runs the configured empirical validation; returns whether the measured
/// frequency respected its probability bound (3 sigma rule).
pub fn run_validate(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
    threads: Option<usize>,
    trial_csv: bool,
) -> Result<bool, CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let vcfg = cfg.validate.as_ref().ok_or_else(|| {
        CliError::SelfCheck("config has no [validate] section".to_string())
    })?;
    let resolved = cfg.boundary.build(cfg.experiment.horizon)?;
    let master = seed_override.unwrap_or(cfg.experiment.seed);
    let report: CrossingReport = match vcfg.mode {
        ValidateMode::Crossing => {
            let horizon = vcfg.horizon.unwrap_or(cfg.experiment.horizon);
            let proc: SyntheticProcess = vcfg
                .process
                .clone()
                .unwrap_or(ProcessConfig::Constant { p: 1.0, mu: 0.0 })
                .build(horizon);
            let times = with_pool(threads, || {
                simulate_crossing_times(&proc, &resolved.spec, vcfg.trials, master)
            })?;
            if trial_csv {
                let csv_path = out_dir.join("crossings.csv");
                let mut w = csv::Writer::from_path(&csv_path)?;
                w.write_record(["trial", "first_crossing_round"])?;
                for (i, t) in times.iter().enumerate() {
                    w.write_record([
                        i.to_string(),
                        t.map(|t| t.to_string()).unwrap_or_default(),
                    ])?;
                }
                w.flush().map_err(io_err(&csv_path))?;
            }
            let crossings = times.iter().filter(|t| t.is_some()).count() as u64;
            CrossingReport::new(
                vcfg.trials,
                crossings,
                resolved.effective_delta,
                resolved.effective_delta,
            )
        }
        ValidateMode::FailureRate => {
            let model = cfg.model.build()?;
            with_pool(threads, || {
                failure_event_rate(
                    &model,
                    &resolved.spec,
                    cfg.experiment.horizon,
                    vcfg.trials,
                    master,
                )
            })?
        }
    };
    let passed = report.within(3.0);
    write_json(
        &out_dir.join("validate.json"),
        &json!({
            "config": cfg,
            "master_seed": master,
            "report": report,
            "passed_3_sigma": passed,
            "code_version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(passed)
}

/// Evaluates the three bound families over an `n` grid and writes
/// `bounds.csv`. `delta` is resolved at the configured horizon; missing
/// constants are estimated at that delta.
pub fn bounds_table(
    cfg: &ExperimentConfig,
    n_grid: &[u64],
    out_dir: &Path,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let model = cfg.model.build()?;
    let catalog = model.catalog();
    let delta = cfg.boundary.delta.resolve(cfg.experiment.horizon)?;
    let quadrature = cfg.boundary.quadrature.unwrap_or_default();
    let (c1, c2) = match (cfg.boundary.c1, cfg.boundary.c2) {
        (Some(c1), Some(c2)) => (c1, c2),
        (c1, c2) => {
            let est = crate::boundary::estimate_constants(
                delta,
                crate::config::DEFAULT_GRID_MIN,
                crate::config::DEFAULT_GRID_MAX,
                crate::config::DEFAULT_GRID_POINTS,
                &quadrature,
            )?;
            (c1.unwrap_or(est.c1), c2.unwrap_or(est.c2))
        }
    };
    let variants = [
        ("original", BoundVariant::Original),
        ("refined_c1", BoundVariant::RefinedC1 { c1 }),
        ("refined_c2", BoundVariant::RefinedC2 { c2 }),
    ];
    let csv_path = out_dir.join("bounds.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["n", "variant", "gapfree_bound", "gapped_bound"])?;
    let gapped_ok = catalog.strictly_decreasing();
    for &n in n_grid {
        for (name, variant) in &variants {
            let gapfree = regret_bound_gapfree(
                catalog.display_len(),
                catalog.len(),
                n,
                delta,
                *variant,
            )?;
            let gapped = if gapped_ok {
                format!("{}", regret_bound_gapped(catalog, n, delta, *variant)?)
            } else {
                String::new()
            };
            w.write_record([
                n.to_string(),
                name.to_string(),
                format!("{gapfree}"),
                gapped,
            ])?;
        }
    }
    w.flush().map_err(io_err(&csv_path))?;
    write_json(
        &out_dir.join("bounds_meta.json"),
        &json!({
            "config": cfg,
            "delta": delta,
            "c1": c1,
            "c2": c2,
            "n_grid": n_grid,
            "code_version": env!("CARGO_PKG_VERSION"),
        }),
    )
}

/// Estimates C0/C1/C2 over a log-spaced grid and writes `constants.json`.
pub fn constants_report(
    delta: f64,
    v_min: f64,
    v_max: f64,
    points: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let est = crate::boundary::estimate_constants(
        delta,
        v_min,
        v_max,
        points,
        &crate::boundary::QuadratureParams::default(),
    )?;
    write_json(
        &out_dir.join("constants.json"),
        &json!({
            "estimate": est,
            "note": "empirical grid-sup envelope; valid on [v_min, v_max] only",
            "code_version": env!("CARGO_PKG_VERSION"),
        }),
    )
}

/// Exhaustive assumption check for the configured model; returns pass/fail.
pub fn assumptions_report(cfg: &ExperimentConfig, out_dir: &Path) -> Result<bool, CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let model = cfg.model.build()?;
    let report = model.check_assumptions(7)?;
    let passed = report.passed();
    write_json(
        &out_dir.join("assumptions.json"),
        &json!({
            "config": cfg,
            "passed": passed,
            "violations": report.violations,
            "code_version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(passed)
}
