//! Empirical validation of the probability claims: boundary-crossing
//! frequency of centered adapted processes, the failure-event rate inside
//! live algorithm episodes, and conditional-mean bounds for same-block
//! pairs.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};
use thiserror::Error;

use crate::boundary::{BoundaryError, BoundarySpec, ThresholdTable};
use crate::env::{ClickModel, ModelKind};
use crate::seeding::derive_seed;
use crate::toprank::{
    propose_permutation, run_episode, BlockPartition, EpisodeObserver, RoundContext,
    TopRankError,
};

#[derive(Debug, Error)]
pub enum McError {
    #[error("block of size {0} too large for exact enumeration (limit {1})")]
    EnumerationTooLarge(usize, usize),
    #[error("no nonzero comparison occurred within the sample budget")]
    DegenerateConditioning,
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    TopRank(#[from] TopRankError),
}

/// Hard cap on exact enumeration of within-block orderings.
pub const MAX_ENUM_BLOCK: usize = 8;

// ---------------------------------------------------------------------------
// Synthetic adapted processes
// ---------------------------------------------------------------------------

/// How the per-step nonzero probability `p_t` and conditional mean `mu_t`
/// evolve.
#[derive(Debug, Clone, Serialize)]
pub enum ProcessSchedule {
    Constant { p: f64, mu: f64 },
    PerStep { p: Vec<f64>, mu: Vec<f64> },
    /// Adversarial adapted schedule: the conditional mean points along the
    /// current sign of `S`, so the centering term always fights the walk.
    AdaptiveSignFlip { p: f64, mu_mag: f64 },
}

/// An adapted `{-1, 0, 1}` process: `X_t = 0` with probability `1 - p_t`,
/// otherwise `+-1` with conditional mean `mu_t`. The centered statistic is
/// `S_t = sum (X_s - mu_s |X_s|)` with count `N_t = sum |X_s|`.
#[derive(Debug, Clone, Serialize)]
pub struct SyntheticProcess {
    pub horizon: u64,
    pub schedule: ProcessSchedule,
}

impl SyntheticProcess {
    pub fn fair_walk(horizon: u64) -> Self {
        SyntheticProcess {
            horizon,
            schedule: ProcessSchedule::Constant { p: 1.0, mu: 0.0 },
        }
    }

    pub fn constant(horizon: u64, p: f64, mu: f64) -> Self {
        SyntheticProcess {
            horizon,
            schedule: ProcessSchedule::Constant { p, mu },
        }
    }

    fn step_params(&self, t: u64, s: f64) -> (f64, f64) {
        match &self.schedule {
            ProcessSchedule::Constant { p, mu } => (*p, *mu),
            ProcessSchedule::PerStep { p, mu } => {
                let i = (t as usize - 1).min(p.len() - 1);
                (p[i], mu[(t as usize - 1).min(mu.len() - 1)])
            }
            ProcessSchedule::AdaptiveSignFlip { p, mu_mag } => {
                let mu = if s > 0.0 {
                    *mu_mag
                } else if s < 0.0 {
                    -*mu_mag
                } else {
                    0.0
                };
                (*p, mu)
            }
        }
    }
}

/// Crossing / failure frequency with an exact binomial 95% interval.
#[derive(Debug, Clone, Serialize)]
pub struct CrossingReport {
    pub trials: u64,
    pub crossings: u64,
    pub frequency: f64,
    pub delta: f64,
    /// The probability bound the frequency is compared against
    /// (`delta` for crossings, `delta L^2` for failure events).
    pub bound: f64,
    /// True when the bound is >= 1 and therefore vacuous.
    pub vacuous: bool,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CrossingReport {
    pub fn new(trials: u64, crossings: u64, delta: f64, bound: f64) -> Self {
        let (ci_low, ci_high) = clopper_pearson(crossings, trials, 0.95);
        CrossingReport {
            trials,
            crossings,
            frequency: crossings as f64 / trials as f64,
            delta,
            bound,
            vacuous: bound >= 1.0,
            ci_low,
            ci_high,
        }
    }

    /// Bound plus `sigmas` binomial standard errors at the bound.
    pub fn tolerance(&self, sigmas: f64) -> f64 {
        let b = self.bound.min(1.0);
        b + sigmas * (b * (1.0 - b) / self.trials as f64).sqrt()
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.vacuous || self.frequency <= self.tolerance(sigmas)
    }
}

/// Exact (Clopper-Pearson) binomial confidence interval.
pub fn clopper_pearson(successes: u64, trials: u64, level: f64) -> (f64, f64) {
    let a = (1.0 - level) / 2.0;
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).unwrap().inverse_cdf(a)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).unwrap().inverse_cdf(1.0 - a)
    };
    (lo, hi)
}

/// Simulates the centered process and counts how many trials ever cross the
/// boundary `|S_t| >= threshold(N_t)` with `N_t > 0`. Trials run in
/// parallel from per-trial derived seeds, so the result is independent of
/// the thread count.
pub fn simulate_crossing(
    proc: &SyntheticProcess,
    spec: &BoundarySpec,
    trials: u64,
    master_seed: u64,
) -> Result<CrossingReport, McError> {
    let times = simulate_crossing_times(proc, spec, trials, master_seed)?;
    let crossings = times.iter().filter(|t| t.is_some()).count() as u64;
    Ok(CrossingReport::new(trials, crossings, spec.delta, spec.delta))
}

/// Per-trial first crossing round (`None` when the trial never crossed).
pub fn simulate_crossing_times(
    proc: &SyntheticProcess,
    spec: &BoundarySpec,
    trials: u64,
    master_seed: u64,
) -> Result<Vec<Option<u64>>, McError> {
    let table = spec.threshold_table(proc.horizon)?;
    Ok(simulate_crossing_times_with_table(
        proc,
        &table,
        trials,
        master_seed,
    ))
}

/// As [`simulate_crossing_times`] but reusing a prebuilt threshold table,
/// for sweeps that pit one (possibly expensive) boundary against several
/// processes.
pub fn simulate_crossing_times_with_table(
    proc: &SyntheticProcess,
    table: &ThresholdTable,
    trials: u64,
    master_seed: u64,
) -> Vec<Option<u64>> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(master_seed, trial));
            first_crossing(proc, table, &mut rng)
        })
        .collect()
}

fn first_crossing<R: Rng + ?Sized>(
    proc: &SyntheticProcess,
    table: &ThresholdTable,
    rng: &mut R,
) -> Option<u64> {
    let mut s = 0.0_f64;
    let mut n = 0u64;
    for t in 1..=proc.horizon {
        let (p, mu) = proc.step_params(t, s);
        if rng.random::<f64>() >= p {
            continue;
        }
        let x = if rng.random::<f64>() < (1.0 + mu) / 2.0 {
            1.0
        } else {
            -1.0
        };
        s += x - mu;
        n += 1;
        if s.abs() >= table.get(n) {
            return Some(t);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Exact conditional means for same-block pairs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct MeanKey {
    block: Vec<usize>,
    start_slot: usize,
    /// Items displayed ahead of the block (cascade prefix); bitmask over
    /// items, empty for position-based models.
    earlier: u64,
    i: usize,
    j: usize,
}

/// Exact `E[U_ij | U_ij != 0]` and `Pr(U_ij != 0)` for items `i, j` inside
/// block `d` of the given partition, by enumeration over the uniformly
/// random within-block order and the click model. `None` when the pair can
/// never produce a nonzero comparison (e.g. the block sits entirely beyond
/// the display length).
pub fn exact_pair_bias(
    model: &ClickModel,
    blocks: &BlockPartition,
    d: usize,
    i: usize,
    j: usize,
) -> Result<Option<(f64, f64)>, McError> {
    let block = &blocks.blocks()[d];
    if block.len() > MAX_ENUM_BLOCK {
        return Err(McError::EnumerationTooLarge(block.len(), MAX_ENUM_BLOCK));
    }
    let (start, _) = blocks.slot_range(d);
    let big_k = model.display_len();
    let cat = model.catalog();

    // Cascade examination survives every earlier displayed item; blocks
    // ahead of this one occupy slots < start, all displayed when start < K.
    let prefix: f64 = if model.kind() == ModelKind::Cascade {
        blocks.blocks()[..d]
            .iter()
            .flatten()
            .map(|&x| 1.0 - cat.alpha(x))
            .product()
    } else {
        1.0
    };

    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0u64;
    let mut order = block.clone();
    crate::env::permute_all(&mut order, 0, &mut |order| {
        count += 1;
        let mut p_i = 0.0;
        let mut p_j = 0.0;
        match model.kind() {
            ModelKind::Cascade => {
                let mut running = prefix;
                for (pos, &x) in order.iter().enumerate() {
                    let slot = start + pos;
                    if slot >= big_k {
                        break;
                    }
                    let p_click = cat.alpha(x) * running;
                    if x == i {
                        p_i = p_click;
                    } else if x == j {
                        p_j = p_click;
                    }
                    running *= 1.0 - cat.alpha(x);
                }
                // at most one click per round: U != 0 iff exactly one of
                // i, j is clicked
                num += p_i - p_j;
                den += p_i + p_j;
            }
            ModelKind::PositionBased | ModelKind::Factored => {
                for (pos, &x) in order.iter().enumerate() {
                    let slot = start + pos;
                    if slot >= big_k {
                        break;
                    }
                    let p_click = cat.alpha(x) * model.chi()[slot];
                    if x == i {
                        p_i = p_click;
                    } else if x == j {
                        p_j = p_click;
                    }
                }
                // independent clicks
                num += p_i * (1.0 - p_j) - p_j * (1.0 - p_i);
                den += p_i + p_j - 2.0 * p_i * p_j;
            }
        }
    });
    let m = count as f64;
    let (num, den) = (num / m, den / m);
    if den <= 0.0 {
        return Ok(None);
    }
    Ok(Some((num / den, den)))
}

/// Monte-Carlo estimate of the same-block conditional means, with the block
/// structure held fixed.
#[derive(Debug, Clone, Serialize)]
pub struct PairBiasEstimate {
    pub mean_ij: f64,
    pub mean_ji: f64,
    /// Standard error of the conditional mean.
    pub stderr: f64,
    pub nonzero_count: u64,
    pub samples: u64,
}

pub fn estimate_pair_bias<R: Rng + ?Sized>(
    model: &ClickModel,
    blocks: &BlockPartition,
    i: usize,
    j: usize,
    samples: u64,
    rng: &mut R,
) -> Result<PairBiasEstimate, McError> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0u64;
    for _ in 0..samples {
        let perm = propose_permutation(blocks, rng);
        let clicks = model.sample_clicks(&perm, rng);
        let u = clicks.clicked(i) as i8 - clicks.clicked(j) as i8;
        if u != 0 {
            sum += u as f64;
            sum_sq += 1.0;
            count += 1;
        }
    }
    if count == 0 {
        return Err(McError::DegenerateConditioning);
    }
    let mean = sum / count as f64;
    let var = (sum_sq / count as f64 - mean * mean).max(0.0);
    Ok(PairBiasEstimate {
        mean_ij: mean,
        mean_ji: -mean,
        stderr: (var / count as f64).sqrt(),
        nonzero_count: count,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Failure events inside live episodes
// ---------------------------------------------------------------------------

/// Tracks the centered per-pair statistic
/// `S_ij - sum_u E[U_ij | U_ij != 0] |U_ij|` during an episode and records
/// whether any pair ever crossed the boundary.
struct FailureObserver<'a> {
    model: &'a ClickModel,
    table: &'a ThresholdTable,
    centering: Vec<f64>,
    cache: HashMap<MeanKey, Option<(f64, f64)>>,
    failed: bool,
}

impl<'a> FailureObserver<'a> {
    fn new(model: &'a ClickModel, table: &'a ThresholdTable) -> Self {
        let l = model.num_items();
        FailureObserver {
            model,
            table,
            centering: vec![0.0; l * l],
            cache: HashMap::new(),
            failed: false,
        }
    }
}

impl EpisodeObserver for FailureObserver<'_> {
    fn on_round(&mut self, ctx: &RoundContext<'_>) -> Result<(), String> {
        let l = self.model.num_items();
        for d in 0..ctx.blocks.num_blocks() {
            let block = &ctx.blocks.blocks()[d];
            let (start, _) = ctx.blocks.slot_range(d);
            let earlier: u64 = ctx.blocks.blocks()[..d]
                .iter()
                .flatten()
                .fold(0u64, |m, &x| m | (1 << x));
            for (a, &i) in block.iter().enumerate() {
                for &j in &block[a + 1..] {
                    let u = ctx.clicks.clicked(i) as i8 - ctx.clicks.clicked(j) as i8;
                    if u != 0 {
                        let key = MeanKey {
                            block: block.clone(),
                            start_slot: start,
                            earlier: if self.model.kind() == ModelKind::Cascade {
                                earlier
                            } else {
                                0
                            },
                            i,
                            j,
                        };
                        let bias = match self.cache.get(&key) {
                            Some(b) => *b,
                            None => {
                                let b = exact_pair_bias(self.model, ctx.blocks, d, i, j)
                                    .map_err(|e| e.to_string())?;
                                self.cache.insert(key, b);
                                b
                            }
                        };
                        let mu = bias
                            .ok_or_else(|| {
                                "nonzero comparison from a zero-probability pair".to_string()
                            })?
                            .0;
                        self.centering[i * l + j] += mu;
                        self.centering[j * l + i] -= mu;
                    }
                    let n = ctx.stats.n(i, j);
                    if n > 0 {
                        let centered = ctx.stats.s(i, j) - self.centering[i * l + j];
                        if centered.abs() >= self.table.get(n) {
                            self.failed = true;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs full algorithm episodes and reports the fraction in which any
/// pair's centered statistic crossed the boundary; to be compared with
/// `delta L^2`. Episodes run in parallel from derived seeds.
pub fn failure_event_rate(
    model: &ClickModel,
    spec: &BoundarySpec,
    n: u64,
    episodes: u64,
    master_seed: u64,
) -> Result<CrossingReport, McError> {
    let largest_block = model.num_items();
    if largest_block > MAX_ENUM_BLOCK {
        return Err(McError::EnumerationTooLarge(largest_block, MAX_ENUM_BLOCK));
    }
    let table = spec.threshold_table(n)?;
    let results: Result<Vec<bool>, McError> = (0..episodes)
        .into_par_iter()
        .map(|ep| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(master_seed, ep));
            let mut obs = FailureObserver::new(model, &table);
            run_episode(model, &table, n, &mut rng, &mut obs)?;
            Ok(obs.failed)
        })
        .collect();
    let failures = results?.into_iter().filter(|&f| f).count() as u64;
    let l = model.num_items() as f64;
    Ok(CrossingReport::new(
        episodes,
        failures,
        spec.delta,
        spec.delta * l * l,
    ))
}

/// Fraction of independent episodes containing at least one wrong edge,
/// plus clean-episode rank/statistic violations; the empirical face of the
/// graph-correctness guarantees.
#[derive(Debug, Clone, Serialize)]
pub struct WrongEdgeReport {
    pub episodes: u64,
    pub wrong_edge_episodes: u64,
    pub clean_episodes: u64,
    pub rank_violations_in_clean: u64,
    pub delta: f64,
    pub bound: f64,
}

/// Runs independent episodes and counts wrong-edge events and, within
/// clean episodes, rank-bound violations.
pub fn wrong_edge_rate(
    model: &ClickModel,
    spec: &BoundarySpec,
    n: u64,
    episodes: u64,
    master_seed: u64,
) -> Result<WrongEdgeReport, McError> {
    let table = spec.threshold_table(n)?;
    let traces: Result<Vec<(bool, u64)>, McError> = (0..episodes)
        .into_par_iter()
        .map(|ep| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(master_seed, ep));
            let trace = run_episode(model, &table, n, &mut rng, &mut ())?;
            Ok((trace.wrong_edge(), trace.rank_violations))
        })
        .collect();
    let traces = traces?;
    let wrong = traces.iter().filter(|(w, _)| *w).count() as u64;
    let rank_violations = traces
        .iter()
        .filter(|(w, _)| !*w)
        .map(|(_, v)| *v)
        .sum::<u64>();
    let l = model.num_items() as f64;
    Ok(WrongEdgeReport {
        episodes,
        wrong_edge_episodes: wrong,
        clean_episodes: episodes - wrong,
        rank_violations_in_clean: rank_violations,
        delta: spec.delta,
        bound: spec.delta * l * l,
    })
}
