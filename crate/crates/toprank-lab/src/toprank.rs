//! The TopRank loop: relation graph, block partition, randomized in-block
//! ordering, pairwise statistics, and boundary-gated edge additions.
//!
//! An edge `(u, w)` in the relation graph records accepted evidence that
//! item `w` is more attractive than item `u`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::boundary::ThresholdTable;
use crate::env::{ClickModel, ClickVector, Permutation};

#[derive(Debug, Error)]
pub enum TopRankError {
    #[error("cycle detected in relation graph: {0}")]
    CycleDetected(String),
    #[error("threshold table covers N < {needed}")]
    TableTooShort { needed: u64 },
    #[error("episode observer failed: {0}")]
    Observer(String),
}

/// The evolving DAG of accepted pairwise conclusions.
#[derive(Debug, Clone, Default)]
pub struct RelationGraph {
    l: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl RelationGraph {
    pub fn new(l: usize) -> Self {
        RelationGraph {
            l,
            edges: BTreeSet::new(),
        }
    }

    pub fn num_items(&self) -> usize {
        self.l
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// True when the pair is already connected in either orientation.
    pub fn related(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j)) || self.edges.contains(&(j, i))
    }

    /// Inserts without cycle checking; `update_graph` guards acyclicity.
    fn insert(&mut self, from: usize, to: usize) {
        debug_assert!(from != to);
        self.edges.insert((from, to));
    }
}

/// Ordered blocks of currently incomparable items covering `0..L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Half-open slot range `[start, end)` occupied by block `d`.
    pub fn slot_range(&self, d: usize) -> (usize, usize) {
        let start: usize = self.blocks[..d].iter().map(Vec::len).sum();
        (start, start + self.blocks[d].len())
    }

    /// Builds a partition from explicit blocks; used by the Monte-Carlo
    /// validators to pin a block structure. Blocks must be disjoint.
    pub fn from_blocks(blocks: Vec<Vec<usize>>) -> Self {
        BlockPartition { blocks }
    }
}

/// Iterated minimal elements of the residual graph (Kahn-style): block
/// `P_1` holds the items with no outgoing edge, `P_{d+1}` the items with no
/// outgoing edge once earlier blocks are removed.
pub fn partition_blocks(graph: &RelationGraph) -> Result<BlockPartition, TopRankError> {
    let l = graph.num_items();
    let mut remaining: Vec<bool> = vec![true; l];
    let mut left = l;
    let mut blocks = Vec::new();
    while left > 0 {
        let block: Vec<usize> = (0..l)
            .filter(|&i| {
                remaining[i]
                    && !graph
                        .edges()
                        .any(|(from, to)| from == i && remaining[to])
            })
            .collect();
        if block.is_empty() {
            return Err(TopRankError::CycleDetected(format!(
                "no minimal element among remaining items {:?}",
                (0..l).filter(|&i| remaining[i]).collect::<Vec<_>>()
            )));
        }
        for &i in &block {
            remaining[i] = false;
        }
        left -= block.len();
        blocks.push(block);
    }
    Ok(BlockPartition { blocks })
}

/// Concatenates the blocks in order, shuffling uniformly within each block.
pub fn propose_permutation<R: Rng + ?Sized>(
    blocks: &BlockPartition,
    rng: &mut R,
) -> Permutation {
    let mut order = Vec::new();
    for block in blocks.blocks() {
        let mut b = block.clone();
        b.shuffle(rng);
        order.extend(b);
    }
    Permutation::new(order).expect("blocks partition the items")
}

/// Pairwise click-difference evidence `S` and comparison counts `N`.
#[derive(Debug, Clone, Serialize)]
pub struct PairStats {
    l: usize,
    s: Vec<f64>,
    n: Vec<u64>,
    t: u64,
}

impl PairStats {
    pub fn new(l: usize) -> Self {
        PairStats {
            l,
            s: vec![0.0; l * l],
            n: vec![0; l * l],
            t: 0,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.l + j
    }

    pub fn s(&self, i: usize, j: usize) -> f64 {
        self.s[self.idx(i, j)]
    }

    pub fn n(&self, i: usize, j: usize) -> u64 {
        self.n[self.idx(i, j)]
    }

    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn num_items(&self) -> usize {
        self.l
    }

    /// Accumulates `U_{tij} = C_i - C_j` for same-block pairs and advances
    /// the round counter.
    pub fn update(&mut self, clicks: &ClickVector, blocks: &BlockPartition) {
        for block in blocks.blocks() {
            for (a, &i) in block.iter().enumerate() {
                for &j in &block[a + 1..] {
                    let u = clicks.clicked(i) as i8 - clicks.clicked(j) as i8;
                    if u != 0 {
                        let ij = self.idx(i, j);
                        let ji = self.idx(j, i);
                        self.s[ij] += u as f64;
                        self.s[ji] -= u as f64;
                        self.n[ij] += 1;
                        self.n[ji] += 1;
                    }
                }
            }
        }
        self.t += 1;
    }

    /// Debug invariant: `S` antisymmetric, `N` symmetric, `|S| <= N`.
    pub fn check_invariants(&self) -> bool {
        for i in 0..self.l {
            if self.s(i, i) != 0.0 || self.n(i, i) != 0 {
                return false;
            }
            for j in 0..i {
                if self.s(i, j) != -self.s(j, i)
                    || self.n(i, j) != self.n(j, i)
                    || self.s(i, j).abs() > self.n(i, j) as f64
                {
                    return false;
                }
            }
        }
        true
    }
}

/// Scans every unrelated pair and adds the edge `(j, i)` whenever
/// `S_ij >= threshold(N_ij)` with `N_ij > 0`. Returns the edges added this
/// round. Fails if the joint additions would create a cycle, which signals
/// that contradictory evidence crossed the boundary (a failure event).
pub fn update_graph(
    graph: &mut RelationGraph,
    stats: &PairStats,
    thresholds: &ThresholdTable,
) -> Result<Vec<(usize, usize)>, TopRankError> {
    let l = stats.num_items();
    let mut added = Vec::new();
    for i in 0..l {
        for j in 0..l {
            if i == j || graph.related(i, j) {
                continue;
            }
            let n = stats.n(i, j);
            if n > 0 && stats.s(i, j) >= thresholds.get(n) {
                added.push((j, i));
            }
        }
    }
    if added.is_empty() {
        return Ok(added);
    }
    let mut candidate = graph.clone();
    for &(from, to) in &added {
        candidate.insert(from, to);
    }
    partition_blocks(&candidate).map_err(|_| {
        TopRankError::CycleDetected(format!(
            "adding edges {added:?} to {:?} creates a cycle",
            graph.edges.iter().collect::<Vec<_>>()
        ))
    })?;
    *graph = candidate;
    Ok(added)
}

/// Everything the per-round observer gets to see. Statistics already
/// include the current round's update.
pub struct RoundContext<'a> {
    pub round: u64,
    pub blocks: &'a BlockPartition,
    pub permutation: &'a Permutation,
    pub clicks: &'a ClickVector,
    pub stats: &'a PairStats,
}

/// Per-round instrumentation hook; the Monte-Carlo validators use it to
/// track centered statistics inside live episodes.
pub trait EpisodeObserver {
    fn on_round(&mut self, ctx: &RoundContext<'_>) -> Result<(), String>;
}

impl EpisodeObserver for () {
    fn on_round(&mut self, _ctx: &RoundContext<'_>) -> Result<(), String> {
        Ok(())
    }
}

/// Per-round regret and instrumentation of one episode.
#[derive(Debug, Clone, Serialize)]
pub struct RegretTrace {
    /// `optimal_value - sum_k v(A_t, k)` per round.
    pub expected_increments: Vec<f64>,
    /// `optimal_value - realized click count` per round.
    pub realized_increments: Vec<f64>,
    /// Number of edges accepted each round.
    pub edges_added: Vec<u32>,
    /// First round at which the graph held an edge `(u, w)` with
    /// `alpha(u) > alpha(w)`, i.e. a wrong conclusion.
    pub wrong_edge_round: Option<u64>,
    /// Rounds violating the block-rank bound (most attractive item of
    /// block `d` ranked worse than `1 + sum of earlier block sizes`).
    /// Only tracked when `alpha` is strictly decreasing.
    pub rank_violations: u64,
    pub final_edges: Vec<(usize, usize)>,
    pub final_stats: PairStats,
}

impl RegretTrace {
    pub fn cumulative_expected(&self) -> f64 {
        self.expected_increments.iter().sum()
    }

    pub fn cumulative_realized(&self) -> f64 {
        self.realized_increments.iter().sum()
    }

    pub fn cumulative_curve(&self) -> Vec<f64> {
        self.expected_increments
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }

    pub fn wrong_edge(&self) -> bool {
        self.wrong_edge_round.is_some()
    }
}

/// Runs the full TopRank loop for `n` rounds. Regret accounting uses exact
/// expected increments via the click model; realized increments are also
/// recorded.
pub fn run_episode<R: Rng + ?Sized, O: EpisodeObserver>(
    model: &ClickModel,
    thresholds: &ThresholdTable,
    n: u64,
    rng: &mut R,
    observer: &mut O,
) -> Result<RegretTrace, TopRankError> {
    if (thresholds.len() as u64) < n + 1 {
        return Err(TopRankError::TableTooShort { needed: n });
    }
    let l = model.num_items();
    let optimal = model.optimal_value();
    let check_ranks = model.catalog().strictly_decreasing();

    let mut graph = RelationGraph::new(l);
    let mut stats = PairStats::new(l);
    let mut trace = RegretTrace {
        expected_increments: Vec::with_capacity(n as usize),
        realized_increments: Vec::with_capacity(n as usize),
        edges_added: Vec::with_capacity(n as usize),
        wrong_edge_round: None,
        rank_violations: 0,
        final_edges: Vec::new(),
        final_stats: PairStats::new(l),
    };

    for t in 1..=n {
        let blocks = partition_blocks(&graph)?;
        if check_ranks {
            // With alpha strictly decreasing, item index equals true rank.
            for d in 0..blocks.num_blocks() {
                let best = *blocks.blocks()[d].iter().min().unwrap();
                let (start, _) = blocks.slot_range(d);
                if best > start {
                    trace.rank_violations += 1;
                }
            }
        }
        let perm = propose_permutation(&blocks, rng);
        let clicks = model.sample_clicks(&perm, rng);
        stats.update(&clicks, &blocks);
        debug_assert!(stats.check_invariants());

        observer
            .on_round(&RoundContext {
                round: t,
                blocks: &blocks,
                permutation: &perm,
                clicks: &clicks,
                stats: &stats,
            })
            .map_err(TopRankError::Observer)?;

        let added = update_graph(&mut graph, &stats, thresholds)?;
        if trace.wrong_edge_round.is_none()
            && added
                .iter()
                .any(|&(u, w)| model.catalog().alpha(u) > model.catalog().alpha(w))
        {
            trace.wrong_edge_round = Some(t);
        }
        trace.edges_added.push(added.len() as u32);
        trace
            .expected_increments
            .push(optimal - model.list_value(&perm));
        trace
            .realized_increments
            .push(optimal - clicks.count() as f64);
    }
    trace.final_edges = graph.edges().collect();
    trace.final_stats = stats;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{BoundarySpec, BoundaryVariant};
    use crate::env::ItemCatalog;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn graph_with(l: usize, edges: &[(usize, usize)]) -> RelationGraph {
        let mut g = RelationGraph::new(l);
        for &(a, b) in edges {
            g.insert(a, b);
        }
        g
    }

    #[test]
    fn empty_graph_single_block() {
        let p = partition_blocks(&RelationGraph::new(3)).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1, 2]]);
    }

    #[test]
    fn two_blocks_from_two_edges() {
        // 1-based spec example: edges {(3,1),(4,2)} -> P1={1,2}, P2={3,4}
        let g = graph_with(4, &[(2, 0), (3, 1)]);
        let p = partition_blocks(&g).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(p.slot_range(1), (2, 4));
    }

    #[test]
    fn chain_gives_singletons() {
        let g = graph_with(3, &[(1, 0), (2, 1)]);
        let p = partition_blocks(&g).unwrap();
        assert_eq!(p.blocks(), &[vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn cycle_detected() {
        let g = graph_with(2, &[(0, 1), (1, 0)]);
        assert!(matches!(
            partition_blocks(&g),
            Err(TopRankError::CycleDetected(_))
        ));
    }

    #[test]
    fn propose_respects_block_order() {
        let blocks = BlockPartition::from_blocks(vec![vec![1], vec![0, 2]]);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = propose_permutation(&blocks, &mut rng);
            assert_eq!(p.item_at(0), 1);
        }
    }

    #[test]
    fn propose_uniform_within_block() {
        // chi-square over the 6 orders of a 3-item block
        let blocks = BlockPartition::from_blocks(vec![vec![0, 1, 2]]);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let draws = 60_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            let p = propose_permutation(&blocks, &mut rng);
            *counts.entry(p.order().to_vec()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expect = draws as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        // chi-square with 5 dof: 0.9999 quantile ~ 25.7
        assert!(chi2 < 25.7, "chi2 = {chi2}");
    }

    #[test]
    fn stats_update_same_block() {
        let blocks = BlockPartition::from_blocks(vec![vec![0, 1]]);
        let mut stats = PairStats::new(2);
        let model = ClickModel::cascade(ItemCatalog::new(vec![1.0, 0.0], 2).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let clicks = model.sample_clicks(&Permutation::identity(2), &mut rng);
        stats.update(&clicks, &blocks);
        assert_eq!(stats.s(0, 1), 1.0);
        assert_eq!(stats.s(1, 0), -1.0);
        assert_eq!(stats.n(0, 1), 1);
        assert_eq!(stats.round(), 1);
    }

    #[test]
    fn stats_no_update_across_blocks_or_equal_clicks() {
        let blocks = BlockPartition::from_blocks(vec![vec![0], vec![1]]);
        let mut stats = PairStats::new(2);
        let model = ClickModel::cascade(ItemCatalog::new(vec![1.0, 0.0], 2).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let clicks = model.sample_clicks(&Permutation::identity(2), &mut rng);
        stats.update(&clicks, &blocks);
        assert_eq!(stats.n(0, 1), 0);

        // same block, equal clicks cancel
        let blocks = BlockPartition::from_blocks(vec![vec![0, 1]]);
        let zero = ClickModel::cascade(ItemCatalog::new(vec![0.0, 0.0], 2).unwrap());
        let clicks = zero.sample_clicks(&Permutation::identity(2), &mut rng);
        stats.update(&clicks, &blocks);
        assert_eq!(stats.n(0, 1), 0);
        assert_eq!(stats.s(0, 1), 0.0);
    }

    #[test]
    fn update_graph_threshold_example() {
        // Baseline, delta = 0.01, N = 100: threshold ~ 40.29, so S = 41
        // adds the edge and S = 40 does not.
        let spec = BoundarySpec::new(BoundaryVariant::Baseline, 0.01).unwrap();
        let table = spec.threshold_table(100).unwrap();
        let mut stats = PairStats::new(2);
        stats.s[0 * 2 + 1] = 41.0;
        stats.s[1 * 2 + 0] = -41.0;
        stats.n[0 * 2 + 1] = 100;
        stats.n[1 * 2 + 0] = 100;
        let mut graph = RelationGraph::new(2);
        let added = update_graph(&mut graph, &stats, &table).unwrap();
        assert_eq!(added, vec![(1, 0)]);
        // already connected: skipped regardless of S
        stats.s[0 * 2 + 1] = 100.0;
        let added = update_graph(&mut graph, &stats, &table).unwrap();
        assert!(added.is_empty());
    }

    #[test]
    fn update_graph_no_edges_at_zero_s() {
        let spec = BoundarySpec::new(BoundaryVariant::Baseline, 0.01).unwrap();
        let table = spec.threshold_table(10).unwrap();
        let mut graph = RelationGraph::new(3);
        let stats = PairStats::new(3);
        assert!(update_graph(&mut graph, &stats, &table).unwrap().is_empty());
        assert_eq!(graph.num_edges(), 0);
    }

    #[test]
    fn single_item_zero_regret() {
        let model = ClickModel::cascade(ItemCatalog::new(vec![0.7], 1).unwrap());
        let spec = BoundarySpec::new(BoundaryVariant::Baseline, 0.05).unwrap();
        let table = spec.threshold_table(100).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let trace = run_episode(&model, &table, 100, &mut rng, &mut ()).unwrap();
        assert_eq!(trace.cumulative_expected(), 0.0);
    }

    #[test]
    fn equal_alphas_zero_expected_regret() {
        let model = ClickModel::position_based(
            ItemCatalog::new(vec![0.4, 0.4, 0.4], 2).unwrap(),
            vec![1.0, 0.5],
        )
        .unwrap();
        let spec = BoundarySpec::new(BoundaryVariant::Baseline, 0.05).unwrap();
        let table = spec.threshold_table(200).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let trace = run_episode(&model, &table, 200, &mut rng, &mut ()).unwrap();
        assert!(trace.cumulative_expected().abs() < 1e-9);
    }

    #[test]
    fn episode_learns_the_order() {
        let model = ClickModel::position_based(
            ItemCatalog::new(vec![0.9, 0.5, 0.1], 2).unwrap(),
            vec![1.0, 0.6],
        )
        .unwrap();
        let spec = BoundarySpec::new(BoundaryVariant::Baseline, 0.05).unwrap();
        let n = 3000;
        let table = spec.threshold_table(n).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let trace = run_episode(&model, &table, n, &mut rng, &mut ()).unwrap();
        assert!(!trace.wrong_edge());
        assert!(!trace.final_edges.is_empty(), "no edges learned");
        // late-round regret should be near zero once sorted
        let tail: f64 = trace.expected_increments[(n as usize - 100)..].iter().sum();
        assert!(tail < 1.0, "tail regret {tail}");
        assert_eq!(trace.rank_violations, 0);
    }
}
