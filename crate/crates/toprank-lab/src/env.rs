//! Click-model environments.
//!
//! An environment owns the item attractiveness vector `alpha`, the display
//! length `K`, and the examination behavior; it samples user clicks and
//! exposes the exact per-slot click probability `v(a, k)` used for regret
//! accounting. Items and slots are 0-based throughout the crate.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("alpha[{0}] = {1} outside [0, 1]")]
    InvalidAlpha(usize, f64),
    #[error("chi[{0}] = {1} outside [0, 1]")]
    InvalidChi(usize, f64),
    #[error("position-based model requires nonincreasing chi (chi[{0}] < chi[{1}])")]
    ChiNotMonotone(usize, usize),
    #[error("chi length {got} must equal K = {k}")]
    ChiLength { got: usize, k: usize },
    #[error("display length K = {k} must satisfy 1 <= K <= L = {l}")]
    InvalidK { k: usize, l: usize },
    #[error("order of length {got} is not a permutation of 0..{l}")]
    NotAPermutation { got: usize, l: usize },
    #[error("L = {0} too large for exhaustive enumeration (limit {1})")]
    EnumerationTooLarge(usize, usize),
}

/// Items with their attractiveness values and the display length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemCatalog {
    alphas: Vec<f64>,
    k: usize,
}

impl ItemCatalog {
    pub fn new(alphas: Vec<f64>, k: usize) -> Result<Self, EnvError> {
        for (i, &a) in alphas.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) || !a.is_finite() {
                return Err(EnvError::InvalidAlpha(i, a));
            }
        }
        if k == 0 || k > alphas.len() {
            return Err(EnvError::InvalidK {
                k,
                l: alphas.len(),
            });
        }
        Ok(ItemCatalog { alphas, k })
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn display_len(&self) -> usize {
        self.k
    }

    pub fn alpha(&self, item: usize) -> f64 {
        self.alphas[item]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Gap `Delta_ij = alpha(i) - alpha(j)`.
    pub fn gap(&self, i: usize, j: usize) -> f64 {
        self.alphas[i] - self.alphas[j]
    }

    /// True when `alpha` is strictly decreasing, i.e. the identity
    /// permutation is the unique optimal ranking.
    pub fn strictly_decreasing(&self) -> bool {
        self.alphas.windows(2).all(|w| w[0] > w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Sequential examination, stop at the first click.
    Cascade,
    /// Independent clicks with probability `alpha * chi(slot)`,
    /// `chi` nonincreasing.
    PositionBased,
    /// `alpha * chi(slot)` with arbitrary `chi` in `[0, 1]`.
    Factored,
}

/// A click model satisfying (or, for `Factored`, possibly violating)
/// the TopRank environment assumptions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClickModel {
    catalog: ItemCatalog,
    kind: ModelKind,
    /// Per-slot examination weights, length K. Empty for the cascade
    /// model, whose examination probabilities are derived.
    chi: Vec<f64>,
}

/// A slot-to-item bijection with its inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self, EnvError> {
        let l = order.len();
        let mut inverse = vec![usize::MAX; l];
        for (slot, &item) in order.iter().enumerate() {
            if item >= l || inverse[item] != usize::MAX {
                return Err(EnvError::NotAPermutation { got: l, l });
            }
            inverse[item] = slot;
        }
        Ok(Permutation { order, inverse })
    }

    pub fn identity(l: usize) -> Self {
        Permutation {
            order: (0..l).collect(),
            inverse: (0..l).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Item displayed at `slot`.
    pub fn item_at(&self, slot: usize) -> usize {
        self.order[slot]
    }

    /// Slot holding `item`.
    pub fn slot_of(&self, item: usize) -> usize {
        self.inverse[item]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The permutation with items `i` and `j` exchanged.
    pub fn swap_items(&self, i: usize, j: usize) -> Permutation {
        let mut order = self.order.clone();
        order.swap(self.inverse[i], self.inverse[j]);
        Permutation::new(order).expect("swap preserves bijection")
    }
}

/// Per-item click indicators for one round. Zero for undisplayed items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickVector {
    clicks: Vec<bool>,
}

impl ClickVector {
    pub fn clicked(&self, item: usize) -> bool {
        self.clicks[item]
    }

    pub fn count(&self) -> usize {
        self.clicks.iter().filter(|&&c| c).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.clicks
    }
}

impl ClickModel {
    pub fn cascade(catalog: ItemCatalog) -> Self {
        ClickModel {
            catalog,
            kind: ModelKind::Cascade,
            chi: Vec::new(),
        }
    }

    pub fn position_based(catalog: ItemCatalog, chi: Vec<f64>) -> Result<Self, EnvError> {
        Self::check_chi(&catalog, &chi)?;
        for w in 1..chi.len() {
            if chi[w] > chi[w - 1] {
                return Err(EnvError::ChiNotMonotone(w - 1, w));
            }
        }
        Ok(ClickModel {
            catalog,
            kind: ModelKind::PositionBased,
            chi,
        })
    }

    /// Factored model `v = alpha * chi` with no monotonicity requirement;
    /// may violate the environment assumptions (see [`check_assumptions`]).
    ///
    /// [`check_assumptions`]: ClickModel::check_assumptions
    pub fn factored(catalog: ItemCatalog, chi: Vec<f64>) -> Result<Self, EnvError> {
        Self::check_chi(&catalog, &chi)?;
        Ok(ClickModel {
            catalog,
            kind: ModelKind::Factored,
            chi,
        })
    }

    fn check_chi(catalog: &ItemCatalog, chi: &[f64]) -> Result<(), EnvError> {
        if chi.len() != catalog.display_len() {
            return Err(EnvError::ChiLength {
                got: chi.len(),
                k: catalog.display_len(),
            });
        }
        for (i, &x) in chi.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) || !x.is_finite() {
                return Err(EnvError::InvalidChi(i, x));
            }
        }
        Ok(())
    }

    pub fn catalog(&self) -> &ItemCatalog {
        &self.catalog
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn chi(&self) -> &[f64] {
        &self.chi
    }

    pub fn num_items(&self) -> usize {
        self.catalog.len()
    }

    pub fn display_len(&self) -> usize {
        self.catalog.display_len()
    }

    /// Exact click probability `v(a, k)` of slot `k` (0-based) under
    /// permutation `a`. Zero beyond the display length.
    pub fn click_prob(&self, a: &Permutation, k: usize) -> f64 {
        let big_k = self.catalog.display_len();
        if k >= big_k || k >= a.len() {
            return 0.0;
        }
        let alpha_k = self.catalog.alpha(a.item_at(k));
        match self.kind {
            ModelKind::Cascade => {
                let no_earlier_click: f64 = (0..k)
                    .map(|l| 1.0 - self.catalog.alpha(a.item_at(l)))
                    .product();
                alpha_k * no_earlier_click
            }
            ModelKind::PositionBased | ModelKind::Factored => alpha_k * self.chi[k],
        }
    }

    /// Samples one round of clicks. The cascade user examines slots in
    /// order, clicks each examined item with its attractiveness, and stops
    /// examining after the first click; position-based and factored users
    /// click each displayed slot independently. The marginal click
    /// probability of every slot equals [`click_prob`].
    ///
    /// [`click_prob`]: ClickModel::click_prob
    pub fn sample_clicks<R: Rng + ?Sized>(&self, a: &Permutation, rng: &mut R) -> ClickVector {
        let mut clicks = vec![false; self.catalog.len()];
        let big_k = self.catalog.display_len().min(a.len());
        match self.kind {
            ModelKind::Cascade => {
                for k in 0..big_k {
                    let item = a.item_at(k);
                    if rng.random::<f64>() < self.catalog.alpha(item) {
                        clicks[item] = true;
                        break;
                    }
                }
            }
            ModelKind::PositionBased | ModelKind::Factored => {
                for k in 0..big_k {
                    let item = a.item_at(k);
                    if rng.random::<f64>() < self.catalog.alpha(item) * self.chi[k] {
                        clicks[item] = true;
                    }
                }
            }
        }
        ClickVector { clicks }
    }

    /// Expected clicks of the optimal ranking, `sum_k v(a*, k)` with `a*`
    /// sorting items by attractiveness in decreasing order.
    pub fn optimal_value(&self) -> f64 {
        let a_star = self.optimal_permutation();
        (0..self.catalog.display_len())
            .map(|k| self.click_prob(&a_star, k))
            .sum()
    }

    /// A permutation sorting items by decreasing attractiveness
    /// (stable, so ties keep index order).
    pub fn optimal_permutation(&self) -> Permutation {
        let mut order: Vec<usize> = (0..self.catalog.len()).collect();
        order.sort_by(|&a, &b| {
            self.catalog
                .alpha(b)
                .partial_cmp(&self.catalog.alpha(a))
                .unwrap()
                .then(a.cmp(&b))
        });
        Permutation::new(order).expect("sort preserves bijection")
    }

    /// Expected clicks of an arbitrary permutation.
    pub fn list_value(&self, a: &Permutation) -> f64 {
        (0..self.catalog.display_len())
            .map(|k| self.click_prob(a, k))
            .sum()
    }

    /// Exhaustively verifies the four environment assumptions over all
    /// permutations; only feasible for small `L`.
    pub fn check_assumptions(&self, max_items: usize) -> Result<AssumptionReport, EnvError> {
        let l = self.catalog.len();
        if l > max_items || l > 9 {
            return Err(EnvError::EnumerationTooLarge(l, max_items.min(9)));
        }
        const TOL: f64 = 1e-12;
        let a_star = self.optimal_permutation();
        let opt_value = self.list_value(&a_star);
        let mut report = AssumptionReport::default();

        let mut order: Vec<usize> = (0..l).collect();
        permute_all(&mut order, 0, &mut |order| {
            let a = Permutation::new(order.to_vec()).unwrap();
            // Assumption 1: no clicks beyond the display length.
            for k in self.catalog.display_len()..l {
                if self.click_prob(&a, k) != 0.0 {
                    report.record(1, format!("v({:?}, {}) != 0", a.order(), k));
                }
            }
            // Assumption 2: a* maximizes the expected click count.
            let val = self.list_value(&a);
            if val > opt_value + TOL {
                report.record(
                    2,
                    format!("sum_k v({:?}) = {val} exceeds optimum {opt_value}", a.order()),
                );
            }
            // Assumption 3: swapping a better item i into j's place cannot
            // gain more than the attractiveness ratio.
            for i in 0..l {
                for j in 0..l {
                    if i == j {
                        continue;
                    }
                    let (ai, aj) = (self.catalog.alpha(i), self.catalog.alpha(j));
                    if ai < aj || aj <= 0.0 {
                        continue;
                    }
                    let swapped = a.swap_items(i, j);
                    let k = a.slot_of(i);
                    let lhs = self.click_prob(&a, k);
                    let rhs = ai / aj * self.click_prob(&swapped, k);
                    if lhs + TOL < rhs {
                        report.record(
                            3,
                            format!(
                                "a = {:?}, i = {i}, j = {j}: v = {lhs} < {rhs}",
                                a.order()
                            ),
                        );
                    }
                }
            }
            // Assumption 4: slots holding equally attractive items do at
            // least as well as under the optimal permutation.
            for k in 0..l {
                if (self.catalog.alpha(a.item_at(k)) - self.catalog.alpha(a_star.item_at(k)))
                    .abs()
                    < TOL
                    && self.click_prob(&a, k) + TOL < self.click_prob(&a_star, k)
                {
                    report.record(
                        4,
                        format!(
                            "a = {:?}, slot {k}: v = {} < optimal {}",
                            a.order(),
                            self.click_prob(&a, k),
                            self.click_prob(&a_star, k)
                        ),
                    );
                }
            }
        });
        Ok(report)
    }
}

/// Outcome of the exhaustive assumption check.
#[derive(Debug, Default, Clone, Serialize)]
pub struct AssumptionReport {
    pub violations: Vec<AssumptionViolation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionViolation {
    pub assumption: u8,
    pub detail: String,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_counterexample(&self) -> Option<&AssumptionViolation> {
        self.violations.first()
    }

    fn record(&mut self, assumption: u8, detail: String) {
        // Keep only the first counterexample per assumption.
        if !self.violations.iter().any(|v| v.assumption == assumption) {
            self.violations.push(AssumptionViolation { assumption, detail });
        }
    }
}

/// Visits every permutation of `items` in place.
pub(crate) fn permute_all<F: FnMut(&[usize])>(items: &mut Vec<usize>, k: usize, visit: &mut F) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute_all(items, k + 1, visit);
        items.swap(k, i);
    }
}
