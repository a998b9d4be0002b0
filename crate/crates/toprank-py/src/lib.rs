//! Python bindings: click models, confidence boundaries, the algorithm
//! loop, regret bounds, and the crossing-frequency validator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use toprank_lab::boundary::{self, BoundarySpec, BoundaryVariant, QuadratureParams};
use toprank_lab::env::{ClickModel, ItemCatalog};
use toprank_lab::montecarlo::{simulate_crossing, SyntheticProcess};
use toprank_lab::theory::{self, BoundVariant};
use toprank_lab::toprank;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "ClickModel", from_py_object)]
#[derive(Clone)]
struct PyClickModel {
    inner: ClickModel,
}

#[pymethods]
impl PyClickModel {
    #[staticmethod]
    fn cascade(alphas: Vec<f64>, k: usize) -> PyResult<Self> {
        let catalog = ItemCatalog::new(alphas, k).map_err(err)?;
        Ok(PyClickModel {
            inner: ClickModel::cascade(catalog),
        })
    }

    #[staticmethod]
    fn position_based(alphas: Vec<f64>, chi: Vec<f64>, k: usize) -> PyResult<Self> {
        let catalog = ItemCatalog::new(alphas, k).map_err(err)?;
        Ok(PyClickModel {
            inner: ClickModel::position_based(catalog, chi).map_err(err)?,
        })
    }

    #[staticmethod]
    fn factored(alphas: Vec<f64>, chi: Vec<f64>, k: usize) -> PyResult<Self> {
        let catalog = ItemCatalog::new(alphas, k).map_err(err)?;
        Ok(PyClickModel {
            inner: ClickModel::factored(catalog, chi).map_err(err)?,
        })
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.inner.num_items()
    }

    #[getter]
    fn display_len(&self) -> usize {
        self.inner.display_len()
    }

    fn optimal_value(&self) -> f64 {
        self.inner.optimal_value()
    }

    /// Click probability of `slot` (0-based) under the item order `order`.
    fn click_prob(&self, order: Vec<usize>, slot: usize) -> PyResult<f64> {
        let a = toprank_lab::Permutation::new(order).map_err(err)?;
        Ok(self.inner.click_prob(&a, slot))
    }

    /// Exhaustive assumption check; returns a list of
    /// `(assumption, detail)` violations (empty when all hold).
    fn check_assumptions(&self) -> PyResult<Vec<(u8, String)>> {
        let report = self.inner.check_assumptions(7).map_err(err)?;
        Ok(report
            .violations
            .into_iter()
            .map(|v| (v.assumption, v.detail))
            .collect())
    }
}

#[pyclass(name = "BoundarySpec", from_py_object)]
#[derive(Clone)]
struct PyBoundarySpec {
    inner: BoundarySpec,
}

#[pymethods]
impl PyBoundarySpec {
    /// `variant` is one of "baseline", "mixture_exact", "asymptotic_c1",
    /// "simple_lil"; the latter two need `c1`/`c2`.
    #[new]
    #[pyo3(signature = (variant, delta, c1=None, c2=None, n_min=1000))]
    fn new(variant: &str, delta: f64, c1: Option<f64>, c2: Option<f64>, n_min: u64) -> PyResult<Self> {
        let variant = match variant {
            "baseline" => BoundaryVariant::Baseline,
            "mixture_exact" => BoundaryVariant::MixtureExact,
            "asymptotic_c1" => BoundaryVariant::AsymptoticC1 {
                c1: c1.ok_or_else(|| PyValueError::new_err("asymptotic_c1 requires c1"))?,
                n_min,
            },
            "simple_lil" => BoundaryVariant::SimpleLIL {
                c2: c2.ok_or_else(|| PyValueError::new_err("simple_lil requires c2"))?,
                n_min,
            },
            other => return Err(PyValueError::new_err(format!("unknown variant {other:?}"))),
        };
        Ok(PyBoundarySpec {
            inner: BoundarySpec::new(variant, delta).map_err(err)?,
        })
    }

    fn threshold(&self, n: u64) -> PyResult<f64> {
        self.inner.threshold(n).map_err(err)
    }

    /// Thresholds for counts `1..=n_max`.
    fn thresholds(&self, n_max: u64) -> PyResult<Vec<f64>> {
        let table = self.inner.threshold_table(n_max).map_err(err)?;
        Ok((1..=n_max).map(|n| table.get(n)).collect())
    }
}

/// Mixture integral `Psi(u, v)`.
#[pyfunction]
fn psi(u: f64, v: f64) -> PyResult<f64> {
    boundary::psi(u, v, &QuadratureParams::default()).map_err(err)
}

/// Exact mixture boundary: the root of `Psi(u, v) = c` in `u`.
#[pyfunction]
fn beta_f(v: f64, c: f64) -> PyResult<f64> {
    boundary::beta_f(v, c, &QuadratureParams::default(), 1e-12).map_err(err)
}

/// The baseline boundary constant `4 sqrt(2/pi) / erf(sqrt(2))`.
#[pyfunction]
fn mixture_constant() -> f64 {
    boundary::mixture_constant()
}

/// One full algorithm episode; returns a summary dict.
#[pyfunction]
fn run_episode(
    py: Python<'_>,
    model: &PyClickModel,
    spec: &PyBoundarySpec,
    n: u64,
    seed: u64,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let table = spec.inner.threshold_table(n).map_err(err)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let trace = toprank::run_episode(&model.inner, &table, n, &mut rng, &mut ()).map_err(err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("cumulative_expected_regret", trace.cumulative_expected())?;
    out.set_item("cumulative_realized_regret", trace.cumulative_realized())?;
    out.set_item("wrong_edge", trace.wrong_edge())?;
    out.set_item("edges", trace.final_edges.clone())?;
    out.set_item("expected_increments", trace.expected_increments.clone())?;
    Ok(out.unbind())
}

/// Crossing frequency of a fair `{-1, +1}` walk against the boundary.
#[pyfunction]
fn crossing_frequency(
    spec: &PyBoundarySpec,
    horizon: u64,
    trials: u64,
    seed: u64,
) -> PyResult<f64> {
    let proc = SyntheticProcess::fair_walk(horizon);
    let report = simulate_crossing(&proc, &spec.inner, trials, seed).map_err(err)?;
    Ok(report.frequency)
}

fn bound_variant(name: &str, c1: Option<f64>, c2: Option<f64>) -> PyResult<BoundVariant> {
    Ok(match name {
        "original" => BoundVariant::Original,
        "refined_c1" => BoundVariant::RefinedC1 {
            c1: c1.ok_or_else(|| PyValueError::new_err("refined_c1 requires c1"))?,
        },
        "refined_c2" => BoundVariant::RefinedC2 {
            c2: c2.ok_or_else(|| PyValueError::new_err("refined_c2 requires c2"))?,
        },
        other => return Err(PyValueError::new_err(format!("unknown variant {other:?}"))),
    })
}

/// Gap-free regret bound.
#[pyfunction]
#[pyo3(signature = (k, l, n, delta, variant="original", c1=None, c2=None))]
#[allow(clippy::too_many_arguments)]
fn regret_bound_gapfree(
    k: usize,
    l: usize,
    n: u64,
    delta: f64,
    variant: &str,
    c1: Option<f64>,
    c2: Option<f64>,
) -> PyResult<f64> {
    theory::regret_bound_gapfree(k, l, n, delta, bound_variant(variant, c1, c2)?).map_err(err)
}

/// Gap-dependent regret bound (requires strictly decreasing alphas).
#[pyfunction]
#[pyo3(signature = (alphas, k, n, delta, variant="original", c1=None, c2=None))]
#[allow(clippy::too_many_arguments)]
fn regret_bound_gapped(
    alphas: Vec<f64>,
    k: usize,
    n: u64,
    delta: f64,
    variant: &str,
    c1: Option<f64>,
    c2: Option<f64>,
) -> PyResult<f64> {
    let catalog = ItemCatalog::new(alphas, k).map_err(err)?;
    theory::regret_bound_gapped(&catalog, n, delta, bound_variant(variant, c1, c2)?).map_err(err)
}

/// Grid-sup estimates of the envelope constants C0/C1/C2 at `delta`.
#[pyfunction]
fn estimate_constants(delta: f64) -> PyResult<(f64, f64, f64)> {
    let est = boundary::estimate_constants(delta, 1e3, 1e12, 49, &QuadratureParams::default())
        .map_err(err)?;
    Ok((est.c0, est.c1, est.c2))
}

#[pymodule]
fn toprank_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClickModel>()?;
    m.add_class::<PyBoundarySpec>()?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(beta_f, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_constant, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(crossing_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(regret_bound_gapfree, m)?)?;
    m.add_function(wrap_pyfunction!(regret_bound_gapped, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_constants, m)?)?;
    Ok(())
}
