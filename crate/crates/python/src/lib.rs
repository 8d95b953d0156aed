//! Python bindings. Tables cross the boundary as `dict[str, list]`, which
//! `pandas.DataFrame` accepts directly.

use std::collections::BTreeSet;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString};
use pyo3::IntoPyObjectExt;

use tidysim::aggregate::AggregateSpec;
use tidysim::config::StudyConfig;
use tidysim::grid::{read_grid, write_grid, FilterExpr};
use tidysim::prepost::{analyze_prepost, generate_prepost, PrePostDataset, Response};
use tidysim::results::{join_grid_long, join_grid_results, pivot_long};
use tidysim::runner::{run_detailed, Chunk, Subset};
use tidysim::study::{find_study, registry};
use tidysim::table::{write_table, Format};
use tidysim::{FactorSpec, GridSpec, ResultsTable, RunConfig, Table, Value};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn value_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    match v {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Int(i) => i.into_bound_py_any(py),
        Value::UInt(u) => u.into_bound_py_any(py),
        Value::Real(x) => x.into_bound_py_any(py),
        Value::Text(s) => s.into_bound_py_any(py),
    }
}

fn table_to_dict<'py>(py: Python<'py>, table: &Table) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    for (name, col) in table.columns() {
        let items = (0..col.len()).map(|i| value_to_py(py, &col.get(i))).collect::<PyResult<Vec<_>>>()?;
        out.set_item(name, PyList::new(py, items)?)?;
    }
    Ok(out)
}

/// Factor kind follows the Python type of the levels: all `bool`, all `int`,
/// numbers (real), or all `str` (categorical).
fn factor_from_py(name: &str, levels: &Bound<'_, PyAny>) -> PyResult<FactorSpec> {
    let items: Vec<Bound<'_, PyAny>> = levels.try_iter()?.collect::<PyResult<_>>()?;
    let all = |f: &dyn Fn(&Bound<'_, PyAny>) -> bool| !items.is_empty() && items.iter().all(f);
    let spec = if all(&|x| x.is_instance_of::<PyBool>()) {
        FactorSpec::boolean(name, items.iter().map(|x| x.extract::<bool>()).collect::<PyResult<Vec<_>>>()?)
    } else if all(&|x| x.is_instance_of::<PyInt>() && !x.is_instance_of::<PyBool>()) {
        FactorSpec::integer(name, items.iter().map(|x| x.extract::<i64>()).collect::<PyResult<Vec<_>>>()?)
    } else if all(&|x| (x.is_instance_of::<PyFloat>() || x.is_instance_of::<PyInt>()) && !x.is_instance_of::<PyBool>()) {
        FactorSpec::real(name, items.iter().map(|x| x.extract::<f64>()).collect::<PyResult<Vec<_>>>()?)
    } else if all(&|x| x.is_instance_of::<PyString>()) {
        FactorSpec::categorical(name, items.iter().map(|x| x.extract::<String>()).collect::<PyResult<Vec<_>>>()?)
    } else {
        return Err(PyValueError::new_err(format!(
            "factor `{name}`: levels must be a non-empty list of bools, ints, floats or strings"
        )));
    };
    spec.map_err(err)
}

fn format_of(path: &std::path::Path) -> Format {
    Format::from_path(path)
}

/// Seed of row `row_id` under `master_seed`.
#[pyfunction]
fn derive_seed(master_seed: u64, row_id: u64) -> u64 {
    tidysim::derive_seed(master_seed, row_id)
}

/// Names of the built-in studies.
#[pyfunction]
fn studies() -> Vec<String> {
    registry().iter().map(|s| s.name().to_owned()).collect()
}

/// A simulation grid. Factors are given as a dict of level lists; the first
/// factor varies fastest.
#[pyclass(frozen, name = "Grid", module = "tidysim")]
struct PyGrid {
    inner: tidysim::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (factors, iterations, master_seed, filter=None))]
    fn new(factors: &Bound<'_, PyDict>, iterations: u64, master_seed: u64, filter: Option<&str>) -> PyResult<Self> {
        let specs = factors
            .iter()
            .map(|(k, v)| factor_from_py(&k.extract::<String>()?, &v))
            .collect::<PyResult<Vec<_>>>()?;
        let mut spec = GridSpec::new(specs, iterations, master_seed);
        if let Some(f) = filter {
            spec = spec.with_filter(FilterExpr::parse(f).map_err(err)?);
        }
        Ok(Self {
            inner: tidysim::expand_grid(&spec).map_err(err)?,
        })
    }

    /// Grid described by a TOML study configuration.
    #[staticmethod]
    fn from_config(path: PathBuf) -> PyResult<Self> {
        let spec = StudyConfig::load(&path).and_then(|c| c.grid_spec()).map_err(err)?;
        Ok(Self {
            inner: tidysim::expand_grid(&spec).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_grid(&path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_grid(&self.inner, &path, format_of(&path)).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        let names: Vec<&str> = self.inner.factor_names().collect();
        format!("Grid({} rows, factors {names:?}, {} iterations)", self.inner.len(), self.inner.iterations())
    }

    #[getter]
    fn factor_names(&self) -> Vec<String> {
        self.inner.factor_names().map(str::to_owned).collect()
    }

    #[getter]
    fn iterations(&self) -> u64 {
        self.inner.iterations()
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.inner.master_seed()
    }

    /// Row at position `pos` as a dict with `row_id`, `iteration`, `seed` and the factor values.
    fn row<'py>(&self, py: Python<'py>, pos: usize) -> PyResult<Bound<'py, PyDict>> {
        let row = self
            .inner
            .row(pos)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(format!("row {pos} out of range")))?;
        let out = PyDict::new(py);
        out.set_item("row_id", row.row_id)?;
        out.set_item("iteration", row.iteration)?;
        out.set_item("seed", row.seed)?;
        for (name, v) in self.inner.view(&row).pairs() {
            out.set_item(name, value_to_py(py, v)?)?;
        }
        Ok(out)
    }

    fn filter(&self, expr: &str) -> PyResult<Self> {
        let expr = FilterExpr::parse(expr).map_err(err)?;
        Ok(Self {
            inner: self.inner.filter_expr(&expr).map_err(err)?,
        })
    }

    fn subset_iterations(&self, iterations: BTreeSet<u64>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.subset_iterations(&iterations).map_err(err)?,
        })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        table_to_dict(py, &self.inner.to_table())
    }
}

/// Results of a run: one row per grid row with its outcomes and status.
#[pyclass(frozen, name = "Results", module = "tidysim")]
struct PyResults {
    inner: ResultsTable,
    #[pyo3(get)]
    executed: usize,
    #[pyo3(get)]
    skipped: usize,
}

#[pymethods]
impl PyResults {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Results({} rows, {} failed)", self.inner.len(), self.inner.error_count())
    }

    #[getter]
    fn error_count(&self) -> usize {
        self.inner.error_count()
    }

    /// Bitwise equality of row ids, outcomes and statuses.
    fn identical(&self, other: &PyResults) -> bool {
        self.inner.identical(&other.inner)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        table_to_dict(py, &self.inner.to_table())
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_table(&self.inner.to_table(), &path, format_of(&path)).map_err(err)
    }
}

/// Run a built-in study over a grid. The GIL is released while rows execute.
#[pyfunction]
#[pyo3(signature = (grid, study="prepost", jobs=1, chunk=None, iterations=None, checkpoint=None, resume=false, fail_fast=false))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    grid: &PyGrid,
    study: &str,
    jobs: usize,
    chunk: Option<(u64, u64)>,
    iterations: Option<BTreeSet<u64>>,
    checkpoint: Option<PathBuf>,
    resume: bool,
    fail_fast: bool,
) -> PyResult<PyResults> {
    let study = find_study(study).map_err(err)?;
    let config = RunConfig {
        jobs,
        chunk: chunk.map(|(index, count)| Chunk { index, count }),
        checkpoint,
        resume,
        subset: iterations.map(Subset::Iterations),
        fail_fast,
        progress: false,
        cancel: None,
    };
    let out = py
        .detach(|| run_detailed(&grid.inner, study.as_ref(), &config))
        .map_err(err)?;
    Ok(PyResults {
        inner: out.results,
        executed: out.executed,
        skipped: out.skipped,
    })
}

/// Bias and power per group of the joined grid and results. `pivot` names
/// the factors encoded in wide column names (e.g. `["outcome", "correction"]`).
#[pyfunction]
#[pyo3(signature = (grid, results, group_by=None, alpha=0.05, z=1.96, pivot=None, values=None))]
#[allow(clippy::too_many_arguments)]
fn aggregate<'py>(
    py: Python<'py>,
    grid: &PyGrid,
    results: &PyResults,
    group_by: Option<Vec<String>>,
    alpha: f64,
    z: f64,
    pivot: Option<Vec<String>>,
    values: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut keys: Vec<String> = grid.inner.factor_names().map(str::to_owned).collect();
    let frame = match &pivot {
        Some(factors) => {
            let values = values.unwrap_or_else(|| vec!["estimate".into(), "pvalue".into(), "singular".into()]);
            let v: Vec<&str> = values.iter().map(String::as_str).collect();
            let f: Vec<&str> = factors.iter().map(String::as_str).collect();
            keys.extend(factors.iter().cloned());
            let long = pivot_long(&results.inner.to_table(), &v, &f).map_err(err)?;
            join_grid_long(&grid.inner, &long)
        }
        None => join_grid_results(&grid.inner, &results.inner),
    }
    .map_err(err)?;
    let spec = AggregateSpec {
        group_by: group_by.unwrap_or(keys),
        alpha,
        z,
        ..AggregateSpec::default()
    };
    table_to_dict(py, &tidysim::aggregate::aggregate(&frame, &spec).map_err(err)?)
}

/// Least squares of `y` on the rows of `x` (no intercept is added).
#[pyfunction]
fn fit_ols<'py>(py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let k = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("rows of x must have equal length"));
    }
    let xm = DMatrix::from_fn(x.len(), k, |i, j| x[i][j]);
    let fit = tidysim::linmodel::fit_ols(&xm, &DVector::from_vec(y)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("coef", fit.coef)?;
    out.set_item("stderr", fit.stderr)?;
    out.set_item("t_stat", fit.t_stat)?;
    out.set_item("p_value", fit.p_value)?;
    out.set_item("df_resid", fit.df_resid)?;
    out.set_item("rss", fit.rss)?;
    out.set_item("min_eigenvalue", fit.min_eigenvalue)?;
    out.set_item("singular", fit.singular)?;
    Ok(out)
}

/// One pre-post dataset as columns `id, treated, pre, post`.
#[pyfunction]
fn prepost_generate<'py>(py: Python<'py>, sample_size: i64, effect_size: f64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let data = generate_prepost(sample_size, effect_size, seed).map_err(err)?;
    table_to_dict(py, &data.to_table())
}

/// Treatment estimate, p-value and singularity flag for one analysis variant.
#[pyfunction]
fn prepost_analyze<'py>(
    py: Python<'py>,
    treated: Vec<bool>,
    pre: Vec<f64>,
    post: Vec<f64>,
    outcome: &str,
    correction: bool,
) -> PyResult<Bound<'py, PyDict>> {
    if treated.len() != pre.len() || pre.len() != post.len() {
        return Err(PyValueError::new_err("treated, pre and post must have equal length"));
    }
    let response: Response = outcome.parse().map_err(err)?;
    let data = PrePostDataset {
        id: (0..pre.len() as i64).collect(),
        treated,
        pre,
        post,
    };
    let fit = analyze_prepost(&data, response, correction).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("estimate", fit.estimate)?;
    out.set_item("pvalue", fit.pvalue)?;
    out.set_item("singular", fit.singular)?;
    Ok(out)
}

#[pymodule]
fn _tidysim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyResults>()?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(studies, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ols, m)?)?;
    m.add_function(wrap_pyfunction!(prepost_generate, m)?)?;
    m.add_function(wrap_pyfunction!(prepost_analyze, m)?)?;
    Ok(())
}
