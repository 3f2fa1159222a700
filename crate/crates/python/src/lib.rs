//! Python bindings: exact diagonalization of single realizations, the
//! ensemble runner and the analytic strong-disorder formulas.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use xxzloc::basis::{default_two_m, enumerate_sector, SpinConfiguration};
use xxzloc::eigen::{diagonalize, rotate_diagonal_observable};
use xxzloc::model::{build_hamiltonian, sample_disorder, sz_diagonal, CouplingParams};
use xxzloc::probes::{self, FrequencyGrid};
use xxzloc::{analysis, runner, strongdisorder, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::NotFound(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::NoConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(json_to_py(py, x)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

/// Magnetization sector of an `L`-site chain.
#[pyclass(name = "Sector", frozen)]
struct PySector {
    inner: xxzloc::basis::SectorBasis,
}

#[pymethods]
impl PySector {
    #[new]
    #[pyo3(signature = (sites, two_m = None))]
    fn new(sites: usize, two_m: Option<i32>) -> PyResult<Self> {
        let two_m = two_m.unwrap_or_else(|| default_two_m(sites));
        Ok(Self {
            inner: enumerate_sector(sites, two_m).map_err(py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn states(&self) -> Vec<u32> {
        self.inner.raw_states().to_vec()
    }

    fn index_of(&self, bits: u32) -> PyResult<usize> {
        let c = SpinConfiguration::new(bits, self.inner.sites()).map_err(py_err)?;
        self.inner.index_of(c).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }
}

/// Eigenvalues and probe matrix elements of one disorder realization.
#[pyclass(name = "Spectrum", frozen)]
struct PySpectrum {
    params: CouplingParams,
    #[pyo3(get)]
    fields: Vec<f64>,
    #[pyo3(get)]
    energies: Vec<f64>,
    m: xxzloc::eigen::ObservableMatrix,
}

#[pymethods]
impl PySpectrum {
    #[getter]
    fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Diagonal elements `<n|S^z|n>`.
    #[getter]
    fn diagonal(&self) -> Vec<f64> {
        self.m.diagonal()
    }

    fn matrix_element(&self, n: usize, k: usize) -> PyResult<f64> {
        if n >= self.dim() || k >= self.dim() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.m.get(n, k))
    }

    #[pyo3(signature = (mu = 0.0))]
    fn susceptibilities(&self, mu: f64) -> PyResult<Vec<f64>> {
        probes::all_susceptibilities(&self.m, &self.energies, mu).map_err(py_err)
    }

    /// `(zeta, mean_chi, used, zero, infinite)` of the susceptibilities.
    #[pyo3(signature = (mu = 0.0))]
    fn typical(&self, mu: f64) -> PyResult<(f64, f64, usize, usize, usize)> {
        let chi = probes::all_susceptibilities(&self.m, &self.energies, mu).map_err(py_err)?;
        let t = probes::typical_log_susceptibility(&chi).map_err(py_err)?;
        Ok((t.zeta, t.mean_chi, t.used, t.zero, t.infinite))
    }

    fn gap_ratios(&self) -> PyResult<Vec<f64>> {
        Ok(probes::gap_ratios(&self.energies).map_err(py_err)?.ratios)
    }

    /// `(edges, density)` of the spectral function, normalized by the sector dimension.
    #[pyo3(signature = (bins_per_decade = 20))]
    fn spectral_function(&self, bins_per_decade: u32) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let h = self.histogram(bins_per_decade)?;
        Ok((h.edges.clone(), h.densities()))
    }

    /// `|lhs - rhs|` of the frequency sum rule.
    #[pyo3(signature = (bins_per_decade = 20))]
    fn sum_rule_residual(&self, bins_per_decade: u32) -> PyResult<f64> {
        let h = self.histogram(bins_per_decade)?;
        Ok(probes::sum_rule(&h, &self.m.diagonal()).residual)
    }
}

impl PySpectrum {
    fn histogram(&self, bins_per_decade: u32) -> PyResult<probes::SpectralHistogram> {
        let d = self.energies.len();
        let edges = FrequencyGrid::for_sector(&self.params, d, bins_per_decade)
            .map_err(py_err)?
            .edges();
        probes::spectral_histogram(&self.m, &self.energies, &edges, d as f64).map_err(py_err)
    }
}

/// Diagonalize one realization with fields drawn from `seed`.
#[pyfunction]
#[pyo3(signature = (sites, w, seed, delta = 1.1, site = 0, two_m = None, periodic = true))]
fn realize(
    py: Python<'_>,
    sites: usize,
    w: f64,
    seed: u64,
    delta: f64,
    site: usize,
    two_m: Option<i32>,
    periodic: bool,
) -> PyResult<PySpectrum> {
    let basis = enumerate_sector(sites, two_m.unwrap_or_else(|| default_two_m(sites))).map_err(py_err)?;
    let mut params = CouplingParams::new(sites, w).map_err(py_err)?;
    params.delta = delta;
    params.periodic = periodic;
    let real = sample_disorder(seed, sites);
    let sz = sz_diagonal(&basis, site).map_err(py_err)?;
    let (energies, m) = py
        .detach(|| -> xxzloc::Result<_> {
            let d = diagonalize(build_hamiltonian(&params, &real, &basis)?)?;
            let m = rotate_diagonal_observable(&d, &sz)?;
            Ok((d.energies().to_vec(), m))
        })
        .map_err(py_err)?;
    Ok(PySpectrum {
        params,
        fields: real.fields,
        energies,
        m,
    })
}

/// Run (or resume) an ensemble described by a TOML file; returns the summary rows.
#[pyfunction]
#[pyo3(signature = (config, output = None, workers = None))]
fn run(py: Python<'_>, config: PathBuf, output: Option<PathBuf>, workers: Option<usize>) -> PyResult<Py<PyAny>> {
    let mut cfg = runner::RunConfig::load(&config).map_err(py_err)?;
    if let Some(o) = output {
        cfg.output = o;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    let report = py.detach(|| runner::run_ensemble(&cfg)).map_err(py_err)?;
    let rows: Vec<_> = report.summaries.iter().map(|s| &s.row).collect();
    let v = serde_json::to_value(rows).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

/// `(C(L), terms)` of the strong-disorder `log W` prefactor.
#[pyfunction]
fn log_w_prefactor(sites: usize) -> PyResult<(f64, Vec<f64>)> {
    let c = strongdisorder::log_w_prefactor(sites).map_err(py_err)?;
    Ok((c.c_of_l, c.terms))
}

#[pyfunction]
fn first_order_chi(bits: u32, fields: Vec<f64>, w: f64, site: usize) -> PyResult<f64> {
    let c = SpinConfiguration::new(bits, fields.len()).map_err(py_err)?;
    strongdisorder::first_order_chi(c, &fields, w, site).map_err(py_err)
}

#[pyfunction]
fn alpha_from_prefactor(c: f64) -> f64 {
    analysis::alpha_from_prefactor(c)
}

#[pyfunction]
#[pyo3(signature = (sites, alpha, ratio_uv = 1.0))]
fn critical_disorder(sites: f64, alpha: f64, ratio_uv: f64) -> PyResult<f64> {
    analysis::critical_disorder(sites, alpha, ratio_uv).map_err(py_err)
}

#[pyfunction]
fn gap_ratios(energies: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(probes::gap_ratios(&energies).map_err(py_err)?.ratios)
}

#[pyfunction]
fn typical_log_susceptibility(chis: Vec<f64>) -> PyResult<f64> {
    Ok(probes::typical_log_susceptibility(&chis).map_err(py_err)?.zeta)
}

/// Built-in checks as `(name, passed, detail)` tuples.
#[pyfunction]
fn selftest() -> Vec<(String, bool, String)> {
    xxzloc::selftest::run_selftest()
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn pyxxzloc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", xxzloc::CODE_VERSION)?;
    m.add_class::<PySector>()?;
    m.add_class::<PySpectrum>()?;
    m.add_function(wrap_pyfunction!(realize, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(log_w_prefactor, m)?)?;
    m.add_function(wrap_pyfunction!(first_order_chi, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_from_prefactor, m)?)?;
    m.add_function(wrap_pyfunction!(critical_disorder, m)?)?;
    m.add_function(wrap_pyfunction!(gap_ratios, m)?)?;
    m.add_function(wrap_pyfunction!(typical_log_susceptibility, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
