//! Python bindings. Structured values cross the boundary as plain Python
//! dicts and lists, converted through JSON.

use std::path::PathBuf;

use aiad_core::harness::runner::write_summary;
use aiad_core::harness::{self, DomainKind, ExperimentSpec, Preset};
use aiad_core::session::{AnySession, SessionConfig};
use aiad_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(aiad, IllegalActionError, PyValueError, "The action is not available in the current state.");

fn err(e: Error) -> PyErr {
    match e {
        Error::IllegalAction(m) => IllegalActionError::new_err(m),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::InvalidArgument(_) | Error::Spec(_) | Error::Json(_) | Error::NotFound(_)) => {
            PyValueError::new_err(e.to_string())
        }
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn domain(name: &str) -> PyResult<DomainKind> {
    match name {
        "daytrip" => Ok(DomainKind::Daytrip),
        "inventory" => Ok(DomainKind::Inventory),
        _ => Err(PyValueError::new_err(format!("unknown domain {name:?}"))),
    }
}

fn preset(name: &str) -> PyResult<Preset> {
    match name {
        "desk" => Ok(Preset::Desk),
        "full" => Ok(Preset::Full),
        _ => Err(PyValueError::new_err(format!("unknown preset {name:?}"))),
    }
}

/// The complete default experiment spec for a domain, as TOML.
#[pyfunction]
#[pyo3(signature = (domain_name, preset_name = "desk"))]
fn template(domain_name: &str, preset_name: &str) -> PyResult<String> {
    ExperimentSpec::preset(domain(domain_name)?, preset(preset_name)?)
        .to_toml()
        .map_err(err)
}

/// Runs the experiment in the spec file and returns its summary.
#[pyfunction]
#[pyo3(signature = (spec_path, output = None, runs = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    spec_path: PathBuf,
    output: Option<PathBuf>,
    runs: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let summary = py
        .detach(move || {
            let mut spec = ExperimentSpec::load(&spec_path)?;
            if let Some(o) = output {
                spec.output = o;
            }
            if let Some(r) = runs {
                spec.runs = r;
            }
            spec.validate()?;
            let summary = harness::summarize(&harness::run_experiment(&spec)?);
            write_summary(&spec.output, &summary)?;
            Ok(summary)
        })
        .map_err(err)?;
    to_py(py, &summary)
}

/// Summarizes an experiment directory, rewriting its summary files.
#[pyfunction]
fn summarize(py: Python<'_>, directory: PathBuf) -> PyResult<Bound<'_, PyAny>> {
    let summary = py.detach(move || harness::summarize_dir(&directory)).map_err(err)?;
    to_py(py, &summary)
}

/// Re-executes one logged run and reports whether it was reproduced exactly.
#[pyfunction]
fn replay(py: Python<'_>, run_file: PathBuf) -> PyResult<Bound<'_, PyAny>> {
    let report = py.detach(move || harness::replay(&run_file)).map_err(err)?;
    to_py(py, &report)
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
#[pyfunction]
fn wilcoxon(py: Python<'_>, x: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'_, PyAny>> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err("paired samples must have equal length"));
    }
    to_py(py, &harness::wilcoxon_signed_rank(&x, &y))
}

/// A live assisted episode. `config` takes the same fields as the HTTP
/// `POST /sessions` body.
#[pyclass(module = "aiad")]
struct Session {
    inner: AnySession,
}

#[pymethods]
impl Session {
    #[new]
    fn new(py: Python<'_>, config: &Bound<'_, PyAny>) -> PyResult<Self> {
        let config: SessionConfig = from_py(config)?;
        let inner = py.detach(move || AnySession::create(&config)).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn domain(&self) -> &'static str {
        match self.inner.domain() {
            DomainKind::Daytrip => "daytrip",
            DomainKind::Inventory => "inventory",
        }
    }

    fn instance<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.instance().map_err(err)?)
    }

    /// Advice for the current state, or `None` once the episode has ended.
    fn advice<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let inner = &mut self.inner;
        let advice = py.detach(|| inner.advice()).map_err(err)?;
        to_py(py, &advice)
    }

    /// Applies the agent's action and returns the logged record.
    fn act<'py>(&mut self, py: Python<'py>, action: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let action = from_py(action)?;
        let record = self.inner.act(action).map_err(err)?;
        to_py(py, &record)
    }

    fn view<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.view().map_err(err)?)
    }
}

/// Adds the module contents to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("IllegalActionError", m.py().get_type::<IllegalActionError>())?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(template, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon, m)?)?;
    Ok(())
}

#[pymodule]
#[pyo3(name = "aiad")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
