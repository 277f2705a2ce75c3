//! Python module `plastiscope`: synthetic data, preprocessing, the frame
//! store, chart statistics, diffs, wire payloads and session state.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyLookupError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use plastiscope_core::aggregate::{diff_color_scale, diff_frames, local_range};
use plastiscope_core::collab::SessionState;
use plastiscope_core::ingest::{generate_synthetic_scenarios, SynthConfig};
use plastiscope_core::pipeline::{preprocess as run_preprocess, PreprocessOptions};
use plastiscope_core::stats::{self, RangeMode};
use plastiscope_core::store::FrameStore;
use plastiscope_core::{
    payload, ConnectivityStatus, DiffFrame, Error, FrameKey, NeuronProperty, PropertyRange, Scenario,
    ScenarioCatalog, Statics, TimestepFrame,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NotFound(_) => PyLookupError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn scenario(s: &str) -> PyResult<Scenario> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown scenario '{s}'")))
}

fn property(s: &str) -> PyResult<NeuronProperty> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown property '{s}'")))
}

fn scenarios(list: Option<Vec<String>>) -> PyResult<Option<Vec<Scenario>>> {
    list.map(|v| v.iter().map(|s| scenario(s)).collect()).transpose()
}

/// serde value -> Python object through the stdlib json module.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Writes a synthetic raw dataset; `scenarios` defaults to all four.
#[pyfunction]
#[pyo3(signature = (output, clusters=500, areas=8, timesteps=100, seed=42, scenarios=None))]
fn synth(
    py: Python<'_>,
    output: PathBuf,
    clusters: u32,
    areas: u16,
    timesteps: u32,
    seed: u64,
    scenarios: Option<Vec<String>>,
) -> PyResult<()> {
    let config = SynthConfig {
        n_clusters: clusters,
        n_areas: areas,
        n_timesteps: timesteps,
        seed,
    };
    let selected = self::scenarios(scenarios)?.unwrap_or_else(|| Scenario::ALL.to_vec());
    py.detach(|| generate_synthetic_scenarios(&output, &config, &selected)).map_err(py_err)?;
    Ok(())
}

/// Preprocesses a raw dataset into a store and returns a summary dict.
#[pyfunction]
#[pyo3(signature = (input, output, scenarios=None, jobs=0))]
fn preprocess<'py>(
    py: Python<'py>,
    input: PathBuf,
    output: PathBuf,
    scenarios: Option<Vec<String>>,
    jobs: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let options = PreprocessOptions {
        scenarios: self::scenarios(scenarios)?,
        jobs,
        ..Default::default()
    };
    let summary = py.detach(|| run_preprocess(&input, &output, &options)).map_err(py_err)?;
    let per_scenario: Vec<_> = summary
        .scenarios
        .iter()
        .map(|s| {
            serde_json::json!({
                "scenario": s.scenario,
                "frames": s.frames,
                "bytes_in": s.bytes_in,
                "bytes_out": s.bytes_out,
                "warnings": s.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            })
        })
        .collect();
    to_py(
        py,
        &serde_json::json!({
            "frames": summary.frames_written(),
            "bytes_in": summary.bytes_in,
            "bytes_out": summary.bytes_out,
            "compression_ratio": summary.compression_ratio(),
            "scenarios": per_scenario,
        }),
    )
}

/// One timestep of one scenario.
#[pyclass(module = "plastiscope", frozen)]
struct Frame {
    inner: TimestepFrame,
    statics: Option<Arc<Statics>>,
}

#[pymethods]
impl Frame {
    #[getter]
    fn scenario(&self) -> &'static str {
        self.inner.scenario.slug()
    }

    #[getter]
    fn timestep(&self) -> u32 {
        self.inner.timestep
    }

    #[getter]
    fn neuron_count(&self) -> usize {
        self.inner.neuron_count()
    }

    #[getter]
    fn area_count(&self) -> usize {
        self.inner.area_count()
    }

    #[getter]
    fn connectivity_missing(&self) -> bool {
        self.inner.connectivity_status == ConnectivityStatus::Missing
    }

    /// Per-neuron values; `area` needs a frame read from a store.
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let p = property(name)?;
        match (self.inner.columns.column(p), &self.statics) {
            (Some(col), _) => Ok(col.to_f64()),
            (None, Some(statics)) => Ok(self.inner.values(statics, p)),
            (None, None) => Err(PyValueError::new_err("area needs the store's neuron table")),
        }
    }

    /// Nonzero `(source_area, target_area, synapses)` entries.
    fn connectivity(&self) -> Vec<(u16, u16, u32)> {
        self.inner.connectivity.nonzero().collect()
    }

    fn local_range(&self, name: &str) -> PyResult<(f64, f64)> {
        let r = local_range(&self.inner, property(name)?).map_err(py_err)?;
        Ok((r.min, r.max))
    }

    /// Binary frame payload as served over HTTP.
    fn payload<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = payload::encode_frame(&self.inner).map_err(py_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn __repr__(&self) -> String {
        format!("Frame({}, neurons={})", self.inner.key(), self.inner.neuron_count())
    }
}

/// `other - base` for two frames over the same neurons.
#[pyclass(module = "plastiscope", frozen)]
struct Diff {
    inner: DiffFrame,
    base_missing: bool,
    other_missing: bool,
}

#[pymethods]
impl Diff {
    #[getter]
    fn base(&self) -> (&'static str, u32) {
        (self.inner.base.scenario.slug(), self.inner.base.timestep)
    }

    #[getter]
    fn other(&self) -> (&'static str, u32) {
        (self.inner.other.scenario.slug(), self.inner.other.timestep)
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.column_deltas.values(property(name)?))
    }

    fn connectivity_delta(&self, source: usize, target: usize) -> PyResult<i64> {
        let a = self.inner.area_count();
        if source >= a || target >= a {
            return Err(PyValueError::new_err(format!("area index out of range for {a} areas")));
        }
        Ok(self.inner.connectivity_delta(source, target))
    }

    /// Nonzero `(source_area, target_area, delta)` entries.
    fn connectivity(&self) -> Vec<(u16, u16, i64)> {
        self.inner.nonzero_connectivity().collect()
    }

    /// Symmetric `(min, max)` color extent for a column.
    fn color_scale(&self, name: &str) -> PyResult<(f64, f64)> {
        let s = diff_color_scale(&self.inner.column_deltas.values(property(name)?));
        Ok((s.min, s.max))
    }

    fn payload<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = payload::encode_diff(&self.inner, self.base_missing, self.other_missing).map_err(py_err)?;
        Ok(PyBytes::new(py, &bytes))
    }
}

/// A preprocessed frame store.
#[pyclass(module = "plastiscope", frozen)]
struct Store {
    store: FrameStore,
    catalog: ScenarioCatalog,
    statics: Arc<Statics>,
}

impl Store {
    fn read(&self, s: &str, t: u32) -> PyResult<TimestepFrame> {
        let key = FrameKey {
            scenario: scenario(s)?,
            timestep: t,
        };
        if !self.catalog.contains(key) {
            return Err(PyLookupError::new_err(format!("no frame {key}")));
        }
        self.store.read_frame(key).map_err(py_err)
    }
}

#[pymethods]
impl Store {
    #[new]
    fn open(path: PathBuf) -> PyResult<Self> {
        let store = FrameStore::new(path);
        let catalog = store.read_catalog().map_err(py_err)?;
        let statics = Arc::new(store.read_statics().map_err(py_err)?);
        Ok(Store { store, catalog, statics })
    }

    fn catalog<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.catalog)
    }

    fn timesteps(&self, s: &str) -> PyResult<Vec<u32>> {
        let id = scenario(s)?;
        Ok(self
            .catalog
            .scenarios
            .iter()
            .find(|e| e.id == id)
            .map(|e| e.timesteps.clone())
            .unwrap_or_default())
    }

    fn global_range(&self, s: &str, name: &str) -> PyResult<Option<(f64, f64)>> {
        Ok(self.catalog.global_range(scenario(s)?, property(name)?).map(|r| (r.min, r.max)))
    }

    fn frame(&self, py: Python<'_>, s: &str, t: u32) -> PyResult<Frame> {
        let inner = py.detach(|| self.read(s, t))?;
        Ok(Frame {
            inner,
            statics: Some(self.statics.clone()),
        })
    }

    fn diff(&self, py: Python<'_>, base: (String, u32), other: (String, u32)) -> PyResult<Diff> {
        py.detach(|| {
            let a = self.read(&base.0, base.1)?;
            let b = self.read(&other.0, other.1)?;
            Ok(Diff {
                inner: diff_frames(&a, &b).map_err(py_err)?,
                base_missing: a.connectivity_status == ConnectivityStatus::Missing,
                other_missing: b.connectivity_status == ConnectivityStatus::Missing,
            })
        })
    }

    /// Histogram, per-area boxes and parallel-coordinates rows as a dict.
    #[pyo3(signature = (s, t, name, range_mode="global", bins=stats::DEFAULT_BIN_COUNT, cap=stats::DEFAULT_PARALLEL_CAP))]
    fn stats<'py>(
        &self,
        py: Python<'py>,
        s: &str,
        t: u32,
        name: &str,
        range_mode: &str,
        bins: usize,
        cap: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = property(name)?;
        let mode = match range_mode {
            "global" => RangeMode::Global,
            "local" => RangeMode::Local,
            other => return Err(PyValueError::new_err(format!("range_mode '{other}' is not global or local"))),
        };
        let result = py.detach(|| {
            let frame = self.read(s, t)?;
            let range = if p == NeuronProperty::Area {
                plastiscope_core::aggregate::area_range(&self.statics)
            } else {
                match (mode, self.catalog.global_range(frame.scenario, p)) {
                    (RangeMode::Global, Some(r)) => Ok(r),
                    _ => local_range(&frame, p),
                }
            }
            .map_err(py_err)?;
            stats::frame_stats(&frame, &self.statics, p, range, bins, cap).map_err(py_err)
        })?;
        to_py(py, &result)
    }

    /// The positions block served at `/api/positions`.
    fn positions<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let bytes = payload::encode_positions(&self.statics.neurons, self.statics.area_count());
        PyBytes::new(py, &bytes)
    }

    #[getter]
    fn neuron_count(&self) -> usize {
        self.statics.len()
    }

    #[getter]
    fn area_count(&self) -> usize {
        self.statics.area_count()
    }
}

#[pyfunction]
fn decode_frame(bytes: &[u8]) -> PyResult<Frame> {
    Ok(Frame {
        inner: payload::decode_frame(bytes).map_err(py_err)?,
        statics: None,
    })
}

#[pyfunction]
fn decode_diff(bytes: &[u8]) -> PyResult<Diff> {
    let flags = bytes.get(6).copied().unwrap_or(0);
    Ok(Diff {
        inner: payload::decode_diff(bytes).map_err(py_err)?,
        base_missing: flags & 1 != 0,
        other_missing: flags & 2 != 0,
    })
}

/// Equal-width bin counts over `[lo, hi]`.
#[pyfunction]
fn histogram(values: Vec<f64>, lo: f64, hi: f64, bins: usize) -> PyResult<Vec<u64>> {
    let range = PropertyRange::new(lo, hi).map_err(py_err)?;
    Ok(stats::histogram(NeuronProperty::Calcium, &values, range, bins).map_err(py_err)?.counts)
}

/// Five-number summary with Tukey whiskers and outliers, or `None` if empty.
#[pyfunction]
fn box_stats<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Option<Bound<'py, PyAny>>> {
    stats::box_stats(0, &values).map(|b| to_py(py, &b)).transpose()
}

/// Shared session state with path updates.
#[pyclass(module = "plastiscope")]
struct Session {
    state: SessionState,
    catalog: Option<ScenarioCatalog>,
}

#[pymethods]
impl Session {
    /// `catalog` is a dict as returned by `Store.catalog()`; without it
    /// frame references are not checked.
    #[new]
    #[pyo3(signature = (catalog=None))]
    fn new(catalog: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let catalog: Option<ScenarioCatalog> = catalog
            .map(|c| serde_json::from_value(from_py(c)?).map_err(|e| PyValueError::new_err(e.to_string())))
            .transpose()?;
        Ok(Session {
            state: SessionState::new(catalog.as_ref()),
            catalog,
        })
    }

    /// Applies one update and returns the stored value. Rejected updates
    /// raise `ValueError("bad_path: ...")` or `ValueError("bad_value: ...")`.
    fn apply<'py>(&mut self, py: Python<'py>, path: &str, value: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let value = from_py(value)?;
        let stored = self.state.apply_update(path, &value, self.catalog.as_ref()).map_err(|e| {
            let code = serde_json::to_value(e.code).ok().and_then(|v| v.as_str().map(str::to_owned));
            PyValueError::new_err(format!("{}: {}", code.unwrap_or_default(), e.message))
        })?;
        to_py(py, &stored)
    }

    fn get<'py>(&self, py: Python<'py>, path: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.state.read(path).map(|v| to_py(py, &v)).transpose()
    }

    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state)
    }

    fn canonical_json(&self) -> String {
        self.state.canonical_json()
    }

    #[getter]
    fn version(&self) -> u64 {
        self.state.version
    }
}

#[pymodule]
pub fn plastiscope(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(decode_diff, m)?)?;
    m.add_function(wrap_pyfunction!(histogram, m)?)?;
    m.add_function(wrap_pyfunction!(box_stats, m)?)?;
    m.add_class::<Store>()?;
    m.add_class::<Frame>()?;
    m.add_class::<Diff>()?;
    m.add_class::<Session>()?;
    m.add("SCENARIOS", Scenario::ALL.iter().map(|s| s.slug()).collect::<Vec<_>>())?;
    m.add("PROPERTIES", NeuronProperty::ALL.iter().map(|p| p.name()).collect::<Vec<_>>())?;
    Ok(())
}
