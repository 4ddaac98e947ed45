//! Python bindings: cluster states, plan generation, and simulation driven
//! in-process from Python.
//!
//! ```python
//! import equilibrium_py as eq
//!
//! state = eq.generate_preset("A", scale=1.0, seed=42)
//! plan = eq.balance_equilibrium(state)
//! final_state, records = eq.simulate(state, plan)
//! print(len(plan), final_state.utilization_variance("hdd"))
//! ```

use std::str::FromStr;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use equilibrium_core::balance::{
    self, BalanceConfig, CountBalanceConfig, Move as CoreMove, Plan as CorePlan,
};
use equilibrium_core::cluster::{validate_state, ClusterState, DeviceClass};
use equilibrium_core::generator::{generate_preset as core_generate, Preset, PresetSpec};
use equilibrium_core::io::{
    fingerprint, parse_plan as core_parse_plan, parse_state, serialize_state, write_metrics_csv,
    write_plan,
};
use equilibrium_core::sim::{self, TrajectoryRecord};

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn parse_class(class: Option<&str>) -> PyResult<Option<DeviceClass>> {
    class.map(|c| DeviceClass::from_str(c).map_err(value_err)).transpose()
}

/// A full cluster: OSDs, CRUSH tree, pools, and the PG shard map.
#[pyclass(name = "ClusterState", module = "equilibrium_py", skip_from_py_object)]
#[derive(Clone)]
struct PyClusterState {
    inner: ClusterState,
}

#[pymethods]
impl PyClusterState {
    /// Parse a state document (the same format `to_text` produces).
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyClusterState { inner: parse_state(text).map_err(value_err)? })
    }

    /// Canonical serialization of this state.
    fn to_text(&self) -> String {
        serialize_state(&self.inner)
    }

    /// SHA-256 of the canonical serialization.
    fn fingerprint(&self) -> String {
        fingerprint(&self.inner)
    }

    /// All invariant violations, as strings; an empty list means valid.
    fn validate(&self) -> Vec<String> {
        validate_state(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    fn osd_ids(&self) -> Vec<u32> {
        self.inner.osds.keys().copied().collect()
    }

    fn pool_ids(&self) -> Vec<u32> {
        self.inner.pools.keys().copied().collect()
    }

    fn pool_name(&self, pool: u32) -> PyResult<String> {
        Ok(self.inner.pool(pool).map_err(|e| PyKeyError::new_err(e.to_string()))?.name.clone())
    }

    /// Device classes present, ascending.
    fn device_classes(&self) -> Vec<String> {
        self.inner.device_classes().iter().map(|c| c.to_string()).collect()
    }

    /// Fill fraction of one OSD.
    fn osd_utilization(&self, osd: u32) -> PyResult<f64> {
        self.inner.osd_utilization(osd).map_err(|e| PyKeyError::new_err(e.to_string()))
    }

    /// Population variance of OSD utilization, optionally restricted to one
    /// device class ("hdd", "ssd", "nvme").
    #[pyo3(signature = (device_class=None))]
    fn utilization_variance(&self, device_class: Option<&str>) -> PyResult<f64> {
        let class = parse_class(device_class)?;
        self.inner.utilization_variance(class).map_err(value_err)
    }

    /// Additional user bytes the pool can absorb before an OSD overflows.
    fn pool_free_space(&self, pool: u32) -> PyResult<u64> {
        self.inner.pool_free_space(pool).map_err(value_err)
    }

    /// Capacity-proportional fair share of the pool's shards on one OSD.
    fn ideal_shard_count(&self, pool: u32, osd: u32) -> PyResult<f64> {
        self.inner.ideal_shard_count(pool, osd).map_err(value_err)
    }

    fn __copy__(&self) -> Self {
        self.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "<ClusterState: {} OSDs, {} pools, {} PGs>",
            self.inner.osds.len(),
            self.inner.pools.len(),
            self.inner.pools.values().map(|p| p.pg_count).sum::<u32>()
        )
    }
}

/// One shard relocation.
#[pyclass(name = "Move", module = "equilibrium_py", frozen)]
struct PyMove {
    #[pyo3(get)]
    pool: u32,
    #[pyo3(get)]
    pg: u32,
    #[pyo3(get)]
    slot: u32,
    #[pyo3(get)]
    from_osd: u32,
    #[pyo3(get)]
    to_osd: u32,
    #[pyo3(get)]
    bytes: u64,
}

#[pymethods]
impl PyMove {
    fn __repr__(&self) -> String {
        format!(
            "<Move {}.{:x}[{}] {} -> {} ({} bytes)>",
            self.pool, self.pg, self.slot, self.from_osd, self.to_osd, self.bytes
        )
    }
}

impl From<&CoreMove> for PyMove {
    fn from(m: &CoreMove) -> Self {
        PyMove {
            pool: m.pool,
            pg: m.pg,
            slot: m.slot,
            from_osd: m.from,
            to_osd: m.to,
            bytes: m.bytes,
        }
    }
}

/// An ordered move list bound to the state it was generated from.
#[pyclass(name = "Plan", module = "equilibrium_py", skip_from_py_object)]
#[derive(Clone)]
struct PyPlan {
    inner: CorePlan,
}

#[pymethods]
impl PyPlan {
    /// Parse a plan file against its originating state.
    #[staticmethod]
    fn from_text(text: &str, state: &PyClusterState) -> PyResult<Self> {
        Ok(PyPlan { inner: core_parse_plan(text, &state.inner).map_err(value_err)? })
    }

    fn to_text(&self) -> String {
        write_plan(&self.inner)
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint.clone()
    }

    fn moves(&self) -> Vec<PyMove> {
        self.inner.moves.iter().map(PyMove::from).collect()
    }

    fn total_bytes(&self) -> u64 {
        self.inner.total_bytes()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("<Plan: {} moves, {} bytes>", self.inner.len(), self.inner.total_bytes())
    }
}

fn record_to_dict<'py>(py: Python<'py>, r: &TrajectoryRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("move_index", r.move_index)?;
    d.set_item("cumulative_moved_bytes", r.cumulative_moved_bytes)?;
    d.set_item("calc_time_ns", r.calc_time_ns)?;
    let variance = PyDict::new(py);
    for (class, v) in &r.class_variance {
        variance.set_item(class.to_string(), v)?;
    }
    d.set_item("variance", variance)?;
    let free = PyDict::new(py);
    for (pool, v) in &r.pool_free_bytes {
        free.set_item(pool, v)?;
    }
    d.set_item("pool_free_bytes", free)?;
    Ok(d)
}

/// Generate one of the synthetic cluster presets A-F.
#[pyfunction]
#[pyo3(signature = (preset, scale=1.0, seed=0))]
fn generate_preset(preset: &str, scale: f64, seed: u64) -> PyResult<PyClusterState> {
    let preset = Preset::from_str(preset).map_err(value_err)?;
    let state = core_generate(&PresetSpec { preset, scale, seed }).map_err(value_err)?;
    Ok(PyClusterState { inner: state })
}

/// Compute a size-aware rebalancing plan.
#[pyfunction]
#[pyo3(signature = (state, max_attempts=25, max_moves=None))]
fn balance_equilibrium(
    state: &PyClusterState,
    max_attempts: usize,
    max_moves: Option<usize>,
) -> PyResult<PyPlan> {
    let config = BalanceConfig { max_attempts, max_moves };
    let plan = balance::balance(&state.inner, &config).map_err(value_err)?;
    Ok(PyPlan { inner: plan })
}

/// Compute a count-based baseline plan.
#[pyfunction]
#[pyo3(signature = (state, max_moves=10_000, max_deviation=1))]
fn balance_count(state: &PyClusterState, max_moves: usize, max_deviation: u32) -> PyResult<PyPlan> {
    let config = CountBalanceConfig { max_moves, max_deviation };
    let plan = balance::balance_count(&state.inner, &config).map_err(value_err)?;
    Ok(PyPlan { inner: plan })
}

/// Apply a plan to a state, returning the final state and one metrics dict
/// per record (baseline plus one per move).
#[pyfunction]
fn simulate<'py>(
    py: Python<'py>,
    state: &PyClusterState,
    plan: &PyPlan,
) -> PyResult<(PyClusterState, Vec<Bound<'py, PyDict>>)> {
    let (final_state, records) =
        sim::simulate_plan(&state.inner, &plan.inner).map_err(value_err)?;
    let dicts = records
        .iter()
        .map(|r| record_to_dict(py, r))
        .collect::<PyResult<Vec<_>>>()?;
    Ok((PyClusterState { inner: final_state }, dicts))
}

/// Render the metrics CSV for a simulated plan.
#[pyfunction]
fn metrics_csv(state: &PyClusterState, plan: &PyPlan) -> PyResult<String> {
    let (_, records) = sim::simulate_plan(&state.inner, &plan.inner).map_err(value_err)?;
    Ok(write_metrics_csv(&records))
}

#[pymodule]
fn equilibrium_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClusterState>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyMove>()?;
    m.add_function(wrap_pyfunction!(generate_preset, m)?)?;
    m.add_function(wrap_pyfunction!(balance_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(balance_count, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_csv, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
