//! Python bindings: `import hybridsim_py`.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use hybridsim::config::{load_hardware, load_model, zoo_models as zoo, DEFAULT_CONTEXT_LENS};
use hybridsim::engine::ArchMode;
use hybridsim::metrics::simulate_report;
use hybridsim::pim::{functional_mvm as mvm, AdcMode, PimSpec, TernaryMatrix};
use hybridsim::report::{to_json_value, RunRecord};
use hybridsim::sweep::run_sweep;
use hybridsim::systolic::{self, Dataflow, GemmShape, Residency, TileCost, TpuSpec};
use hybridsim::workload::{build_op_graph, low_precision_fraction, mac_counts};

fn py_err(e: hybridsim::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_u64() {
            Some(u) => u.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

#[pyclass(name = "ModelSpec", module = "hybridsim_py", from_py_object)]
#[derive(Clone)]
struct PyModelSpec {
    inner: hybridsim::ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    #[new]
    #[pyo3(signature = (name, d, h, d_ff, n_layers, context_len = 128))]
    fn new(name: &str, d: u64, h: u64, d_ff: u64, n_layers: u64, context_len: u64) -> PyResult<Self> {
        let inner = hybridsim::ModelSpec::new(name, d, h, d_ff, n_layers, context_len).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Loads a zoo model by name, or a model file by path.
    #[staticmethod]
    fn load(name_or_path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_model(name_or_path).map_err(py_err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }
    #[getter]
    fn d(&self) -> u64 {
        self.inner.d
    }
    #[getter]
    fn h(&self) -> u64 {
        self.inner.h
    }
    #[getter]
    fn d_ff(&self) -> u64 {
        self.inner.d_ff
    }
    #[getter]
    fn n_layers(&self) -> u64 {
        self.inner.n_layers
    }
    #[getter]
    fn context_len(&self) -> u64 {
        self.inner.context_len
    }

    fn with_context(&self, context_len: u64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_context(context_len).map_err(py_err)?,
        })
    }

    /// `(low_precision_macs, high_precision_macs)` for one decode step.
    fn mac_counts(&self) -> PyResult<(u64, u64)> {
        let c = mac_counts(&build_op_graph(&self.inner).map_err(py_err)?);
        Ok((c.low, c.high))
    }

    fn low_precision_fraction(&self) -> PyResult<f64> {
        low_precision_fraction(&self.inner).map_err(py_err)
    }

    fn num_matmuls(&self) -> PyResult<usize> {
        Ok(build_op_graph(&self.inner).map_err(py_err)?.matmuls().count())
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!(
            "ModelSpec(name={:?}, d={}, h={}, d_ff={}, n_layers={}, context_len={})",
            m.name, m.d, m.h, m.d_ff, m.n_layers, m.context_len
        )
    }
}

#[pyclass(name = "HardwareSpec", module = "hybridsim_py", from_py_object)]
#[derive(Clone)]
struct PyHardwareSpec {
    inner: hybridsim::HardwareSpec,
}

#[pymethods]
impl PyHardwareSpec {
    /// Built-in defaults, or the given TOML file layered over them.
    #[new]
    #[pyo3(signature = (path = None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let (inner, _) = load_hardware(path.as_deref()).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dataflow(&self) -> String {
        self.inner.tpu.dataflow.to_string()
    }

    #[getter]
    fn calibration(&self) -> &'static str {
        self.inner.calibration.as_str()
    }

    fn with_dataflow(&self, dataflow: &str) -> PyResult<Self> {
        let df: Dataflow = dataflow.parse().map_err(py_err)?;
        Ok(Self {
            inner: self.inner.with_dataflow(df),
        })
    }
}

fn hw_or_default(hw: Option<PyHardwareSpec>) -> hybridsim::HardwareSpec {
    hw.map(|h| h.inner).unwrap_or_default()
}

fn records_to_py<'py>(py: Python<'py>, records: &[RunRecord]) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &to_json_value(records))
}

/// One decode step; returns the flattened output record as a dict.
#[pyfunction]
#[pyo3(signature = (model, hw = None, mode = "hybrid"))]
fn simulate<'py>(
    py: Python<'py>,
    model: &PyModelSpec,
    hw: Option<PyHardwareSpec>,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let hw = hw_or_default(hw);
    let mode: ArchMode = mode.parse().map_err(py_err)?;
    let report = simulate_report(&model.inner, &hw, mode).map_err(py_err)?;
    let records = records_to_py(py, &[RunRecord::from_report(&report, hw.calibration)])?;
    records.get_item(0)
}

/// Grid sweep; returns a list of record dicts.
#[pyfunction]
#[pyo3(signature = (models = None, hw = None, context_lens = None, modes = None))]
fn sweep<'py>(
    py: Python<'py>,
    models: Option<Vec<PyModelSpec>>,
    hw: Option<PyHardwareSpec>,
    context_lens: Option<Vec<u64>>,
    modes: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let models = match models {
        Some(ms) => ms.into_iter().map(|m| m.inner).collect(),
        None => zoo(),
    };
    let ctx = context_lens.unwrap_or_else(|| DEFAULT_CONTEXT_LENS.to_vec());
    let modes = match modes {
        Some(ms) => ms
            .iter()
            .map(|m| m.parse::<ArchMode>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(py_err)?,
        None => ArchMode::ALL.to_vec(),
    };
    let hw = hw_or_default(hw);
    let records = py
        .detach(|| run_sweep(&models, &hw, &ctx, &modes))
        .map_err(py_err)?;
    records_to_py(py, &records)
}

fn tile_cost_dict<'py>(py: Python<'py>, c: &TileCost) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("compute_cycles", c.compute_cycles)?;
    d.set_item("stall_cycles", c.stall_cycles)?;
    d.set_item("total_cycles", c.total_cycles())?;
    d.set_item("macs", c.macs)?;
    d.set_item("sram_reads_bytes", c.sram_reads_bytes)?;
    d.set_item("sram_writes_bytes", c.sram_writes_bytes)?;
    d.set_item("dram_reads_bytes", c.dram_reads_bytes)?;
    Ok(d)
}

fn array(rows: u64, cols: u64, dataflow: &str) -> PyResult<TpuSpec> {
    Ok(TpuSpec {
        rows,
        cols,
        dataflow: dataflow.parse().map_err(py_err)?,
        ..TpuSpec::default()
    })
}

/// Closed-form systolic cost of an `(m × k)·(k × n)` GEMM.
#[pyfunction]
#[pyo3(signature = (m, k, n, rows = 32, cols = 32, dataflow = "OS", streamed = false))]
fn analytic_cycles<'py>(
    py: Python<'py>,
    m: u64,
    k: u64,
    n: u64,
    rows: u64,
    cols: u64,
    dataflow: &str,
    streamed: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let residency = if streamed { Residency::Streamed } else { Residency::OnChip };
    let shape = GemmShape::new(m, k, n).map_err(py_err)?;
    let cost = systolic::analytic_cycles(shape, &array(rows, cols, dataflow)?, residency).map_err(py_err)?;
    tile_cost_dict(py, &cost)
}

/// Cycle-by-cycle reference simulation of the same GEMM.
#[pyfunction]
#[pyo3(signature = (m, k, n, rows = 32, cols = 32, dataflow = "OS"))]
fn cycle_accurate_sim<'py>(
    py: Python<'py>,
    m: u64,
    k: u64,
    n: u64,
    rows: u64,
    cols: u64,
    dataflow: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let shape = GemmShape::new(m, k, n).map_err(py_err)?;
    let hw = array(rows, cols, dataflow)?;
    let cost = py.detach(|| systolic::cycle_accurate_sim(shape, &hw)).map_err(py_err)?;
    tile_cost_dict(py, &cost)
}

/// `Wᵀ·x` on square crossbars of `xbar_size`; `weights` is row-major rows × cols.
#[pyfunction]
#[pyo3(signature = (weights, x, xbar_size = 256, quantized = false))]
fn functional_mvm(weights: Vec<Vec<i8>>, x: Vec<i32>, xbar_size: u64, quantized: bool) -> PyResult<Vec<i64>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if weights.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("weight rows have different lengths"));
    }
    let w = TernaryMatrix::new(rows, cols, weights.concat()).map_err(py_err)?;
    let hw = PimSpec {
        xbar_rows: xbar_size,
        xbar_cols: xbar_size,
        adcs_per_xbar: xbar_size.min(PimSpec::default().adcs_per_xbar),
        ..PimSpec::default()
    };
    let mode = if quantized { AdcMode::Quantized } else { AdcMode::Ideal };
    mvm(&w, &x, &hw, mode).map_err(py_err)
}

#[pyfunction]
fn zoo_models() -> Vec<PyModelSpec> {
    zoo().into_iter().map(|inner| PyModelSpec { inner }).collect()
}

#[pymodule]
fn hybridsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyHardwareSpec>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_accurate_sim, m)?)?;
    m.add_function(wrap_pyfunction!(functional_mvm, m)?)?;
    m.add_function(wrap_pyfunction!(zoo_models, m)?)?;
    Ok(())
}
