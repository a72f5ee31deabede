use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hybridrelay::phy;
use hybridrelay::report::{summary_kv, sweep_csv, trace_csv};
use hybridrelay::verify::check_subproblems;
use hybridrelay::{metrics, Error, Policy, SweepAxis, SystemConfig, Window};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) | Error::InstanceTooLarge(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Invariant { .. } | Error::InfeasibleSupply { .. } => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_arg<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn window(spec: &str) -> PyResult<Window> {
    match spec {
        "all" => Ok(Window::All),
        "last-half" => Ok(Window::LastHalf),
        other => other
            .parse::<usize>()
            .map(Window::From)
            .map_err(|_| PyValueError::new_err(format!("window must be 'all', 'last-half' or a slot index, got {other:?}"))),
    }
}

/// Simulator configuration. Starts from the reference cell.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SystemConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        PyConfig { inner: SystemConfig::paper_default() }
    }

    /// Parses `key = value` text on top of the reference values.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        SystemConfig::parse(text).map(|inner| PyConfig { inner }).map_err(to_py)
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(to_py)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        let text = self.inner.to_config_string();
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim().to_string())
            .ok_or_else(|| PyValueError::new_err(format!("unknown key {key:?}")))
    }

    /// Raises `ValueError` naming the first violated inequality.
    fn validate(&self) -> PyResult<()> {
        self.inner.clone().validate().map(|_| ()).map_err(to_py)
    }

    fn v_upper_bound(&self) -> f64 {
        self.inner.v_upper_bound()
    }

    fn to_string(&self) -> String {
        self.inner.to_config_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(num_users={}, num_relays={}, num_subcarriers={}, v={}, varphi={})",
            self.inner.num_users, self.inner.num_relays, self.inner.num_subcarriers, self.inner.v, self.inner.varphi
        )
    }
}

/// A completed simulation run.
#[pyclass(name = "Trace")]
struct PyTrace {
    inner: hybridrelay::Trace,
}

#[pymethods]
impl PyTrace {
    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    #[getter]
    fn policy(&self) -> &'static str {
        self.inner.policy.as_str()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// `Q_n(t)` per slot.
    fn queues(&self) -> Vec<Vec<f64>> {
        self.inner.records.iter().map(|r| r.state.q.clone()).collect()
    }

    /// `U_n(t)` per slot.
    fn virtual_queues(&self) -> Vec<Vec<f64>> {
        self.inner.records.iter().map(|r| r.state.u.clone()).collect()
    }

    fn battery(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.state.s).collect()
    }

    fn grid_power(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.grid_power).collect()
    }

    fn to_csv(&self) -> String {
        trace_csv(&self.inner)
    }

    /// Time averages over `window` ("all", "last-half" or a start slot).
    #[pyo3(signature = (window = "last-half"))]
    fn summary<'py>(&self, py: Python<'py>, window: &str) -> PyResult<Bound<'py, PyDict>> {
        let s = metrics(&self.inner, self::window(window)?);
        let d = PyDict::new(py);
        d.set_item("slots", s.slots)?;
        d.set_item("mean_admitted", s.mean_admitted)?;
        d.set_item("mean_service", s.mean_service)?;
        for (k, v) in [
            ("throughput", s.throughput),
            ("grid_power", s.grid_power),
            ("objective", s.objective),
            ("fairness", s.fairness),
            ("max_q", s.max_q),
            ("max_u", s.max_u),
            ("battery_min", s.battery_min),
            ("battery_max", s.battery_max),
            ("mean_u_sum", s.mean_u_sum),
            ("xi", s.xi),
            ("xi_over_v", s.xi_over_v),
            ("energy_balance_gap", s.energy_balance_gap),
            ("energy_balance_bound", s.energy_balance_bound),
            ("mean_dual_iterations", s.mean_dual_iterations),
        ] {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    #[pyo3(signature = (window = "last-half"))]
    fn summary_text(&self, window: &str) -> PyResult<String> {
        Ok(summary_kv(&metrics(&self.inner, self::window(window)?)))
    }
}

/// Simulates `slots` slots of `policy` ("free", "no-relay", "grid-only", "per-slot-num").
#[pyfunction]
#[pyo3(signature = (config, policy = "free", seed = 1, slots = 1000))]
fn run(py: Python<'_>, config: &PyConfig, policy: &str, seed: u64, slots: u64) -> PyResult<PyTrace> {
    let policy: Policy = parse_arg(policy)?;
    let cfg = config.inner.clone().validate().map_err(to_py)?;
    let trace = py.detach(|| hybridrelay::run(&cfg, policy, seed, slots)).map_err(to_py)?;
    Ok(PyTrace { inner: trace })
}

/// Sweeps `axis` ("v" or "varphi") and returns the sweep CSV.
#[pyfunction]
#[pyo3(signature = (config, axis, values, seeds, slots = 2000, policy = "free"))]
fn sweep(
    py: Python<'_>,
    config: &PyConfig,
    axis: &str,
    values: Vec<f64>,
    seeds: Vec<u64>,
    slots: u64,
    policy: &str,
) -> PyResult<String> {
    let axis: SweepAxis = parse_arg(axis)?;
    let policy: Policy = parse_arg(policy)?;
    let cfg = config.inner.clone();
    let rows = py.detach(|| hybridrelay::sweep(&cfg, axis, &values, &seeds, slots, policy));
    Ok(sweep_csv(axis, &rows))
}

/// `log2(1 + p h)`.
#[pyfunction]
fn direct_rate(p: f64, h: f64) -> PyResult<f64> {
    phy::direct_rate(p, h).map_err(to_py)
}

/// Two-hop decode-and-forward rate with direct-link combining.
#[pyfunction]
fn df_rate(p_b: f64, p_r: f64, h_br: f64, h_bu: f64, h_ru: f64) -> PyResult<f64> {
    phy::df_rate(p_b, p_r, h_br, h_bu, h_ru).map_err(to_py)
}

#[pyfunction]
fn fairness_index(x: Vec<f64>) -> f64 {
    hybridrelay::metrics::fairness_index(&x)
}

/// Closed-form subproblems against grid search; one dict per kind.
#[pyfunction]
#[pyo3(signature = (cases = 100, resolution = 2000, seed = 1))]
fn verify_subproblems<'py>(py: Python<'py>, cases: usize, resolution: usize, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let reports = py.detach(|| check_subproblems(cases, resolution, seed)).map_err(to_py)?;
    reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("kind", r.kind)?;
            d.set_item("cases", r.cases)?;
            d.set_item("max_excess", r.max_excess)?;
            d.set_item("min_excess", r.min_excess)?;
            d.set_item("out_of_tolerance", r.out_of_tolerance)?;
            d.set_item("below_grid", r.below_grid)?;
            d.set_item("passed", r.passed())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pyhybridrelay(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(direct_rate, m)?)?;
    m.add_function(wrap_pyfunction!(df_rate, m)?)?;
    m.add_function(wrap_pyfunction!(fairness_index, m)?)?;
    m.add_function(wrap_pyfunction!(verify_subproblems, m)?)?;
    m.add("POLICIES", Policy::ALL.iter().map(|p| p.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
