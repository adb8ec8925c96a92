//! Python module `pynvspin`.

use nvspin::config::SpinSystemConfig;
use nvspin::dynamics::{self, Frame, PropagationSettings};
use nvspin::error::Error;
use nvspin::estimation::{self, FitOptions, ReadoutModel, SweepDataset, SweepPoint, SweepProtocol};
use nvspin::hamiltonian;
use nvspin::mixing;
use nvspin::operator::{Manifold, C64};
use nvspin::oscillation;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_usage() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn manifold(value: &Bound<'_, PyAny>) -> PyResult<Manifold> {
    if let Ok(i) = value.extract::<i64>() {
        return Manifold::from_m_s(i).ok_or_else(|| PyValueError::new_err(format!("m_s must be +1, 0 or -1, got {i}")));
    }
    let s: String = value.extract()?;
    s.parse().map_err(PyValueError::new_err)
}

/// Constants and drive settings; frequencies in MHz, fields in G.
#[pyclass(name = "SpinSystemConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SpinSystemConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut c = PyConfig { inner: SpinSystemConfig::default() };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                c.set(&key, v.extract()?)?;
            }
        }
        c.inner.validate().map_err(to_py)?;
        Ok(c)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: SpinSystemConfig::from_toml_str(text).map_err(to_py)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn with_field(&self, b_z: f64) -> Self {
        Self { inner: self.inner.with_field(b_z) }
    }

    fn with_a_perp(&self, a_perp: f64) -> Self {
        Self { inner: self.inner.with_a_perp(a_perp) }
    }

    fn with_b1(&self, b1: f64) -> Self {
        Self { inner: self.inner.with_b1(b1) }
    }

    /// Copy with the drive tuned to the dressed nuclear transition of `manifold`.
    fn resonant(&self, manifold: &Bound<'_, PyAny>) -> PyResult<Self> {
        let m = self::manifold(manifold)?;
        Ok(Self { inner: dynamics::with_resonant_drive(&self.inner, m).map_err(to_py)? })
    }

    fn __getattr__(&self, name: &str) -> PyResult<f64> {
        self.get(name)
    }

    fn __setattr__(&mut self, name: &str, value: f64) -> PyResult<()> {
        self.set(name, value)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

impl PyConfig {
    fn field(&mut self, name: &str) -> PyResult<&mut f64> {
        let c = &mut self.inner;
        Ok(match name {
            "delta" => &mut c.delta,
            "q_quad" => &mut c.q_quad,
            "a_par" => &mut c.a_par,
            "a_perp" => &mut c.a_perp,
            "gamma_e" => &mut c.gamma_e,
            "gamma_n" => &mut c.gamma_n,
            "b_z" => &mut c.b_z,
            "b1" => &mut c.b1,
            "omega_rf" => &mut c.omega_rf,
            other => return Err(PyValueError::new_err(format!("unknown field {other:?}"))),
        })
    }

    fn get(&self, name: &str) -> PyResult<f64> {
        self.clone().field(name).map(|v| *v)
    }

    fn set(&mut self, name: &str, value: f64) -> PyResult<()> {
        *self.field(name)? = value;
        Ok(())
    }
}

/// Enhancement factors `(alpha_p1, alpha_0, alpha_m1)`; method is
/// "first-order", "exact" or "full".
#[pyfunction]
#[pyo3(signature = (config, method = "exact"))]
fn enhancement(config: &PyConfig, method: &str) -> PyResult<(f64, f64, f64)> {
    let set = match method {
        "first-order" => mixing::enhancement_first_order(&config.inner),
        "exact" => mixing::enhancement_exact(&config.inner),
        "full" => mixing::enhancement_full_model(&config.inner),
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    }
    .map_err(to_py)?;
    Ok((set.alpha_p1, set.alpha_0, set.alpha_m1))
}

/// Mixing angles `(theta_plus, theta_minus)` in radians.
#[pyfunction]
fn zq_angles(config: &PyConfig) -> PyResult<(f64, f64)> {
    let a = mixing::zq_angles(&config.inner).map_err(to_py)?;
    Ok((a.theta_plus, a.theta_minus))
}

/// Static Hamiltonian as nested lists of complex numbers (MHz), basis
/// `(m_s = +1, 0, -1) x (m_I = +1, 0)`.
#[pyfunction]
fn static_hamiltonian(config: &PyConfig) -> Vec<Vec<C64>> {
    let h = hamiltonian::build_static(&config.inner);
    let m = h.matrix();
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

/// Resonance, signed Rabi frequency and detuning (MHz) of the drive in `manifold`.
#[pyfunction]
fn nuclear_drive<'py>(py: Python<'py>, config: &PyConfig, manifold: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyDict>> {
    let d = dynamics::nuclear_drive(&config.inner, self::manifold(manifold)?).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("resonance", d.resonance)?;
    out.set_item("rabi", d.rabi)?;
    out.set_item("detuning", d.detuning)?;
    out.set_item("generalized", d.generalized())?;
    Ok(out)
}

/// Population of the dressed `|m,0>` state at `times` (us).
#[pyfunction]
#[pyo3(signature = (config, manifold, times, frame = "rwa"))]
fn rabi_trace(config: &PyConfig, manifold: &Bound<'_, PyAny>, times: Vec<f64>, frame: &str) -> PyResult<Vec<f64>> {
    let frame: Frame = frame.parse().map_err(PyValueError::new_err)?;
    let settings = PropagationSettings::for_config(&config.inner);
    let trace = dynamics::rabi_trace(&config.inner, self::manifold(manifold)?, &times, frame, &settings).map_err(to_py)?;
    Ok(trace.population)
}

/// Cosine fit; returns a dict with frequency, std_error, amplitude, phase, offset.
#[pyfunction]
fn fit_cosine<'py>(py: Python<'py>, t: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let f = oscillation::fit_cosine(&t, &y).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("frequency", f.frequency)?;
    out.set_item("std_error", f.std_error)?;
    out.set_item("amplitude", f.amplitude)?;
    out.set_item("phase", f.phase)?;
    out.set_item("offset", f.offset)?;
    Ok(out)
}

/// Synthetic amplitude sweep with shot noise. Returns rows
/// `(manifold, x, omega_m, sigma)`; `config.a_perp` is the ground truth.
#[pyfunction]
#[pyo3(signature = (config, b1_max = 10.0, amplitudes = 5, repetitions = 60_000, seed = 0))]
fn synth_sweep(config: &PyConfig, b1_max: f64, amplitudes: usize, repetitions: u64, seed: u64) -> PyResult<Vec<(String, f64, f64, f64)>> {
    let protocol = SweepProtocol { b1_max, amplitudes: estimation::uniform_amplitudes(amplitudes), ..Default::default() };
    let readout = ReadoutModel { repetitions, ..Default::default() };
    let data = estimation::synth_sweep(&config.inner, &protocol, &readout, seed).map_err(to_py)?;
    Ok(data.points.iter().map(|p| (p.manifold.to_string(), p.x, p.omega_m, p.sigma)).collect())
}

/// Global fit for the transverse hyperfine coupling; returns the JSON report
/// as a dict. `config.b_z` is the field of the data.
#[pyfunction]
#[pyo3(signature = (rows, config, a_perp_start = 2.5))]
fn fit_transverse_hyperfine<'py>(
    py: Python<'py>,
    rows: Vec<(Bound<'py, PyAny>, f64, f64, f64)>,
    config: &PyConfig,
    a_perp_start: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let points = rows
        .iter()
        .map(|(m, x, omega_m, sigma)| Ok(SweepPoint { manifold: manifold(m)?, x: *x, omega_m: *omega_m, sigma: *sigma }))
        .collect::<PyResult<Vec<_>>>()?;
    let data = SweepDataset { b_z: config.inner.b_z, points };
    let options = FitOptions { a_perp_start, ..Default::default() };
    let fit = estimation::fit_transverse_hyperfine(&data, &config.inner, &options).map_err(to_py)?;
    let json = serde_json::to_string(&fit).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (json,))
}

#[pymodule]
fn pynvspin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(enhancement, m)?)?;
    m.add_function(wrap_pyfunction!(zq_angles, m)?)?;
    m.add_function(wrap_pyfunction!(static_hamiltonian, m)?)?;
    m.add_function(wrap_pyfunction!(nuclear_drive, m)?)?;
    m.add_function(wrap_pyfunction!(rabi_trace, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cosine, m)?)?;
    m.add_function(wrap_pyfunction!(synth_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fit_transverse_hyperfine, m)?)?;
    Ok(())
}
