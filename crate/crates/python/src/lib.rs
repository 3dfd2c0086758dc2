//! Python bindings: `import tssa`.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tssa_core::diagnostics::{self, ConjugateOracle};
use tssa_core::rng::StreamState;
use tssa_core::sampler::{self, LangevinConfig, SaSchedule};
use tssa_core::{config, harness, EnvironmentKind, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Runtime(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Seeded Gaussian/uniform source; identical to the streams the harness uses.
#[pyclass(name = "Stream", module = "tssa", skip_from_py_object)]
#[derive(Clone)]
struct PyStream {
    inner: tssa_core::Stream,
}

#[pymethods]
impl PyStream {
    #[new]
    fn new(seed: u64) -> Self {
        Self {
            inner: tssa_core::Stream::seeded(seed),
        }
    }

    /// The stream keyed by `(base_seed, label, trial)`.
    #[staticmethod]
    fn provision(base_seed: u64, label: &str, trial: u64) -> Self {
        Self {
            inner: tssa_core::provision_stream(base_seed, label, trial),
        }
    }

    fn gaussian(&mut self) -> f64 {
        self.inner.gaussian()
    }

    fn uniform(&mut self) -> f64 {
        self.inner.uniform()
    }

    fn below(&mut self, n: usize) -> PyResult<usize> {
        if n == 0 {
            return Err(PyValueError::new_err("n must be positive"));
        }
        Ok(self.inner.below(n))
    }

    /// `(seed_bytes, word_position, cached_spare)`.
    fn get_state(&self) -> (Vec<u8>, u128, Option<f64>) {
        let s = self.inner.state();
        (s.seed.to_vec(), s.word_pos, s.spare)
    }

    #[staticmethod]
    fn from_state(seed: Vec<u8>, word_pos: u128, spare: Option<f64>) -> PyResult<Self> {
        let seed: [u8; 32] = seed
            .try_into()
            .map_err(|_| PyValueError::new_err("seed must be 32 bytes"))?;
        Ok(Self {
            inner: tssa_core::Stream::restore(&StreamState {
                seed,
                word_pos,
                spare,
            }),
        })
    }

    fn copy(&self) -> Self {
        self.clone()
    }
}

#[pyclass(name = "LinearGaussianModel", module = "tssa")]
struct PyModel {
    inner: tssa_core::LinearGaussianModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (feature, noise_variance = 1.0))]
    fn new(feature: Vec<f64>, noise_variance: f64) -> PyResult<Self> {
        Ok(Self {
            inner: tssa_core::LinearGaussianModel::new(feature, noise_variance).map_err(py_err)?,
        })
    }

    #[getter]
    fn feature(&self) -> Vec<f64> {
        self.inner.feature().to_vec()
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise_variance()
    }

    fn mean(&self, theta: Vec<f64>) -> PyResult<f64> {
        self.inner.mean(&theta).map_err(py_err)
    }

    fn sample(&self, theta: Vec<f64>, stream: &mut PyStream) -> PyResult<f64> {
        self.inner.sample(&theta, &mut stream.inner).map_err(py_err)
    }

    fn log_density(&self, x: f64, theta: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(x, &theta).map_err(py_err)
    }

    fn grad_log_density(&self, x: f64, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad_log_density(x, &theta).map_err(py_err)
    }
}

#[pyclass(name = "BanditInstance", module = "tssa")]
struct PyInstance {
    inner: tssa_core::BanditInstance,
}

#[pymethods]
impl PyInstance {
    /// `kind` is `"sgr"` or `"mgr"`.
    #[new]
    #[pyo3(signature = (kind, arms = 10, gap = 0.5, mu1 = 3.0, sigma2 = 1.0))]
    fn new(kind: &str, arms: usize, gap: f64, mu1: f64, sigma2: f64) -> PyResult<Self> {
        let kind = match kind {
            "sgr" => EnvironmentKind::Sgr,
            "mgr" => EnvironmentKind::Mgr,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown environment kind `{other}`"
                )))
            }
        };
        Ok(Self {
            inner: tssa_core::BanditInstance::build(kind, arms, gap, mu1, sigma2)
                .map_err(py_err)?,
        })
    }

    #[getter]
    fn num_arms(&self) -> usize {
        self.inner.num_arms()
    }

    #[getter]
    fn true_means(&self) -> Vec<f64> {
        self.inner.true_means().to_vec()
    }

    #[getter]
    fn optimal_arm(&self) -> usize {
        self.inner.optimal_arm()
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap()
    }

    /// `(reward, pseudo_regret_increment)`.
    fn pull(&self, arm: usize, stream: &mut PyStream) -> PyResult<(f64, f64)> {
        if arm >= self.inner.num_arms() {
            return Err(PyValueError::new_err(format!(
                "arm index {arm} out of range"
            )));
        }
        Ok(self.inner.pull(arm, &mut stream.inner))
    }
}

#[pyfunction]
#[pyo3(signature = (n, c1 = 144.07, c2 = 677.88, c3 = 40.02, alpha = 0.999))]
fn sa_step_size(n: u64, c1: f64, c2: f64, c3: f64, alpha: f64) -> PyResult<f64> {
    let s = SaSchedule { c1, c2, c3, alpha };
    s.validate().map_err(py_err)?;
    if n == 0 {
        return Err(PyValueError::new_err("n must be at least 1"));
    }
    Ok(sampler::sa_step_size(&s, n))
}

#[pyfunction]
fn decision_sample(theta: Vec<f64>, n: u64, tau: f64, stream: &mut PyStream) -> PyResult<Vec<f64>> {
    if n == 0 || tau.is_nan() || tau <= 0.0 {
        return Err(PyValueError::new_err("need n >= 1 and tau > 0"));
    }
    Ok(sampler::decision_sample(&theta, n, tau, &mut stream.inner))
}

/// One TS-SA parameter update on the given reward window (oldest first).
#[pyfunction]
#[pyo3(signature = (theta, recent, model, gamma, stream, h = 0.532, batch_cap = 27, inner_iters = 1))]
#[allow(clippy::too_many_arguments)]
fn ts_sa_update(
    theta: Vec<f64>,
    recent: Vec<f64>,
    model: &PyModel,
    gamma: f64,
    stream: &mut PyStream,
    h: f64,
    batch_cap: usize,
    inner_iters: usize,
) -> PyResult<Vec<f64>> {
    let cfg = LangevinConfig {
        step_size: h,
        inner_iters,
        batch_cap,
        temperature: 1.0,
    };
    cfg.validate().map_err(py_err)?;
    sampler::ts_sa_update(
        &theta,
        &recent,
        &model.inner,
        &cfg,
        gamma,
        &mut stream.inner,
    )
    .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (prior_mean, prior_variance, data, noise_variance = 1.0))]
fn conjugate_posterior(
    prior_mean: f64,
    prior_variance: f64,
    data: Vec<f64>,
    noise_variance: f64,
) -> PyResult<(f64, f64)> {
    if !(prior_variance > 0.0 && noise_variance > 0.0) {
        return Err(PyValueError::new_err("variances must be positive"));
    }
    Ok(diagnostics::conjugate_posterior(&ConjugateOracle {
        prior_mean,
        prior_variance,
        data,
        noise_variance,
    }))
}

/// Parses a TOML experiment and returns it with every default filled in.
#[pyfunction]
fn normalize_config(text: &str) -> PyResult<String> {
    let spec = config::parse_config_str(text).map_err(py_err)?;
    config::to_toml_string(&spec).map_err(py_err)
}

/// Runs a TOML experiment; returns `{policy: {"rounds", "mean", "stderr"}}`.
#[pyfunction]
#[pyo3(signature = (text, threads = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    text: &str,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = config::parse_config_str(text).map_err(py_err)?;
    let results = py
        .detach(|| harness::run_experiment_with_threads(&spec, threads))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    for (name, agg) in results {
        let d = PyDict::new(py);
        d.set_item("rounds", agg.rounds)?;
        d.set_item("mean", agg.mean)?;
        d.set_item("stderr", agg.stderr)?;
        out.set_item(name, d)?;
    }
    Ok(out)
}

#[pymodule]
pub fn tssa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStream>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(sa_step_size, m)?)?;
    m.add_function(wrap_pyfunction!(decision_sample, m)?)?;
    m.add_function(wrap_pyfunction!(ts_sa_update, m)?)?;
    m.add_function(wrap_pyfunction!(conjugate_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
