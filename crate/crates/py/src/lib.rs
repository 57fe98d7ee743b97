//! Python bindings: parameters, populations, simulation, likelihoods, MCMC fits and
//! the latent tests. Structured results come back as plain dicts.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use kernelcrit::criticism::{ilr_test, llrt_pvalue_mean, LlrtOptions, Objective, TieRule};
use kernelcrit::harness::{estimate_latent_power, ParamSet, PowerConfig};
use kernelcrit::inference::{default_kappa, run_chain, ChainSettings, ChainState, PriorSpec};
use kernelcrit::likelihood::{extract_partial_data, full_loglik, partial_loglik};
use kernelcrit::model::{
    read_observed, write_event_log, HostPopulation, KernelFamily, KernelSpec, ModelParams, ObservedData, Sojourn,
    Trajectory,
};
use kernelcrit::rng::rng_from_seed;
use kernelcrit::simulator::{simulate as simulate_epidemic, SimulationOptions};

fn err(e: kernelcrit::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn family(name: &str) -> PyResult<KernelFamily> {
    name.parse().map_err(err)
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Spatial kernel `K(d)` of a family (`exp`, `pow` or `gauss`) and decay `kappa`.
#[pyclass(name = "Kernel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyKernel(KernelSpec);

#[pymethods]
impl PyKernel {
    #[new]
    fn new(family_name: &str, kappa: f64) -> PyResult<Self> {
        Ok(Self(KernelSpec::new(family(family_name)?, kappa).map_err(err)?))
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.0.family.tag()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa
    }

    fn __call__(&self, d: f64) -> PyResult<f64> {
        self.0.eval(d).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Kernel('{}', {})", self.0.family.tag(), self.0.kappa)
    }
}

/// Model parameters. Sojourns are gamma, given by mean and variance.
#[pyclass(name = "Params", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams(ModelParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (alpha, beta, kernel, latent_mean, latent_var, infectious_mean, infectious_var))]
    fn new(
        alpha: f64,
        beta: f64,
        kernel: &PyKernel,
        latent_mean: f64,
        latent_var: f64,
        infectious_mean: f64,
        infectious_var: f64,
    ) -> PyResult<Self> {
        let latent = Sojourn::new(latent_mean, latent_var).map_err(err)?;
        let infectious = Sojourn::new(infectious_mean, infectious_var).map_err(err)?;
        Ok(Self(ModelParams::new(alpha, beta, kernel.0, latent, infectious).map_err(err)?))
    }

    /// Named parameter set: `original`, `alpha_x2`, `beta_x2` or `kappa_x2`.
    #[staticmethod]
    fn preset(tag: &str) -> PyResult<Self> {
        Ok(Self(ParamSet::from_tag(tag).map_err(err)?.params()))
    }

    #[getter]
    fn kernel(&self) -> PyKernel {
        PyKernel(self.0.kernel)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        let [a, b, k, me, ve, mi, vi] = self.0.to_vec();
        format!(
            "Params(alpha={a}, beta={b}, kernel={}:{k}, latent={me}:{ve}, infectious={mi}:{vi})",
            self.0.kernel.family.tag()
        )
    }
}

/// Host positions in a square region.
#[pyclass(name = "Population", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPopulation(Arc<HostPopulation>);

#[pymethods]
impl PyPopulation {
    #[new]
    fn new(coords: Vec<[f64; 2]>, region_side: f64) -> PyResult<Self> {
        Ok(Self(Arc::new(HostPopulation::new(coords, region_side).map_err(err)?)))
    }

    /// `n` hosts placed uniformly at random.
    #[staticmethod]
    fn uniform(n: usize, region_side: f64, seed: u64) -> PyResult<Self> {
        let pop = HostPopulation::uniform(n, region_side, &mut rng_from_seed(seed)).map_err(err)?;
        Ok(Self(Arc::new(pop)))
    }

    #[getter]
    fn coords(&self) -> Vec<[f64; 2]> {
        self.0.coords().to_vec()
    }

    #[getter]
    fn region_side(&self) -> f64 {
        self.0.region_side()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Observed infection and removal times.
#[pyclass(name = "Observed", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyObserved(ObservedData);

#[pymethods]
impl PyObserved {
    /// Parse an observation CSV; `t_max` defaults to the latest event.
    #[staticmethod]
    #[pyo3(signature = (text, region_side, t_max=None))]
    fn from_csv(text: &str, region_side: f64, t_max: Option<f64>) -> PyResult<Self> {
        Ok(Self(read_observed(text.as_bytes(), region_side, t_max).map_err(err)?))
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.0.t_max()
    }

    #[getter]
    fn infected_count(&self) -> usize {
        self.0.infected_count()
    }

    /// `(infection_time, removal_time)` per host, `None` where unobserved.
    fn hosts(&self) -> Vec<(Option<f64>, Option<f64>)> {
        (0..self.0.len()).map(|h| (self.0.infection(h), self.0.removal(h))).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// A complete epidemic: exposure, infection and removal times per host.
#[pyclass(name = "Trajectory", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTrajectory(Trajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn t_max(&self) -> f64 {
        self.0.t_max()
    }

    #[getter]
    fn exposed_count(&self) -> usize {
        self.0.exposed_count()
    }

    #[getter]
    fn infected_count(&self) -> usize {
        self.0.infected_count()
    }

    /// `(exposure, infection, removal)` per host.
    fn hosts(&self) -> Vec<(Option<f64>, Option<f64>, Option<f64>)> {
        self.0.hosts().iter().map(|h| (h.exposure, h.infection, h.removal)).collect()
    }

    /// Observations, optionally truncated when `fraction` of hosts are infectious.
    #[pyo3(signature = (fraction=None))]
    fn observed(&self, fraction: Option<f64>) -> PyResult<PyObserved> {
        match fraction {
            None => Ok(PyObserved(self.0.observed())),
            Some(f) => Ok(PyObserved(self.0.truncate(f).map_err(err)?.0)),
        }
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_event_log(&mut buf, &self.0).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Retained states of one MCMC run.
#[pyclass(name = "Chain", frozen)]
struct PyChain {
    states: Vec<ChainState>,
}

#[pymethods]
impl PyChain {
    /// Sampled parameters, one dict per retained state.
    fn params<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyAny>>> {
        self.states.iter().map(|s| to_py(py, &s.params)).collect()
    }

    /// Augmented trajectory of retained state `k`.
    fn trajectory(&self, k: usize) -> PyResult<PyTrajectory> {
        self.states
            .get(k)
            .map(|s| PyTrajectory(s.aug.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("state {k} out of range")))
    }

    /// Infection-link residual test; returns the report as a dict.
    #[pyo3(signature = (seed=0, ordered_ties=false))]
    fn ilr_test<'py>(&self, py: Python<'py>, seed: u64, ordered_ties: bool) -> PyResult<Bound<'py, PyAny>> {
        let ties = if ordered_ties { TieRule::Ordered } else { TieRule::Randomized };
        let report = py.detach(|| ilr_test(&self.states, ties, seed)).map_err(err)?;
        to_py(py, &report)
    }

    /// Latent likelihood ratio test against `alternative`; `objective` is `full` or `partial`.
    #[pyo3(signature = (alternative="exp", objective="full", seed=0, draws_per_sample=1))]
    fn llr_test<'py>(
        &self,
        py: Python<'py>,
        alternative: &str,
        objective: &str,
        seed: u64,
        draws_per_sample: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let objective = match objective {
            "full" => Objective::Full,
            "partial" => Objective::Partial,
            other => return Err(PyValueError::new_err(format!("unknown objective '{other}'"))),
        };
        let opts = LlrtOptions {
            draws_per_sample,
            ..LlrtOptions::new(objective)
        };
        let alt = family(alternative)?;
        let report = py.detach(|| llrt_pvalue_mean(&self.states, alt, &opts, seed)).map_err(err)?;
        to_py(py, &report)
    }

    fn __len__(&self) -> usize {
        self.states.len()
    }
}

/// Simulate one epidemic, to full infection or up to `horizon`.
#[pyfunction]
#[pyo3(signature = (params, population, seed, horizon=None))]
fn simulate(params: &PyParams, population: &PyPopulation, seed: u64, horizon: Option<f64>) -> PyResult<PyTrajectory> {
    let opts = horizon.map_or_else(SimulationOptions::full_infection, SimulationOptions::horizon);
    let traj = simulate_epidemic(&params.0, &population.0, &opts, &mut rng_from_seed(seed)).map_err(err)?;
    Ok(PyTrajectory(traj))
}

/// Complete-data log-likelihood.
#[pyfunction]
fn loglik(params: &PyParams, trajectory: &PyTrajectory) -> PyResult<f64> {
    Ok(full_loglik(&params.0, &trajectory.0).map_err(err)?.value)
}

/// Partial log-likelihood over the exposure order.
#[pyfunction]
fn partial_loglik_of(params: &PyParams, trajectory: &PyTrajectory) -> f64 {
    let z = extract_partial_data(&trajectory.0);
    partial_loglik(&params.0.kernel, params.0.alpha, params.0.beta, &z).value
}

/// Fit a kernel family to observations by data-augmented MCMC.
#[pyfunction]
#[pyo3(signature = (observed, family_name, iterations, seed, burn_in=None, thin=None))]
fn fit(
    py: Python<'_>,
    observed: &PyObserved,
    family_name: &str,
    iterations: usize,
    seed: u64,
    burn_in: Option<usize>,
    thin: Option<usize>,
) -> PyResult<PyChain> {
    let fam = family(family_name)?;
    let y = &observed.0;
    let kernel = KernelSpec::new(fam, default_kappa(fam, y.population().mean_nearest_neighbour())).map_err(err)?;
    let settings = ChainSettings {
        iterations,
        burn_in,
        thin,
        ..ChainSettings::default()
    };
    let out = py
        .detach(|| run_chain(y, &PriorSpec::default(), &kernel, &settings, seed))
        .map_err(err)?;
    Ok(PyChain { states: out.samples })
}

/// Anderson–Darling test of uniformity: `(statistic, p_value)`.
#[pyfunction]
fn anderson_darling(values: Vec<f64>) -> PyResult<(f64, f64)> {
    let ad = kernelcrit::criticism::anderson_darling(&values).map_err(err)?;
    Ok((ad.statistic, ad.p_value))
}

/// Latent and complete-data power on the default toy configuration.
#[pyfunction]
#[pyo3(signature = (alpha_level=0.05, replicates=200, seed=0))]
fn latent_power<'py>(py: Python<'py>, alpha_level: f64, replicates: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = PowerConfig::default();
    let (latent, complete) = py
        .detach(|| estimate_latent_power(&cfg, alpha_level, replicates, seed))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("latent", to_py(py, &latent)?)?;
    out.set_item("complete", to_py(py, &complete)?)?;
    Ok(out.into_any())
}

#[pymodule]
fn _kernelcrit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyPopulation>()?;
    m.add_class::<PyObserved>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyChain>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(loglik, m)?)?;
    m.add_function(wrap_pyfunction!(partial_loglik_of, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(anderson_darling, m)?)?;
    m.add_function(wrap_pyfunction!(latent_power, m)?)?;
    m.add(
        "__all__",
        vec![
            "Kernel",
            "Params",
            "Population",
            "Observed",
            "Trajectory",
            "Chain",
            "simulate",
            "loglik",
            "partial_loglik_of",
            "fit",
            "anderson_darling",
            "latent_power",
        ],
    )?;
    Ok(())
}
