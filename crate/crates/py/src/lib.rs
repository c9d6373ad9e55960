//! Python bindings: economy and agent types, survival ranking, path simulation,
//! market clearing, correlation regions and ergodic-limit estimates.

use market_selection::asymptotics::{closed_form_limit as closed_form, estimate_limit as estimate, Functional};
use market_selection::equilibrium::{clear_market as clear, simulate_equilibrium_path, AgentPrefs};
use market_selection::filtering::{alphas, variance};
use market_selection::selection::{survival_index as kappa, two_agent_correlation_region};
use market_selection::{AgentBeliefs, AgentSpec, Error, FunctionalId, PathGrid, SurvivalReport};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_config() || matches!(e, Error::Input(_)) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

#[pyclass(name = "EconomyParams", from_py_object)]
#[derive(Clone)]
struct PyEconomy {
    inner: market_selection::EconomyParams,
}

#[pymethods]
impl PyEconomy {
    #[new]
    #[pyo3(signature = (xi=0.6, mu_bar=0.05, mu0=0.05, sigma_d=0.2, sigma_mu=0.16, phi=0.5, lambda_=1.0, x0=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(xi: f64, mu_bar: f64, mu0: f64, sigma_d: f64, sigma_mu: f64, phi: f64, lambda_: f64, x0: f64) -> PyResult<Self> {
        let inner = market_selection::EconomyParams { xi, mu_bar, mu0, sigma_d, sigma_mu, phi, lambda: lambda_, x0 };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.inner.xi
    }
    #[getter]
    fn mu_bar(&self) -> f64 {
        self.inner.mu_bar
    }
    #[getter]
    fn sigma_d(&self) -> f64 {
        self.inner.sigma_d
    }
    #[getter]
    fn sigma_mu(&self) -> f64 {
        self.inner.sigma_mu
    }
    #[getter]
    fn phi(&self) -> f64 {
        self.inner.phi
    }

    /// Long-run growth rate of log aggregate endowment.
    fn log_growth(&self) -> f64 {
        self.inner.log_growth()
    }

    /// Posterior variance of the growth rate at time `t` for correlation belief `phi_i`.
    fn filter_variance(&self, phi_i: f64, t: f64) -> PyResult<f64> {
        let c = alphas(&self.inner, phi_i).map_err(to_py)?;
        Ok(variance(&c, &self.inner, t))
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "Agent", from_py_object)]
#[derive(Clone)]
struct PyAgent {
    inner: AgentSpec,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (gamma, rho, c0, mu_bar, mu0, phi, beta=0.0))]
    fn new(gamma: f64, rho: f64, c0: f64, mu_bar: f64, mu0: f64, phi: f64, beta: f64) -> PyResult<Self> {
        let inner = AgentSpec {
            prefs: AgentPrefs { gamma, rho, beta, c0 },
            beliefs: AgentBeliefs { mu_bar, mu0, phi },
        };
        inner.prefs.validate().map_err(to_py)?;
        inner.beliefs.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    /// An agent whose beliefs match the economy.
    #[staticmethod]
    #[pyo3(signature = (economy, gamma, rho, c0, beta=0.0))]
    fn rational(economy: &PyEconomy, gamma: f64, rho: f64, c0: f64, beta: f64) -> PyResult<Self> {
        let mut inner = AgentSpec::rational(&economy.inner, gamma, rho, c0);
        inner.prefs.beta = beta;
        inner.prefs.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.prefs.gamma
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.prefs.rho
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.prefs.beta
    }
    #[getter]
    fn c0(&self) -> f64 {
        self.inner.prefs.c0
    }
    #[getter]
    fn phi(&self) -> f64 {
        self.inner.beliefs.phi
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

fn specs(agents: &[PyAgent]) -> Vec<AgentSpec> {
    agents.iter().map(|a| a.inner).collect()
}

#[pyfunction]
fn survival_index(economy: &PyEconomy, agent: &PyAgent) -> PyResult<f64> {
    kappa(&economy.inner, &agent.inner).map_err(to_py)
}

/// Survival indices, effective risk aversions, winner and gap as a dict.
#[pyfunction]
#[pyo3(signature = (economy, agents, tolerance=1e-10))]
fn survival_report<'py>(py: Python<'py>, economy: &PyEconomy, agents: Vec<PyAgent>, tolerance: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = SurvivalReport::new(&economy.inner, &specs(&agents), tolerance).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("kappa", r.kappa)?;
    d.set_item("effective_gamma", r.effective_gamma)?;
    d.set_item("winner", r.winner)?;
    d.set_item("gap", r.gap)?;
    Ok(d)
}

/// Clears the market for the given homogeneous log SPDs; returns `(log_m, iterations)`.
#[pyfunction]
fn clear_market(agents: Vec<PyAgent>, log_m_homog: Vec<f64>) -> PyResult<(f64, usize)> {
    let prefs: Vec<AgentPrefs> = agents.iter().map(|a| a.inner.prefs).collect();
    let c = clear(&prefs, &log_m_homog).map_err(to_py)?;
    Ok((c.log_m, c.iterations))
}

/// One equilibrium path as a dict of lists; per-agent series are lists of lists.
#[pyfunction]
#[pyo3(signature = (economy, agents, dt, n_steps, seed, path_index=0))]
fn simulate<'py>(
    py: Python<'py>,
    economy: &PyEconomy,
    agents: Vec<PyAgent>,
    dt: f64,
    n_steps: usize,
    seed: u64,
    path_index: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let specs = specs(&agents);
    let run = py
        .detach(|| simulate_equilibrium_path(&economy.inner, &specs, &PathGrid::new(dt, n_steps, seed, path_index)))
        .map_err(to_py)?;
    let eq = run.equilibrium;
    let shares: Vec<Vec<f64>> = eq.log_shares.iter().map(|s| s.iter().map(|v| v.exp()).collect()).collect();
    let d = PyDict::new(py);
    d.set_item("times", eq.times)?;
    d.set_item("log_d", run.path.log_d)?;
    d.set_item("log_m", eq.log_m)?;
    d.set_item("shares", shares)?;
    d.set_item("omega", eq.omega)?;
    d.set_item("r", eq.r)?;
    d.set_item("theta", eq.theta)?;
    d.set_item("max_residual", eq.residual.iter().fold(0.0f64, |m, v| m.max(v.abs())))?;
    Ok(d)
}

/// Closed-form winner label for correlations `phi1 <= phi <= phi2`.
#[pyfunction]
fn correlation_region(a: f64, phi: f64, phi1: f64, phi2: f64) -> PyResult<&'static str> {
    Ok(two_agent_correlation_region(a, phi, phi1, phi2).map_err(to_py)?.label())
}

fn functional(kind: &str, a: f64, b: f64, xi: f64) -> PyResult<FunctionalId> {
    let k: Functional = kind.parse().map_err(to_py)?;
    Ok(FunctionalId::new(k, a, b, xi))
}

#[pyfunction]
#[pyo3(signature = (kind, a=1.0, b=2.0, xi=0.5))]
fn closed_form_limit(kind: &str, a: f64, b: f64, xi: f64) -> PyResult<f64> {
    closed_form(&functional(kind, a, b, xi)?).map_err(to_py)
}

/// Cross-seed mean of a functional's time average; returns `(estimate, stderr, closed_form)`.
#[pyfunction]
#[pyo3(signature = (kind, horizon, n_seeds, seed=0, dt=0.01, a=1.0, b=2.0, xi=0.5))]
#[allow(clippy::too_many_arguments)]
fn estimate_limit(
    py: Python<'_>,
    kind: &str,
    horizon: f64,
    n_seeds: u64,
    seed: u64,
    dt: f64,
    a: f64,
    b: f64,
    xi: f64,
) -> PyResult<(f64, f64, f64)> {
    let id = functional(kind, a, b, xi)?;
    let e = py
        .detach(|| estimate(&id, &PathGrid::with_horizon(dt, horizon, seed, 0), n_seeds))
        .map_err(to_py)?;
    Ok((e.estimate, e.stderr, e.closed_form))
}

#[pymodule]
fn market_selection_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEconomy>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(survival_index, m)?)?;
    m.add_function(wrap_pyfunction!(survival_report, m)?)?;
    m.add_function(wrap_pyfunction!(clear_market, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_region, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_limit, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_limit, m)?)?;
    Ok(())
}
