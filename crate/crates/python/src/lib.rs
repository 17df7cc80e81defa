//! Python bindings: the closed-form QSD family, the Laplace-exponent
//! duality, finite chains, and the particle and PDE solvers.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qsdlab::branching::{front_velocity, nbbm_run as core_nbbm_run, FrontStatistic, SelectionConfig};
use qsdlab::chain::{self, SubstochasticMatrix};
use qsdlab::closed_forms::{self, QsdBrownianFamily};
use qsdlab::fleming_viot::{absorption_rate_estimate, fv_run_with, FvConfig};
use qsdlab::pde::{self, PdeConfig};
use qsdlab::{stats, Error, Grid1D, GridFunction, JumpDistribution, JumpLaw, LevyTriplet, RngStream};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Domain(_) | Error::NonNormalizable { .. } | Error::Structure(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for qsdlab::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// QSD of Brownian motion with drift `−c` absorbed at 0, indexed by its
/// absorption rate `0 < r ≤ c²/2`.
#[pyclass(name = "QsdFamily", frozen)]
struct PyQsdFamily(QsdBrownianFamily);

#[pymethods]
impl PyQsdFamily {
    #[new]
    fn new(c: f64, r: f64) -> PyResult<Self> {
        Ok(Self(QsdBrownianFamily::new(c, r).py()?))
    }

    /// The minimal member, density `c² x e^{−cx}`.
    #[staticmethod]
    fn minimal(c: f64) -> PyResult<Self> {
        Ok(Self(closed_forms::minimal_qsd(c).py()?))
    }

    fn density(&self, x: f64) -> f64 {
        self.0.density(x)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    fn survival(&self, x: f64) -> f64 {
        self.0.survival(x)
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn mean_absorption_time(&self) -> f64 {
        self.0.mean_absorption_time()
    }

    fn tail_exponent(&self) -> f64 {
        self.0.tail_exponent()
    }

    fn is_minimal(&self) -> bool {
        self.0.is_minimal()
    }

    #[pyo3(signature = (count, seed, stream = 0))]
    fn sample(&self, count: usize, seed: u64, stream: u64) -> Vec<f64> {
        self.0.sample(&mut RngStream::new(seed, stream), count)
    }

    fn __repr__(&self) -> String {
        format!("QsdFamily(c={}, r={})", self.0.c, self.0.r)
    }
}

/// `ψ(θ) = log E e^{θ Z_1}` of a centered Lévy process.
#[pyclass(name = "LaplaceExponent", frozen)]
struct PyLaplaceExponent(qsdlab::LaplaceExponent);

fn laplace(sigma: f64, jumps: JumpLaw) -> PyResult<PyLaplaceExponent> {
    let t = LevyTriplet::centered(sigma, jumps).py()?;
    Ok(PyLaplaceExponent(qsdlab::LaplaceExponent::new(t).py()?))
}

#[pymethods]
impl PyLaplaceExponent {
    #[staticmethod]
    #[pyo3(signature = (sigma = 1.0))]
    fn brownian(sigma: f64) -> PyResult<Self> {
        laplace(sigma, JumpLaw::none())
    }

    /// Jumps with density `(α/2) e^{−α|y|}` at rate `intensity`.
    #[staticmethod]
    fn two_sided_exponential(sigma: f64, alpha: f64, intensity: f64) -> PyResult<Self> {
        laplace(sigma, JumpLaw::two_sided_exponential(alpha, intensity).py()?)
    }

    #[staticmethod]
    fn gaussian_jumps(sigma: f64, std: f64, intensity: f64) -> PyResult<Self> {
        laplace(sigma, JumpLaw::new(JumpDistribution::centered_gaussian(std), intensity).py()?)
    }

    #[getter]
    fn theta_star(&self) -> f64 {
        self.0.theta_star()
    }

    fn psi(&self, theta: f64) -> PyResult<f64> {
        self.0.psi(theta).py()
    }

    /// `(θ_c, rate, at_boundary)`.
    fn theta_c(&self, c: f64) -> PyResult<(f64, f64, bool)> {
        let d = self.0.theta_c(c).py()?;
        Ok((d.theta_c, d.rate, d.at_boundary))
    }

    fn max_absorption_rate(&self, c: f64) -> PyResult<f64> {
        self.0.max_absorption_rate(c).py()
    }

    fn min_velocity(&self, r: f64) -> PyResult<f64> {
        self.0.min_velocity(r).py()
    }
}

#[pyclass(name = "SubstochasticMatrix", frozen)]
struct PyChain(SubstochasticMatrix);

#[pymethods]
impl PyChain {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(SubstochasticMatrix::new(rows).py()?))
    }

    #[staticmethod]
    fn birth_death(p_up: f64, p_down: f64, levels: usize) -> PyResult<Self> {
        Ok(Self(SubstochasticMatrix::birth_death(p_up, p_down, levels).py()?))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    /// `(R, ν, β)` with `νP = ν/R`, `Pβ = β/R`.
    fn eigentriple(&self) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
        let e = chain::eigentriple(&self.0).py()?;
        Ok((e.r, e.nu, e.beta))
    }

    /// `(limit, survival factor)` from a point mass at `start`.
    #[pyo3(signature = (start, tol = 1e-12))]
    fn yaglom_limit(&self, start: usize, tol: f64) -> PyResult<(Vec<f64>, f64)> {
        chain::yaglom_limit(&self.0, start, tol).py()
    }

    fn conditioned_evolution(&self, mu0: Vec<f64>, steps: usize) -> PyResult<Vec<f64>> {
        chain::conditioned_evolution(&self.0, &mu0, steps).py()
    }
}

/// Fleming–Viot particles for Brownian motion with drift `−c` absorbed at 0.
/// Starts uniform on `(0, 1)` unless `init` is given.
#[pyfunction]
#[pyo3(signature = (c, n, dt, t_max, seed, init = None, bridge_correction = true, burn_in = None))]
#[allow(clippy::too_many_arguments)]
fn fv_run<'py>(
    py: Python<'py>,
    c: f64,
    n: usize,
    dt: f64,
    t_max: f64,
    seed: u64,
    init: Option<Vec<f64>>,
    bridge_correction: bool,
    burn_in: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = FvConfig::brownian(c, n, dt, t_max, seed).py()?;
    cfg.bridge_correction = bridge_correction;
    let init = init.unwrap_or_else(|| {
        let mut rng = RngStream::new(seed, 1 << 32);
        (0..n).map(|_| rng.uniform()).collect()
    });
    let series = py.detach(|| fv_run_with(&cfg, &init, RngStream::new(seed, 0))).py()?;
    let rate = absorption_rate_estimate(&series, burn_in.unwrap_or(0.2 * t_max)).py()?;
    let out = PyDict::new(py);
    out.set_item("t", series.iter().map(|s| s.t).collect::<Vec<_>>())?;
    out.set_item("events", series.iter().map(|s| s.events).collect::<Vec<_>>())?;
    out.set_item("median", series.iter().map(|s| s.median).collect::<Vec<_>>())?;
    out.set_item("final_positions", series.last().and_then(|s| s.positions.clone()))?;
    out.set_item("absorption_rate", (rate.value, rate.stderr))?;
    Ok(out)
}

/// N-BBM from `N` particles at 0; returns the snapshot track and the
/// median-front velocity after `burn_in`.
#[pyfunction]
#[pyo3(signature = (n, r, t_max, seed, snapshot_every = 1.0, burn_in = None))]
fn nbbm_run<'py>(
    py: Python<'py>,
    n: usize,
    r: f64,
    t_max: f64,
    seed: u64,
    snapshot_every: f64,
    burn_in: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = SelectionConfig::nbbm(n, r, t_max, seed);
    cfg.dt = snapshot_every;
    let series = py.detach(|| core_nbbm_run(&cfg, &vec![0.0; n])).py()?;
    let v = front_velocity(&series, burn_in.unwrap_or(0.2 * t_max), FrontStatistic::Median).py()?;
    let out = PyDict::new(py);
    out.set_item("t", series.iter().map(|s| s.t).collect::<Vec<_>>())?;
    out.set_item("min", series.iter().map(|s| s.min).collect::<Vec<_>>())?;
    out.set_item("median", series.iter().map(|s| s.median).collect::<Vec<_>>())?;
    out.set_item("max", series.iter().map(|s| s.max).collect::<Vec<_>>())?;
    out.set_item("final_positions", series.last().and_then(|s| s.positions.clone()))?;
    out.set_item("velocity", (v.value, v.stderr))?;
    Ok(out)
}

/// Conditioned evolution of a density sampled at `x_i = i·h` on `[0, L]`.
/// Returns `(final density, final renormalization rate)`.
#[pyfunction]
#[pyo3(signature = (u0, h, c, t_max))]
fn conditioned_evolution_solve(py: Python<'_>, u0: Vec<f64>, h: f64, c: f64, t_max: f64) -> PyResult<(Vec<f64>, f64)> {
    let grid = Grid1D::new(0.0, h, u0.len()).py()?;
    let u0 = GridFunction::new(grid, u0).py()?.normalized().py()?;
    let cfg = PdeConfig::explicit_for(h, t_max, t_max.max(h * h));
    let run = py.detach(|| pde::conditioned_evolution_solve(&u0, c, &cfg)).py()?;
    let last = run.series.last().expect("final snapshot");
    Ok((last.profile.values.clone(), last.renormalization_rate.unwrap_or(f64::NAN)))
}

/// F-KPP `∂v = ½ v'' + r(v² − v)` from `v0` on the grid `x_min + i·h`.
#[pyfunction]
fn kpp_solve(py: Python<'_>, v0: Vec<f64>, x_min: f64, h: f64, r: f64, t_max: f64) -> PyResult<Vec<f64>> {
    let grid = Grid1D::new(x_min, h, v0.len()).py()?;
    let v0 = GridFunction::new(grid, v0).py()?;
    let cfg = PdeConfig::explicit_for(h, t_max, t_max.max(h * h));
    let run = py.detach(|| pde::kpp_solve(&v0, r, &cfg)).py()?;
    Ok(run.series.last().expect("final snapshot").profile.values.clone())
}

#[pyfunction]
fn qsd_density(c: f64, r: f64, x: f64) -> PyResult<f64> {
    closed_forms::qsd_density(c, r, x).py()
}

#[pyfunction]
fn qsd_cdf(c: f64, r: f64, x: f64) -> PyResult<f64> {
    closed_forms::qsd_cdf(c, r, x).py()
}

/// KS distance of `samples` to the QSD with parameters `(c, r)`.
#[pyfunction]
fn ks_to_qsd(samples: Vec<f64>, c: f64, r: f64) -> PyResult<f64> {
    let q = QsdBrownianFamily::new(c, r).py()?;
    stats::ks_to_cdf(&samples, |x| q.cdf(x)).py()
}

#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    stats::ks_two_sample(&a, &b).py()
}

#[pymodule]
#[pyo3(name = "qsdlab")]
fn qsdlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQsdFamily>()?;
    m.add_class::<PyLaplaceExponent>()?;
    m.add_class::<PyChain>()?;
    m.add_function(wrap_pyfunction!(fv_run, m)?)?;
    m.add_function(wrap_pyfunction!(nbbm_run, m)?)?;
    m.add_function(wrap_pyfunction!(conditioned_evolution_solve, m)?)?;
    m.add_function(wrap_pyfunction!(kpp_solve, m)?)?;
    m.add_function(wrap_pyfunction!(qsd_density, m)?)?;
    m.add_function(wrap_pyfunction!(qsd_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(ks_to_qsd, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    Ok(())
}
