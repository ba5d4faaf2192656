//! Python bindings: comparison curves, the shipped scenarios, simulation and
//! the configuration runner.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use spfun::apps::source_seeking::{self, Coordinates, SourceSeekingScenario};
use spfun::apps::{feedback_opt, integral, saturated};
use spfun::catalog::CurveSpec;
use spfun::cli::{build_bundle, check, ScenarioConfig};
use spfun::comparison::{self, ComparisonCurve, LogGrid};
use spfun::system::{self as sys, PerturbedSystem, SimConfig};

fn err(e: spfun::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Curve", module = "spfun", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCurve(ComparisonCurve);

#[pymethods]
impl PyCurve {
    #[staticmethod]
    fn linear(k: f64) -> Self {
        PyCurve(ComparisonCurve::linear(k))
    }

    #[staticmethod]
    fn power(k: f64, p: f64) -> Self {
        PyCurve(ComparisonCurve::power(k, p))
    }

    #[staticmethod]
    fn saturation() -> Self {
        PyCurve(ComparisonCurve::saturation())
    }

    #[staticmethod]
    fn identity() -> Self {
        PyCurve(ComparisonCurve::identity())
    }

    /// Builds a catalog curve from an inline TOML table such as
    /// `{ kind = "power", k = 6.2, p = 0.5 }`.
    #[staticmethod]
    fn from_spec(spec: &str) -> PyResult<Self> {
        #[derive(serde::Deserialize)]
        struct Doc {
            curve: CurveSpec,
        }
        let doc: Doc = toml::from_str(&format!("curve = {spec}")).map_err(|e| PyValueError::new_err(e.to_string()))?;
        doc.curve.build().map(PyCurve).map_err(err)
    }

    fn __call__(&self, r: f64) -> PyResult<f64> {
        self.0.try_eval(r).map_err(err)
    }

    fn inverse(&self) -> Self {
        PyCurve(self.0.inverse())
    }

    fn compose(&self, inner: &PyCurve) -> Self {
        PyCurve(comparison::compose(&self.0, &inner.0))
    }

    fn scaled(&self, k: f64) -> Self {
        PyCurve(self.0.scaled(k))
    }

    fn __add__(&self, other: &PyCurve) -> Self {
        PyCurve(self.0.plus(&other.0))
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label().to_string()
    }

    #[getter]
    fn class_name(&self) -> &'static str {
        self.0.class().name()
    }

    fn __repr__(&self) -> String {
        format!("Curve({}, {})", self.0.label(), self.0.class().name())
    }
}

/// Returns `(pass, worst_margin, worst_r)` for `γ₁∘γ₂ < id`.
#[pyfunction]
#[pyo3(signature = (gamma_1, gamma_2, lo=1e-6, hi=1e6, points=200))]
fn check_small_gain(gamma_1: &PyCurve, gamma_2: &PyCurve, lo: f64, hi: f64, points: usize) -> PyResult<(bool, f64, f64)> {
    let grid = LogGrid::new(lo, hi, points).map_err(err)?;
    let r = comparison::check_small_gain(&gamma_1.0, &gamma_2.0, &grid).map_err(err)?;
    Ok((r.pass, r.worst_margin, r.worst_r))
}

#[pyclass(name = "Trajectory", module = "spfun", frozen)]
struct PyTrajectory(sys::Trajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn xs(&self) -> Vec<Vec<f64>> {
        self.0.xs.clone()
    }

    #[getter]
    fn zs(&self) -> Vec<Vec<f64>> {
        self.0.zs.clone()
    }

    #[getter]
    fn diverged(&self) -> bool {
        self.0.diverged
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "System", module = "spfun", frozen)]
struct PySystem(PerturbedSystem);

#[pymethods]
impl PySystem {
    /// Saturated example with `ρ_s ≡ c0`.
    #[staticmethod]
    fn example1(c0: f64) -> Self {
        PySystem(saturated::system(c0))
    }

    /// Feedback optimization; `gain` is `"quadratic"` or `"constant"`.
    #[staticmethod]
    #[pyo3(signature = (gain="quadratic", coeff=feedback_opt::RHO_COEFF))]
    fn example2(gain: &str, coeff: f64) -> PyResult<Self> {
        let law = match gain {
            "quadratic" => feedback_opt::GainLaw::Quadratic(coeff),
            "constant" => feedback_opt::GainLaw::Constant(coeff),
            other => return Err(PyValueError::new_err(format!("unknown gain law {other:?}"))),
        };
        Ok(PySystem(feedback_opt::system(law)))
    }

    #[staticmethod]
    fn integral_control(nonlinear: bool, coeff: f64) -> Self {
        PySystem(integral::system(nonlinear, coeff))
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn dims(&self) -> (usize, usize) {
        (self.0.dims.n, self.0.dims.m)
    }

    fn rhs(&self, x: Vec<f64>, z: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.0.rhs(0.0, &x, &z).map_err(err)
    }

    fn phi(&self, x: Vec<f64>) -> Vec<f64> {
        self.0.phi(&x)
    }

    /// RK4 when `dt` is given, adaptive Dormand–Prince otherwise.
    #[pyo3(signature = (x0, z0, t_final, dt=None, rtol=1e-8, atol=1e-10, record_every=1))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        x0: Vec<f64>,
        z0: Vec<f64>,
        t_final: f64,
        dt: Option<f64>,
        rtol: f64,
        atol: f64,
        record_every: usize,
    ) -> PyResult<PyTrajectory> {
        let cfg = match dt {
            Some(dt) => SimConfig::rk4(t_final, dt),
            None => SimConfig::rk45(t_final, rtol, atol),
        }
        .record_every(record_every);
        py.detach(|| sys::simulate(&self.0, &x0, &z0, &cfg))
            .map(PyTrajectory)
            .map_err(err)
    }
}

/// Largest admissible `c0` for the saturated example over `ϱ ∈ {0.01, …, 0.99}`.
#[pyfunction]
fn example1_threshold() -> PyResult<(f64, f64)> {
    let sweep = saturated::c0_threshold_sweep(&saturated::default_varrho_grid(), &LogGrid::default()).map_err(err)?;
    Ok((sweep.c0_max, sweep.best_varrho))
}

/// Simulates the default four-agent source-seeking scenario and returns its summary.
#[pyfunction]
#[pyo3(signature = (t_final=400.0, dt=0.01))]
fn source_seeking_default(py: Python<'_>, t_final: f64, dt: f64) -> PyResult<BTreeMap<String, f64>> {
    let scn = SourceSeekingScenario::square_default();
    let system = source_seeking::closed_loop(&scn, Coordinates::Reduced).map_err(err)?;
    let traj = py
        .detach(|| {
            sys::simulate(
                &system,
                &vec![0.0; system.dims.n],
                &vec![0.0; system.dims.m],
                &SimConfig::rk4(t_final, dt).record_every(10),
            )
        })
        .map_err(err)?;
    let s = source_seeking::summarize(&scn, &traj).map_err(err)?;
    Ok(BTreeMap::from([
        ("final_distance".to_string(), s.final_distance),
        ("first_entry_time".to_string(), s.first_entry_time.unwrap_or(f64::NAN)),
        ("max_formation_error".to_string(), s.max_formation_error),
        ("max_formation_velocity_sum".to_string(), s.max_formation_velocity_sum),
        ("remains_last_quarter".to_string(), f64::from(u8::from(s.remains_last_quarter))),
    ]))
}

/// Runs the verification stage of a configuration file and returns the
/// machine-readable report.
#[pyfunction]
fn check_config(path: PathBuf) -> PyResult<String> {
    let cfg = ScenarioConfig::load(&path).map_err(err)?;
    let bundle = build_bundle(&cfg).map_err(err)?;
    Ok(check(&cfg, &bundle).map_err(err)?.to_kv())
}

/// Full run of a configuration file; returns the CLI exit status.
#[pyfunction]
fn run_config(path: PathBuf, out_dir: PathBuf) -> PyResult<i32> {
    let cfg = ScenarioConfig::load(&path).map_err(err)?;
    Ok(spfun::cli::run(&cfg, &out_dir).map_err(err)?.exit_code())
}

#[pymodule]
#[pyo3(name = "spfun")]
fn spfun_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCurve>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(check_small_gain, m)?)?;
    m.add_function(wrap_pyfunction!(example1_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(source_seeking_default, m)?)?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
