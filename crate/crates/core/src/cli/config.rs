//! Scenario configuration files (TOML).
//!
//! ```toml
//! scenario = "example1_saturated"
//! seed = 0
//!
//! [example1]
//! c0 = 0.4
//!
//! [simulation]
//! method = "rk4"
//! dt = 1e-3
//! t_final = 200.0
//!
//! [initial]
//! random = 20
//! half_width = 5.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::CurveSpec;
use crate::comparison::LogGrid;
use crate::error::{Error, Result};
use crate::system::{Method, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Example1Saturated,
    Example2FeedbackOpt,
    IntegralControl,
    SourceSeeking,
    Custom,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Example1Saturated => "example1_saturated",
            ScenarioKind::Example2FeedbackOpt => "example2_feedback_opt",
            ScenarioKind::IntegralControl => "integral_control",
            ScenarioKind::SourceSeeking => "source_seeking",
            ScenarioKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example1: Option<Example1Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example2: Option<Example2Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integral: Option<IntegralParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationParams>,
    #[serde(default)]
    pub initial: InitialParams,
    #[serde(default)]
    pub checks: CheckParams,
    #[serde(default)]
    pub samples: SampleParams,
    #[serde(default)]
    pub grid: GridParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example1Params {
    pub c0: f64,
    #[serde(default = "default_varrho")]
    pub varrho: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Values of ϱ for the threshold sweep; empty disables it.
    #[serde(default = "default_varrho_sweep")]
    pub varrho_sweep: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    Quadratic,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example2Params {
    pub gain: GainKind,
    pub coeff: f64,
    #[serde(default = "default_rho_upper")]
    pub rho_upper_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralParams {
    pub nonlinear: bool,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `scale·|p − center|²`
    Quadratic { center: Vec<f64>, scale: f64 },
    /// `|p|² + sin(p_1)`
    QuadraticPlusSine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Default,
    Complete,
    Cycle,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateKind {
    Full,
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    /// Formation offsets `d_i0`, one row per agent.
    pub formation: Vec<Vec<f64>>,
    #[serde(default = "default_topology")]
    pub topology: Topology,
    /// Explicit 0/1 adjacency; overrides `topology`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<f64>>>,
    pub mu: f64,
    pub c0: f64,
    pub objective: ObjectiveSpec,
    pub p_star: Vec<f64>,
    pub p_epsilon: f64,
    /// Initial agent positions; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_coordinates")]
    pub coordinates: CoordinateKind,
}

/// Scalar system `ẋ = −ρ_s(|z|)·sgn(z)·h_s(|z|)`,
/// `ż = −sgn(z − x)·h_f(|z − x|)` with `V_s = k_s·x²`,
/// `V_f = k_f·(z − x)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomParams {
    pub slow_field: CurveSpec,
    pub fast_field: CurveSpec,
    pub slow_rate: CurveSpec,
    pub k_s: f64,
    pub k_f: f64,
    pub g_breve: CurveSpec,
    pub certificate: CertificateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    pub slow_lower_bound: CurveSpec,
    pub slow_upper_bound: CurveSpec,
    pub slow_gain: CurveSpec,
    pub slow_decay: CurveSpec,
    pub fast_lower_bound: CurveSpec,
    pub fast_upper_bound: CurveSpec,
    pub fast_decay: CurveSpec,
    pub cross_fast: CurveSpec,
    #[serde(default = "zero_curve")]
    pub cross_slow: CurveSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsSpec {
    pub rho_lower_s: CurveSpec,
    pub gamma_f: CurveSpec,
    pub rho_upper_s: CurveSpec,
    pub rho_lower_f: CurveSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    pub method: MethodKind,
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_radius")]
    pub divergence_radius: f64,
}

impl SimulationParams {
    pub fn to_sim_config(&self) -> Result<SimConfig> {
        let method = match self.method {
            MethodKind::Rk4 => Method::Rk4 {
                dt: self
                    .dt
                    .ok_or_else(|| Error::InvalidConfig("simulation.dt is required for rk4".into()))?,
            },
            MethodKind::Rk45 => Method::Rk45 {
                rtol: self.rtol.unwrap_or(1e-8),
                atol: self.atol.unwrap_or(1e-10),
                max_step: self.max_step,
            },
        };
        let cfg = SimConfig {
            t_final: self.t_final,
            method,
            divergence_radius: self.divergence_radius,
            record_every: self.record_every,
        };
        cfg.validate().map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("simulation.{msg}")),
            other => other,
        })?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialParams {
    /// Explicit initial conditions, each `[x…, z…]`.
    #[serde(default)]
    pub states: Vec<Vec<f64>>,
    /// Additional seeded random initial conditions.
    #[serde(default)]
    pub random: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

impl Default for InitialParams {
    fn default() -> Self {
        InitialParams {
            states: Vec::new(),
            random: 0,
            half_width: default_half_width(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    #[serde(default = "yes")]
    pub assumption2: bool,
    #[serde(default = "yes")]
    pub theorem1: bool,
    #[serde(default = "yes")]
    pub steady_state: bool,
    /// Lyapunov decrease along every simulated trajectory.
    #[serde(default = "yes")]
    pub decrease: bool,
    #[serde(default)]
    pub decrease_level: f64,
    /// Every trajectory must end within `converge_tol` of the equilibrium.
    #[serde(default)]
    pub expect_converge: bool,
    #[serde(default = "default_converge_tol")]
    pub converge_tol: f64,
}

impl Default for CheckParams {
    fn default() -> Self {
        CheckParams {
            assumption2: true,
            theorem1: true,
            steady_state: true,
            decrease: true,
            decrease_level: 0.0,
            expect_converge: false,
            converge_tol: default_converge_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleParams {
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_sample_count")]
    pub random: usize,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams {
            half_width: default_half_width(),
            random: default_sample_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    #[serde(default = "default_grid_lo")]
    pub lo: f64,
    #[serde(default = "default_grid_hi")]
    pub hi: f64,
    #[serde(default = "default_grid_points")]
    pub points: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            lo: default_grid_lo(),
            hi: default_grid_hi(),
            points: default_grid_points(),
        }
    }
}

impl GridParams {
    pub fn build(&self) -> Result<LogGrid> {
        LogGrid::new(self.lo, self.hi, self.points).map_err(|e| Error::InvalidConfig(format!("grid: {e}")))
    }
}

fn yes() -> bool {
    true
}
fn default_varrho() -> f64 {
    0.9
}
fn default_eta() -> f64 {
    0.05
}
fn default_varrho_sweep() -> Vec<f64> {
    crate::apps::saturated::default_varrho_grid()
}
fn default_rho_upper() -> f64 {
    0.99
}
fn default_topology() -> Topology {
    Topology::Default
}
fn default_coordinates() -> CoordinateKind {
    CoordinateKind::Reduced
}
fn zero_curve() -> CurveSpec {
    CurveSpec::Zero
}
fn default_record_every() -> usize {
    1
}
fn default_radius() -> f64 {
    1e8
}
fn default_half_width() -> f64 {
    5.0
}
fn default_sample_count() -> usize {
    2000
}
fn default_converge_tol() -> f64 {
    1e-3
}
fn default_grid_lo() -> f64 {
    1e-6
}
fn default_grid_hi() -> f64 {
    1e6
}
fn default_grid_points() -> usize {
    200
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        ScenarioConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// State dimensions `(n, m)` of the configured system.
    pub fn state_dims(&self) -> (usize, usize) {
        match (self.scenario, &self.source) {
            (ScenarioKind::SourceSeeking, Some(src)) => {
                let (n_agents, dim) = (src.formation.len(), src.p_star.len());
                let m = match src.coordinates {
                    CoordinateKind::Full => 2 * n_agents * dim,
                    CoordinateKind::Reduced => (2 * n_agents - 1) * dim,
                };
                (n_agents * dim, m)
            }
            _ => (1, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let missing = |table: &str| Err(Error::InvalidConfig(format!("scenario {} needs a [{table}] table", self.scenario.name())));
        match self.scenario {
            ScenarioKind::Example1Saturated => match &self.example1 {
                Some(p) => {
                    positive("example1.c0", p.c0)?;
                    positive("example1.eta", p.eta)?;
                    for &v in std::iter::once(&p.varrho).chain(&p.varrho_sweep) {
                        if !(v > 0.0 && v < 1.0) {
                            return Err(Error::InvalidConfig(format!("example1.varrho must lie in (0, 1), got {v}")));
                        }
                    }
                }
                None => return missing("example1"),
            },
            ScenarioKind::Example2FeedbackOpt => match &self.example2 {
                Some(p) => {
                    positive("example2.coeff", p.coeff)?;
                    positive("example2.rho_upper_coeff", p.rho_upper_coeff)?;
                }
                None => return missing("example2"),
            },
            ScenarioKind::IntegralControl => match &self.integral {
                Some(p) => positive("integral.coeff", p.coeff)?,
                None => return missing("integral"),
            },
            ScenarioKind::SourceSeeking => match &self.source {
                Some(p) => {
                    positive("source.mu", p.mu)?;
                    positive("source.c0", p.c0)?;
                    positive("source.p_epsilon", p.p_epsilon)?;
                    let dim = p.p_star.len();
                    if p.formation.len() < 2 || p.formation.iter().any(|d| d.len() != dim) {
                        return Err(Error::InvalidConfig(format!(
                            "source.formation needs at least two rows of length {dim}"
                        )));
                    }
                    if let Some(pos) = &p.positions {
                        if pos.len() != p.formation.len() || pos.iter().any(|q| q.len() != dim) {
                            return Err(Error::InvalidConfig("source.positions must match source.formation".into()));
                        }
                    }
                    if let ObjectiveSpec::Quadratic { center, scale } = &p.objective {
                        positive("source.objective.scale", *scale)?;
                        if center.len() != dim {
                            return Err(Error::InvalidConfig("source.objective.center has wrong dimension".into()));
                        }
                    }
                }
                None => return missing("source"),
            },
            ScenarioKind::Custom => match &self.custom {
                Some(p) => {
                    positive("custom.k_s", p.k_s)?;
                    positive("custom.k_f", p.k_f)?;
                }
                None => return missing("custom"),
            },
        }
        if let Some(sim) = &self.simulation {
            sim.to_sim_config()?;
        }
        let (n, m) = self.state_dims();
        for (i, s) in self.initial.states.iter().enumerate() {
            if s.len() != n + m {
                return Err(Error::InvalidConfig(format!(
                    "initial.states[{i}] has length {}, expected {}",
                    s.len(),
                    n + m
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("initial.states[{i}] is not finite")));
            }
        }
        positive("initial.half_width", self.initial.half_width)?;
        positive("samples.half_width", self.samples.half_width)?;
        positive("checks.converge_tol", self.checks.converge_tol)?;
        self.grid.build()?;
        Ok(())
    }
}
