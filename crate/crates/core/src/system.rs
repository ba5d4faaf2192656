//! Generalized singularly perturbed systems
//!
//! ```text
//! ẋ = ρ_s(x, z, d) · g_s(x, z, d)
//! ż = ρ_f(z, x, w) · g_f(z, x, w)
//! ```
//!
//! with a steady-state map φ satisfying `g_f(φ(x), x, 0) = 0`.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrate::{dopri5, rk4, AdaptiveOptions, Flow, StepStats};

/// Writes a vector field into its last argument.
pub type Field = Arc<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type Rate = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;
pub type SteadyState = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// slow state
    pub n: usize,
    /// fast state
    pub m: usize,
    /// slow input d
    pub p: usize,
    /// fast input w
    pub q: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, p: usize, q: usize) -> Self {
        Dims { n, m, p, q }
    }
}

/// Deterministic input signal.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Zero,
    Constant(Vec<f64>),
    Step {
        before: Vec<f64>,
        after: Vec<f64>,
        at: f64,
    },
    /// `offset + amplitude·sin(2π·frequency·t + phase)`
    Sinusoid {
        offset: Vec<f64>,
        amplitude: Vec<f64>,
        frequency: f64,
        phase: f64,
    },
}

impl Signal {
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            Signal::Zero => out.fill(0.0),
            Signal::Constant(v) => out.copy_from_slice(v),
            Signal::Step { before, after, at } => {
                out.copy_from_slice(if t < *at { before } else { after })
            }
            Signal::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => {
                let s = (2.0 * std::f64::consts::PI * frequency * t + phase).sin();
                for (o, (c, a)) in out.iter_mut().zip(offset.iter().zip(amplitude)) {
                    *o = c + a * s;
                }
            }
        }
    }

    pub fn eval(&self, t: f64, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.eval_into(t, &mut out);
        out
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Signal::Zero => None,
            Signal::Constant(v) => Some(v.len()),
            Signal::Step { before, after, .. } => {
                (before.len() == after.len()).then_some(before.len()).or(Some(usize::MAX))
            }
            Signal::Sinusoid {
                offset, amplitude, ..
            } => (offset.len() == amplitude.len())
                .then_some(offset.len())
                .or(Some(usize::MAX)),
        }
    }

    /// Largest magnitude the signal can take.
    pub fn sup_norm(&self) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        match self {
            Signal::Zero => 0.0,
            Signal::Constant(v) => norm(v),
            Signal::Step { before, after, .. } => norm(before).max(norm(after)),
            Signal::Sinusoid {
                offset, amplitude, ..
            } => norm(offset) + norm(amplitude),
        }
    }
}

#[derive(Clone)]
pub struct PerturbedSystem {
    pub name: String,
    pub dims: Dims,
    g_s: Field,
    g_f: Field,
    rho_s: Rate,
    rho_f: Rate,
    phi: SteadyState,
    d_signal: Signal,
    w_signal: Signal,
}

impl fmt::Debug for PerturbedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbedSystem")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("d_signal", &self.d_signal)
            .field("w_signal", &self.w_signal)
            .finish_non_exhaustive()
    }
}

impl PerturbedSystem {
    /// Zero vector fields, unit rates and φ ≡ 0 until replaced.
    pub fn new(name: impl Into<String>, dims: Dims) -> Self {
        PerturbedSystem {
            name: name.into(),
            dims,
            g_s: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            g_f: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            rho_s: Arc::new(|_, _, _| 1.0),
            rho_f: Arc::new(|_, _, _| 1.0),
            phi: Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
            d_signal: Signal::Zero,
            w_signal: Signal::Zero,
        }
    }

    /// `g_s(x, z, d)`
    pub fn slow(mut self, f: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.g_s = Arc::new(f);
        self
    }

    /// `g_f(z, x, w)`
    pub fn fast(mut self, f: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.g_f = Arc::new(f);
        self
    }

    /// `ρ_s(x, z, d)`
    pub fn slow_rate(mut self, f: impl Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.rho_s = Arc::new(f);
        self
    }

    /// `ρ_f(z, x, w)`
    pub fn fast_rate(mut self, f: impl Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.rho_f = Arc::new(f);
        self
    }

    pub fn steady_state(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.phi = Arc::new(f);
        self
    }

    pub fn inputs(mut self, d: Signal, w: Signal) -> Result<Self> {
        for (sig, dim, what) in [(&d, self.dims.p, "d signal"), (&w, self.dims.q, "w signal")] {
            if let Some(found) = sig.dim() {
                if found != dim {
                    return Err(Error::Dimension {
                        what,
                        expected: dim,
                        found,
                    });
                }
            }
        }
        self.d_signal = d;
        self.w_signal = w;
        Ok(self)
    }

    pub fn d_signal(&self) -> &Signal {
        &self.d_signal
    }

    pub fn w_signal(&self) -> &Signal {
        &self.w_signal
    }

    pub fn slow_field(&self, x: &[f64], z: &[f64], d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.n];
        (self.g_s)(x, z, d, &mut out);
        out
    }

    pub fn fast_field(&self, z: &[f64], x: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.m];
        (self.g_f)(z, x, w, &mut out);
        out
    }

    pub fn slow_rate_at(&self, x: &[f64], z: &[f64], d: &[f64]) -> f64 {
        (self.rho_s)(x, z, d)
    }

    pub fn fast_rate_at(&self, z: &[f64], x: &[f64], w: &[f64]) -> f64 {
        (self.rho_f)(z, x, w)
    }

    pub fn phi(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.m];
        (self.phi)(x, &mut out);
        out
    }

    fn check_state(&self, x: &[f64], z: &[f64]) -> Result<()> {
        if x.len() != self.dims.n {
            return Err(Error::Dimension {
                what: "x",
                expected: self.dims.n,
                found: x.len(),
            });
        }
        if z.len() != self.dims.m {
            return Err(Error::Dimension {
                what: "z",
                expected: self.dims.m,
                found: z.len(),
            });
        }
        Ok(())
    }

    /// `(ρ_s·g_s, ρ_f·g_f)` at time `t`.
    pub fn rhs(&self, t: f64, x: &[f64], z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(x, z)?;
        let mut y = x.to_vec();
        y.extend_from_slice(z);
        let mut dy = vec![0.0; y.len()];
        let mut scratch = Scratch::new(self.dims);
        self.rhs_into(t, &y, &mut dy, &mut scratch)?;
        let dz = dy.split_off(self.dims.n);
        Ok((dy, dz))
    }

    fn rhs_into(&self, t: f64, y: &[f64], dy: &mut [f64], s: &mut Scratch) -> Result<()> {
        let (x, z) = y.split_at(self.dims.n);
        let (dx, dz) = dy.split_at_mut(self.dims.n);
        self.d_signal.eval_into(t, &mut s.d);
        self.w_signal.eval_into(t, &mut s.w);
        (self.g_s)(x, z, &s.d, dx);
        (self.g_f)(z, x, &s.w, dz);
        let rho_s = (self.rho_s)(x, z, &s.d);
        let rho_f = (self.rho_f)(z, x, &s.w);
        validate_rate("rho_s", t, rho_s, dx)?;
        validate_rate("rho_f", t, rho_f, dz)?;
        dx.iter_mut().for_each(|v| *v *= rho_s);
        dz.iter_mut().for_each(|v| *v *= rho_f);
        Ok(())
    }
}

/// A rate may vanish only where the field it multiplies vanishes.
fn validate_rate(which: &'static str, t: f64, rho: f64, field: &[f64]) -> Result<()> {
    let invalid = !rho.is_finite() || rho < 0.0 || (rho == 0.0 && field.iter().any(|v| *v != 0.0));
    if invalid {
        Err(Error::NonPositiveRate { which, t, value: rho })
    } else {
        Ok(())
    }
}

struct Scratch {
    d: Vec<f64>,
    w: Vec<f64>,
}

impl Scratch {
    fn new(dims: Dims) -> Self {
        Scratch {
            d: vec![0.0; dims.p],
            w: vec![0.0; dims.q],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 { dt: f64 },
    Rk45 { rtol: f64, atol: f64, max_step: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub t_final: f64,
    pub method: Method,
    pub divergence_radius: f64,
    pub record_every: usize,
}

impl SimConfig {
    pub fn rk4(t_final: f64, dt: f64) -> Self {
        SimConfig {
            t_final,
            method: Method::Rk4 { dt },
            divergence_radius: 1e8,
            record_every: 1,
        }
    }

    pub fn rk45(t_final: f64, rtol: f64, atol: f64) -> Self {
        SimConfig {
            t_final,
            method: Method::Rk45 {
                rtol,
                atol,
                max_step: None,
            },
            divergence_radius: 1e8,
            record_every: 1,
        }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.t_final) {
            return Err(Error::InvalidConfig(format!("t_final must be positive, got {}", self.t_final)));
        }
        match self.method {
            Method::Rk4 { dt } if !positive(dt) => {
                return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")))
            }
            Method::Rk45 { rtol, atol, max_step } => {
                if !positive(rtol) || !positive(atol) {
                    return Err(Error::InvalidConfig(format!(
                        "rtol and atol must be positive, got rtol = {rtol}, atol = {atol}"
                    )));
                }
                if let Some(h) = max_step {
                    if !positive(h) {
                        return Err(Error::InvalidConfig(format!("max_step must be positive, got {h}")));
                    }
                }
            }
            _ => {}
        }
        if !positive(self.divergence_radius) {
            return Err(Error::InvalidConfig(format!(
                "divergence_radius must be positive, got {}",
                self.divergence_radius
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub zs: Vec<Vec<f64>>,
    /// `(V_s, V_f, V)` per sample when attached.
    pub lyapunov: Option<Vec<[f64; 3]>>,
    pub stats: StepStats,
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn final_x(&self) -> &[f64] {
        self.xs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_z(&self) -> &[f64] {
        self.zs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Euclidean distance of each sample `(x, z)` from `(x_ref, z_ref)`.
    pub fn distances_to(&self, x_ref: &[f64], z_ref: &[f64]) -> Vec<f64> {
        self.xs
            .iter()
            .zip(&self.zs)
            .map(|(x, z)| {
                let sx: f64 = x.iter().zip(x_ref).map(|(a, b)| (a - b).powi(2)).sum();
                let sz: f64 = z.iter().zip(z_ref).map(|(a, b)| (a - b).powi(2)).sum();
                (sx + sz).sqrt()
            })
            .collect()
    }

    pub fn attach_lyapunov(&mut self, v: impl Fn(&[f64], &[f64]) -> [f64; 3]) {
        self.lyapunov = Some(self.xs.iter().zip(&self.zs).map(|(x, z)| v(x, z)).collect());
    }

    pub fn to_csv(&self) -> String {
        let n = self.xs.first().map_or(0, Vec::len);
        let m = self.zs.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("z_{i}")));
        if self.lyapunov.is_some() {
            header.extend(["V_s", "V_f", "V"].map(String::from));
        }
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{:.16e}", self.times[k]);
            let lyap = self.lyapunov.as_ref().map(|l| &l[k][..]).unwrap_or(&[]);
            for v in self.xs[k].iter().chain(&self.zs[k]).chain(lyap) {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Integrates the system from `(x0, z0)` over `[0, config.t_final]`.
///
/// The run stops early, with `diverged` set, once `|(x, z)|` exceeds the
/// divergence radius or becomes non-finite.
pub fn simulate(system: &PerturbedSystem, x0: &[f64], z0: &[f64], config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    system.check_state(x0, z0)?;
    let n = system.dims.n;
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(z0);
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("initial state must be finite".into()));
    }

    let mut traj = Trajectory {
        times: vec![0.0],
        xs: vec![x0.to_vec()],
        zs: vec![z0.to_vec()],
        ..Trajectory::default()
    };
    let mut scratch = Scratch::new(system.dims);
    let f = |t: f64, y: &[f64], dy: &mut [f64]| system.rhs_into(t, y, dy, &mut scratch);

    let mut step = 0usize;
    let mut pending: Option<(f64, Vec<f64>)> = None;
    let mut diverged = false;
    let observe = |t: f64, y: &[f64]| {
        step += 1;
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            diverged = true;
            return Flow::Stop;
        }
        if step.is_multiple_of(config.record_every) || norm > config.divergence_radius {
            traj.times.push(t);
            traj.xs.push(y[..n].to_vec());
            traj.zs.push(y[n..].to_vec());
            pending = None;
        } else {
            pending = Some((t, y.to_vec()));
        }
        if norm > config.divergence_radius {
            diverged = true;
            Flow::Stop
        } else {
            Flow::Continue
        }
    };

    let stats = match config.method {
        Method::Rk4 { dt } => rk4(f, &y0, 0.0, config.t_final, dt, observe)?,
        Method::Rk45 { rtol, atol, max_step } => dopri5(
            f,
            &y0,
            0.0,
            config.t_final,
            AdaptiveOptions { rtol, atol, max_step },
            observe,
        )?,
    };
    if let Some((t, y)) = pending {
        traj.times.push(t);
        traj.xs.push(y[..n].to_vec());
        traj.zs.push(y[n..].to_vec());
    }
    traj.stats = stats;
    traj.diverged = diverged;
    Ok(traj)
}

/// Runs independent initial conditions in parallel; results keep input order.
pub fn simulate_batch(
    system: &PerturbedSystem,
    initial: &[(Vec<f64>, Vec<f64>)],
    config: &SimConfig,
) -> Vec<Result<Trajectory>> {
    initial
        .par_iter()
        .map(|(x0, z0)| simulate(system, x0, z0, config))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateReport {
    pub pass: bool,
    /// max over the grid of `|g_f(φ(x), x, 0)|`
    pub max_residual: f64,
    pub worst_x: Vec<f64>,
    /// `|g_s(0, φ(0), 0)|`
    pub origin_residual: f64,
    pub tol: f64,
}

pub fn check_steady_state_map(system: &PerturbedSystem, x_grid: &[Vec<f64>], tol: f64) -> Result<SteadyStateReport> {
    if x_grid.is_empty() {
        return Err(Error::Precondition("empty x grid".into()));
    }
    let Dims { n, p, q, .. } = system.dims;
    let (d0, w0) = (vec![0.0; p], vec![0.0; q]);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut report = SteadyStateReport {
        pass: false,
        max_residual: 0.0,
        worst_x: x_grid[0].clone(),
        origin_residual: 0.0,
        tol,
    };
    for x in x_grid {
        if x.len() != n {
            return Err(Error::Dimension {
                what: "x grid point",
                expected: n,
                found: x.len(),
            });
        }
        let r = norm(&system.fast_field(&system.phi(x), x, &w0));
        if r > report.max_residual || r.is_nan() {
            report.max_residual = r;
            report.worst_x = x.clone();
        }
    }
    let origin = vec![0.0; n];
    report.origin_residual = norm(&system.slow_field(&origin, &system.phi(&origin), &d0));
    report.pass = report.max_residual <= tol && report.origin_residual <= tol;
    Ok(report)
}
