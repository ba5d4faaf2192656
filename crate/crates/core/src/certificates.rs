//! ISS-Lyapunov certificates for singularly perturbed systems.
//!
//! Every "for all states" condition is checked on a finite sample set and
//! every "for all r > 0" condition on a log grid. Implications are only
//! tested where their guard holds, with the guard inflated by a factor
//! `1 + 1e-9`; consequents are accepted up to a slack of
//! `1e-9 + 1e-12·scale`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::comparison::{
    check_small_gain, compose, construct_sigma_on, invert_numeric, Bracket, ComparisonCurve, CurveClass, LogGrid,
};
use crate::error::{Error, Result};
use crate::system::{Dims, PerturbedSystem, Trajectory};

pub const GUARD_INFLATION: f64 = 1.0 + 1e-9;
pub const SLACK_ABS: f64 = 1e-9;
pub const SLACK_REL: f64 = 1e-12;
pub const STRICT_MARGIN: f64 = 1e-9;
pub const C0_SAFETY: f64 = 0.999;
pub const RHO_S0_SAFETY: f64 = 0.96;
pub const RHO_F0_SAFETY: f64 = 1.04;

pub type ScalarMap = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Maps `(z, x)`.
pub type PairScalar = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// Maps `(z, x)`.
pub type PairVector = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn slack(scale: f64) -> f64 {
    SLACK_ABS + SLACK_REL * scale.abs()
}

/// Comparison curves of an ISS-Lyapunov certificate.
#[derive(Debug, Clone)]
pub struct CertificateCurves {
    /// α̲_s
    pub slow_lower_bound: ComparisonCurve,
    /// ᾱ_s
    pub slow_upper_bound: ComparisonCurve,
    /// γ_s
    pub slow_gain: ComparisonCurve,
    /// χ_s; `None` when the system has no slow input
    pub slow_input_gain: Option<ComparisonCurve>,
    /// α_s
    pub slow_decay: ComparisonCurve,
    /// α̲_f
    pub fast_lower_bound: ComparisonCurve,
    /// ᾱ_f
    pub fast_upper_bound: ComparisonCurve,
    /// χ_f; `None` when the system has no fast input
    pub fast_input_gain: Option<ComparisonCurve>,
    /// α_f
    pub fast_decay: ComparisonCurve,
    /// λ_f1
    pub cross_fast: ComparisonCurve,
    /// λ_f2
    pub cross_slow: ComparisonCurve,
}

#[derive(Clone)]
pub struct ISSCertificate {
    v_s: ScalarMap,
    grad_v_s: VectorMap,
    v_f: PairScalar,
    grad_v_f_z: PairVector,
    grad_v_f_x: PairVector,
    pub curves: CertificateCurves,
}

impl fmt::Debug for ISSCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ISSCertificate").field("curves", &self.curves).finish_non_exhaustive()
    }
}

impl ISSCertificate {
    pub fn new(
        v_s: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad_v_s: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        v_f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        grad_v_f_z: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        grad_v_f_x: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        curves: CertificateCurves,
    ) -> Self {
        ISSCertificate {
            v_s: Arc::new(v_s),
            grad_v_s: Arc::new(grad_v_s),
            v_f: Arc::new(v_f),
            grad_v_f_z: Arc::new(grad_v_f_z),
            grad_v_f_x: Arc::new(grad_v_f_x),
            curves,
        }
    }

    /// `V_s = k_s·|x|²`, `V_f = k_f·|z − φ(x)|²` for an affine
    /// `φ(x) = x + offset` (requires `n = m`).
    pub fn quadratic_shift(k_s: f64, k_f: f64, offset: Vec<f64>, curves: CertificateCurves) -> Self {
        let (o1, o2, o3) = (offset.clone(), offset.clone(), offset);
        let err = |z: &[f64], x: &[f64], o: &[f64]| -> Vec<f64> {
            z.iter().zip(x).zip(o).map(|((z, x), o)| z - x - o).collect()
        };
        ISSCertificate::new(
            move |x| k_s * dot(x, x),
            move |x| x.iter().map(|v| 2.0 * k_s * v).collect(),
            move |z, x| {
                let e = err(z, x, &o1);
                k_f * dot(&e, &e)
            },
            move |z, x| err(z, x, &o2).iter().map(|e| 2.0 * k_f * e).collect(),
            move |z, x| err(z, x, &o3).iter().map(|e| -2.0 * k_f * e).collect(),
            curves,
        )
    }

    pub fn v_s(&self, x: &[f64]) -> f64 {
        (self.v_s)(x)
    }

    pub fn grad_v_s(&self, x: &[f64]) -> Vec<f64> {
        (self.grad_v_s)(x)
    }

    pub fn v_f(&self, z: &[f64], x: &[f64]) -> f64 {
        (self.v_f)(z, x)
    }

    pub fn grad_v_f_z(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        (self.grad_v_f_z)(z, x)
    }

    pub fn grad_v_f_x(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        (self.grad_v_f_x)(z, x)
    }

    fn chi_s(&self, d: &[f64]) -> f64 {
        self.curves.slow_input_gain.as_ref().map_or(0.0, |c| c.eval(norm(d)))
    }

    fn chi_f(&self, w: &[f64]) -> f64 {
        self.curves.fast_input_gain.as_ref().map_or(0.0, |c| c.eval(norm(w)))
    }
}

/// Perturbation-function bounds for the max-type Lyapunov construction.
#[derive(Debug, Clone)]
pub struct TheoremConditions {
    /// ρ̲_s
    pub rho_lower_s: ComparisonCurve,
    /// γ_f
    pub gamma_f: ComparisonCurve,
    /// ρ̄_s
    pub rho_upper_s: ComparisonCurve,
    /// ρ̲_f
    pub rho_lower_f: ComparisonCurve,
    pub grid: LogGrid,
    /// Relative margin for strict curve inequalities.
    pub margin: f64,
}

impl TheoremConditions {
    pub fn new(
        rho_lower_s: ComparisonCurve,
        gamma_f: ComparisonCurve,
        rho_upper_s: ComparisonCurve,
        rho_lower_f: ComparisonCurve,
    ) -> Self {
        TheoremConditions {
            rho_lower_s,
            gamma_f,
            rho_upper_s,
            rho_lower_f,
            grid: LogGrid::default(),
            margin: STRICT_MARGIN,
        }
    }

    pub fn with_grid(mut self, grid: LogGrid) -> Self {
        self.grid = grid;
        self
    }

    /// σ wedged between γ_s and γ_f⁻¹.
    pub fn sigma(&self, cert: &ISSCertificate) -> Result<ComparisonCurve> {
        construct_sigma_on(&cert.curves.slow_gain, &self.gamma_f, &self.grid)
    }
}

/// One `(x, z, d, w)` tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSample {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub d: Vec<f64>,
    pub w: Vec<f64>,
}

/// Uniform sampling box centred on the equilibrium `(0, φ(0), 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub x_half_width: f64,
    pub z_half_width: f64,
    pub input_half_width: f64,
    pub random: usize,
    pub seed: u64,
}

impl SampleBox {
    pub fn new(half_width: f64, random: usize, seed: u64) -> Self {
        SampleBox {
            x_half_width: half_width,
            z_half_width: half_width,
            input_half_width: 1.0,
            random,
            seed,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "|x_i| <= {}, |z_i - phi_i(0)| <= {}, |d_i|, |w_i| <= {}, {} random samples, seed {}",
            self.x_half_width, self.z_half_width, self.input_half_width, self.random, self.seed
        )
    }
}

/// Random samples in the box plus the equilibrium and points on the
/// coordinate axes. Sample `i` draws from its own ChaCha stream, so the
/// set does not depend on thread scheduling.
pub fn sample_states(system: &PerturbedSystem, bx: &SampleBox) -> Vec<StateSample> {
    let Dims { n, m, p, q } = system.dims;
    let z0 = system.phi(&vec![0.0; n]);
    let equilibrium = StateSample {
        x: vec![0.0; n],
        z: z0.clone(),
        d: vec![0.0; p],
        w: vec![0.0; q],
    };
    let mut samples = vec![equilibrium.clone()];
    for k in 1..=4 {
        for sign in [-1.0, 1.0] {
            for i in 0..n {
                let mut s = equilibrium.clone();
                s.x[i] = sign * bx.x_half_width * k as f64 / 4.0;
                samples.push(s);
            }
            for j in 0..m {
                let mut s = equilibrium.clone();
                s.z[j] += sign * bx.z_half_width * k as f64 / 4.0;
                samples.push(s);
            }
        }
    }
    let random: Vec<StateSample> = (0..bx.random)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(bx.seed);
            rng.set_stream(i as u64);
            let mut uniform = |h: f64| if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 };
            StateSample {
                x: (0..n).map(|_| uniform(bx.x_half_width)).collect(),
                z: z0.iter().map(|c| c + uniform(bx.z_half_width)).collect(),
                d: (0..p).map(|_| uniform(bx.input_half_width)).collect(),
                w: (0..q).map(|_| uniform(bx.input_half_width)).collect(),
            }
        })
        .collect();
    samples.extend(random);
    samples
}

/// Where a condition is worst.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    State(StateSample),
    Radius(f64),
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::State(s) => write!(f, "x={:?} z={:?} d={:?} w={:?}", s.x, s.z, s.d, s.w),
            Witness::Radius(r) => write!(f, "r={r:e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub name: String,
    pub pass: bool,
    /// Number of samples or grid points where the condition was tested.
    pub checked: usize,
    /// Smallest `rhs − lhs` (negative means violated), or the smallest
    /// relative margin for curve inequalities.
    pub worst_margin: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub conditions: Vec<ConditionResult>,
    pub region: String,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn first_failure(&self) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| !c.pass)
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.conditions.extend(other.conditions);
    }
}

/// Per-sample outcome: `None` if the guard does not hold, else
/// `(margin, tolerance)` with the check passing when `margin ≥ −tolerance`.
fn sample_condition<F>(name: &str, samples: &[StateSample], f: F) -> ConditionResult
where
    F: Fn(&StateSample) -> Option<(f64, f64)> + Sync,
{
    let (checked, worst) = samples
        .par_iter()
        .enumerate()
        .filter_map(|(i, s)| f(s).map(|(margin, tol)| (i, margin, tol)))
        .fold(
            || (0usize, None::<(usize, f64, f64)>),
            |(count, worst), item| (count + 1, Some(worse(worst, item))),
        )
        .reduce(
            || (0, None),
            |(c1, w1), (c2, w2)| {
                let w = match (w1, w2) {
                    (Some(a), Some(b)) => Some(worse(Some(a), b)),
                    (a, b) => a.or(b),
                };
                (c1 + c2, w)
            },
        );
    match worst {
        Some((i, margin, tol)) => ConditionResult {
            name: name.to_string(),
            pass: !margin.is_nan() && margin + tol >= 0.0,
            checked,
            worst_margin: margin,
            witness: Some(Witness::State(samples[i].clone())),
        },
        None => ConditionResult {
            name: name.to_string(),
            pass: true,
            checked: 0,
            worst_margin: f64::INFINITY,
            witness: None,
        },
    }
}

/// Ordering by normalized violation `margin + tol`, ties broken by index.
fn worse(current: Option<(usize, f64, f64)>, item: (usize, f64, f64)) -> (usize, f64, f64) {
    let key = |(i, m, t): (usize, f64, f64)| (if m.is_nan() { f64::NEG_INFINITY } else { m + t }, i);
    match current {
        None => item,
        Some(c) => {
            let (kc, ki) = (key(c), key(item));
            if ki.0 < kc.0 || (ki.0 == kc.0 && ki.1 < kc.1) {
                item
            } else {
                c
            }
        }
    }
}

/// Checks the sandwich bounds, the slow and fast decrease implications,
/// the cross-gradient bound and the supplied gradients.
pub fn verify_assumption2(system: &PerturbedSystem, cert: &ISSCertificate, samples: &[StateSample]) -> VerificationReport {
    let c = &cert.curves;
    let mut conditions = Vec::new();

    conditions.push(sample_condition("sandwich_slow", samples, |s| {
        let v = cert.v_s(&s.x);
        let r = norm(&s.x);
        let (lo, hi) = (c.slow_lower_bound.eval(r), c.slow_upper_bound.eval(r));
        Some(((v - lo).min(hi - v), slack(v.max(hi))))
    }));

    conditions.push(sample_condition("sandwich_fast", samples, |s| {
        let v = cert.v_f(&s.z, &s.x);
        let phi = system.phi(&s.x);
        let e: Vec<f64> = s.z.iter().zip(&phi).map(|(a, b)| a - b).collect();
        let r = norm(&e);
        let (lo, hi) = (c.fast_lower_bound.eval(r), c.fast_upper_bound.eval(r));
        Some(((v - lo).min(hi - v), slack(v.max(hi))))
    }));

    conditions.push(sample_condition("slow_decrease", samples, |s| {
        let v_s = cert.v_s(&s.x);
        let guard = c.slow_gain.eval(cert.v_f(&s.z, &s.x)).max(cert.chi_s(&s.d));
        if v_s < GUARD_INFLATION * guard {
            return None;
        }
        let lhs = dot(&cert.grad_v_s(&s.x), &system.slow_field(&s.x, &s.z, &s.d));
        let rhs = -c.slow_decay.eval(v_s);
        Some((rhs - lhs, slack(lhs.abs().max(rhs.abs()))))
    }));

    conditions.push(sample_condition("fast_decrease", samples, |s| {
        let v_f = cert.v_f(&s.z, &s.x);
        if v_f < GUARD_INFLATION * cert.chi_f(&s.w) {
            return None;
        }
        let lhs = dot(&cert.grad_v_f_z(&s.z, &s.x), &system.fast_field(&s.z, &s.x, &s.w));
        let rhs = -c.fast_decay.eval(v_f);
        Some((rhs - lhs, slack(lhs.abs().max(rhs.abs()))))
    }));

    conditions.push(sample_condition("cross_gradient", samples, |s| {
        let lhs = norm(&cert.grad_v_f_x(&s.z, &s.x));
        let rhs = c.cross_fast.eval(cert.v_f(&s.z, &s.x)) + c.cross_slow.eval(cert.v_s(&s.x));
        Some((rhs - lhs, slack(lhs.max(rhs))))
    }));

    conditions.push(check_gradients(cert, samples));

    VerificationReport {
        conditions,
        region: String::new(),
    }
}

/// Central finite differences against the supplied gradients; tolerance
/// `max(1e-6, 1e-4·|gradient|)`.
pub fn check_gradients(cert: &ISSCertificate, samples: &[StateSample]) -> ConditionResult {
    fn fd(f: &dyn Fn(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
        let mut p = at.to_vec();
        (0..at.len())
            .map(|i| {
                let h = 1e-6 * at[i].abs().max(1.0);
                let orig = p[i];
                p[i] = orig + h;
                let up = f(&p);
                p[i] = orig - h;
                let down = f(&p);
                p[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }
    sample_condition("gradient_consistency", samples, |s| {
        let g_s = cert.grad_v_s(&s.x);
        let g_fz = cert.grad_v_f_z(&s.z, &s.x);
        let g_fx = cert.grad_v_f_x(&s.z, &s.x);
        let n_s = fd(&|x| cert.v_s(x), &s.x);
        let n_fz = fd(&|z| cert.v_f(z, &s.x), &s.z);
        let n_fx = fd(&|x| cert.v_f(&s.z, x), &s.x);
        let margin = [(g_s, n_s), (g_fz, n_fz), (g_fx, n_fx)]
            .iter()
            .map(|(g, n)| {
                let diff: Vec<f64> = g.iter().zip(n).map(|(a, b)| a - b).collect();
                1e-6f64.max(1e-4 * norm(g)) - norm(&diff)
            })
            .fold(f64::INFINITY, f64::min);
        Some((margin, 0.0))
    })
}

/// `lhs(r) < rhs(r)` on a grid with relative margin.
fn grid_strict(name: &str, grid: &LogGrid, margin_min: f64, f: impl Fn(f64) -> Result<(f64, f64)>) -> Result<ConditionResult> {
    let points = grid.points();
    let mut worst = (f64::INFINITY, points[0]);
    for &r in &points {
        let (lhs, rhs) = f(r)?;
        let m = (rhs - lhs) / rhs.abs().max(f64::MIN_POSITIVE);
        if m < worst.0 || m.is_nan() {
            worst = (m, r);
        }
    }
    Ok(ConditionResult {
        name: name.into(),
        pass: worst.0 >= margin_min,
        checked: points.len(),
        worst_margin: worst.0,
        witness: Some(Witness::Radius(worst.1)),
    })
}

/// Checks the lower slow-rate bound, the small-gain condition, the
/// rate-balance inequality and the two fast-guard rate bounds.
pub fn verify_theorem1(
    system: &PerturbedSystem,
    cert: &ISSCertificate,
    cond: &TheoremConditions,
    samples: &[StateSample],
) -> Result<VerificationReport> {
    let c = &cert.curves;
    let mut conditions = Vec::new();

    conditions.push(sample_condition("rate_lower_slow", samples, |s| {
        let v_s = cert.v_s(&s.x);
        let guard = c.slow_gain.eval(cert.v_f(&s.z, &s.x)).max(cert.chi_s(&s.d));
        if v_s < GUARD_INFLATION * guard {
            return None;
        }
        let rho = system.slow_rate_at(&s.x, &s.z, &s.d);
        let bound = cond.rho_lower_s.eval(v_s);
        Some((rho - bound, slack(rho.max(bound))))
    }));

    let gain = check_small_gain(&cond.gamma_f, &c.slow_gain, &cond.grid)?;
    conditions.push(ConditionResult {
        name: "small_gain".into(),
        pass: gain.pass,
        checked: cond.grid.points,
        worst_margin: gain.worst_margin,
        witness: Some(Witness::Radius(gain.worst_r)),
    });

    let gamma_f_inv = cond.gamma_f.inverse();
    conditions.push(grid_strict("rate_balance", &cond.grid, cond.margin, |r| {
        let coupling = c.cross_slow.try_eval(gamma_f_inv.try_eval(r)?)?;
        let lhs = cond.rho_upper_s.try_eval(r)? * (c.cross_fast.try_eval(r)? + coupling);
        let rhs = cond.rho_lower_f.try_eval(r)? * c.fast_decay.try_eval(r)?;
        Ok((lhs, rhs))
    })?);

    let fast_guard = |s: &StateSample| -> Option<f64> {
        let v_f = cert.v_f(&s.z, &s.x);
        let chi_s = cert.chi_s(&s.d);
        let guard = cond
            .gamma_f
            .eval(cert.v_s(&s.x))
            .max(if chi_s > 0.0 { cond.gamma_f.eval(chi_s) } else { 0.0 })
            .max(cert.chi_f(&s.w));
        (v_f >= GUARD_INFLATION * guard).then_some(v_f)
    };

    conditions.push(sample_condition("rate_upper_slow", samples, |s| {
        let v_f = fast_guard(s)?;
        let lhs = system.slow_rate_at(&s.x, &s.z, &s.d) * norm(&system.slow_field(&s.x, &s.z, &s.d));
        let rhs = cond.rho_upper_s.eval(v_f);
        Some((rhs - lhs, slack(lhs.max(rhs))))
    }));

    conditions.push(sample_condition("rate_lower_fast", samples, |s| {
        let v_f = fast_guard(s)?;
        let rho = system.fast_rate_at(&s.z, &s.x, &s.w);
        let bound = cond.rho_lower_f.eval(v_f);
        Some((rho - bound, slack(rho.max(bound))))
    }));

    Ok(VerificationReport {
        conditions,
        region: String::new(),
    })
}

/// `ğ(α̲_s⁻¹∘γ + α̲_f⁻¹ + γ∘χ_s⁻¹)` for a slow gain `γ`; the last term is
/// dropped without a slow input gain.
fn bound_composite(cert: &ISSCertificate, gamma: &ComparisonCurve, g_breve: &ComparisonCurve) -> ComparisonCurve {
    let c = &cert.curves;
    let mut inner = compose(&c.slow_lower_bound.inverse(), gamma).plus(&c.fast_lower_bound.inverse());
    if let Some(chi_s) = &c.slow_input_gain {
        inner = inner.plus(&compose(gamma, &chi_s.inverse()));
    }
    compose(g_breve, &inner)
}

/// `ḡ_s = ğ_s(α̲_s⁻¹∘γ_s + α̲_f⁻¹ + γ_s∘χ_s⁻¹)`.
pub fn build_gbar_s(cert: &ISSCertificate, g_breve: &ComparisonCurve) -> Result<ComparisonCurve> {
    require_envelope(g_breve)?;
    Ok(bound_composite(cert, &cert.curves.slow_gain, g_breve).with_label("gbar_s"))
}

/// `g̃_s = ğ_s(α̲_s⁻¹∘γ_f⁻¹ + α̲_f⁻¹ + γ_f⁻¹∘χ_s⁻¹)`.
pub fn build_gtilde_s(cert: &ISSCertificate, gamma_f: &ComparisonCurve, g_breve: &ComparisonCurve) -> Result<ComparisonCurve> {
    require_envelope(g_breve)?;
    require_kinf(gamma_f)?;
    Ok(bound_composite(cert, &gamma_f.inverse(), g_breve).with_label("gtilde_s"))
}

fn require_kinf(curve: &ComparisonCurve) -> Result<()> {
    if curve.class() == CurveClass::KInf {
        Ok(())
    } else {
        Err(Error::ClassMismatch {
            curve: curve.label().to_string(),
            expected: CurveClass::KInf.to_string(),
            found: curve.class().to_string(),
        })
    }
}

/// Envelopes such as ğ_s may be bounded (saturating) but must vanish at
/// zero and be nondecreasing.
fn require_envelope(curve: &ComparisonCurve) -> Result<()> {
    match curve.class() {
        CurveClass::K | CurveClass::KInf | CurveClass::PD => Ok(()),
        found => Err(Error::ClassMismatch {
            curve: curve.label().to_string(),
            expected: "K, K_INF or PD".into(),
            found: found.to_string(),
        }),
    }
}

/// Checks `|g_s(x, z, d)| ≤ ğ_s(|x| + |z − φ(x)| + |d|)` on samples.
pub fn check_g_breve(system: &PerturbedSystem, g_breve: &ComparisonCurve, samples: &[StateSample]) -> ConditionResult {
    sample_condition("g_breve_bound", samples, |s| {
        let phi = system.phi(&s.x);
        let e: Vec<f64> = s.z.iter().zip(&phi).map(|(a, b)| a - b).collect();
        let lhs = norm(&system.slow_field(&s.x, &s.z, &s.d));
        let rhs = g_breve.eval(norm(&s.x) + norm(&e) + norm(&s.d));
        Some((rhs - lhs, slack(lhs.max(rhs))))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C0Bound {
    /// Largest admissible constant after the safety factor; 0 when flagged.
    pub c0_max: f64,
    /// Raw infimum of the ratio over the grid.
    pub infimum: f64,
    pub worst_r: f64,
    /// Set when the ratio is still decaying at a grid endpoint, so the
    /// true infimum is 0.
    pub unsatisfiable: bool,
}

/// Largest `c₀` with `c₀·ḡ_s(r)·λ̄_f(r) < α_f(r)` on the grid, where
/// `λ̄_f = λ_f1 + λ_f2∘γ_s`.
pub fn find_c0_max(cert: &ISSCertificate, g_breve: &ComparisonCurve, grid: &LogGrid) -> Result<C0Bound> {
    let c = &cert.curves;
    let gbar = build_gbar_s(cert, g_breve)?;
    let lambda_bar = c.cross_fast.plus(&compose(&c.cross_slow, &c.slow_gain));
    c0_ratio_bound(&c.fast_decay, &gbar, &lambda_bar, grid)
}

/// Infimum of `α_f / (ḡ_s·λ̄_f)` with the decay-at-endpoint test.
pub fn c0_ratio_bound(
    alpha_f: &ComparisonCurve,
    gbar: &ComparisonCurve,
    lambda_bar: &ComparisonCurve,
    grid: &LogGrid,
) -> Result<C0Bound> {
    let points = grid.points();
    let mut ratios = Vec::with_capacity(points.len());
    for &r in &points {
        let num = alpha_f.try_eval(r)?;
        let den = gbar.try_eval(r)? * lambda_bar.try_eval(r)?;
        ratios.push(if den > 0.0 { num / den } else { f64::INFINITY });
    }
    let (idx, infimum) = ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let decaying = |a: usize, b: usize| {
        let (ra, rb) = (ratios[a], ratios[b]);
        ra.is_finite() && rb.is_finite() && rb > 0.0 && (ra / rb).ln().abs() > 1e-3 * (points[b] / points[a]).ln().abs()
            && ra < rb
    };
    let last = points.len() - 1;
    let unsatisfiable = infimum <= 0.0
        || (points.len() >= 3
            && ((idx == 0 && decaying(0, 1) && decaying(1, 2))
                || (idx == last && decaying(last, last - 1) && decaying(last - 1, last - 2))));
    Ok(C0Bound {
        c0_max: if unsatisfiable { 0.0 } else { C0_SAFETY * infimum },
        infimum,
        worst_r: points[idx],
        unsatisfiable,
    })
}

/// `ρ_s⁰(r) = 0.96·ρ̄_s(g̃_s⁻¹(r))/r`, verified against
/// `ρ_s⁰(r)·r ≤ ρ̄_s(g̃_s⁻¹(r))` on the grid.
pub fn derive_rho_s0(rho_upper_s: &ComparisonCurve, g_tilde: &ComparisonCurve, grid: &LogGrid) -> Result<ComparisonCurve> {
    require_kinf(g_tilde)?;
    let bound = {
        let (rho, g) = (rho_upper_s.clone(), g_tilde.clone());
        move |r: f64| -> f64 {
            invert_numeric(&g, r, Bracket::default())
                .map(|s| rho.eval(s))
                .unwrap_or(f64::NAN)
        }
    };
    let raw = {
        let bound = bound.clone();
        move |r: f64| RHO_S0_SAFETY * bound(r) / r
    };
    let r_min = grid.lo;
    let near = raw(r_min);
    let nearer = raw(r_min * 1e-3);
    let at_zero = if (nearer - near).abs() <= 1e-3 * near.abs() {
        near
    } else if nearer < 1e-2 * near {
        0.0
    } else {
        near
    };
    let curve = ComparisonCurve::new("rho_s0", CurveClass::P, move |r| if r > 0.0 { raw(r) } else { at_zero });

    for r in grid.points() {
        let lhs = curve.try_eval(r)? * r;
        let rhs = bound(r);
        if !(lhs <= rhs) {
            return Err(Error::InequalityViolation {
                name: "rho_s0".into(),
                r,
                margin: rhs - lhs,
            });
        }
    }
    Ok(curve)
}

/// Checks a candidate `ρ_s⁰` against `ρ_s⁰(r)·r ≤ ρ̄_s(g̃_s⁻¹(r))`.
pub fn admits_rho_s0(
    candidate: &ComparisonCurve,
    rho_upper_s: &ComparisonCurve,
    g_tilde: &ComparisonCurve,
    grid: &LogGrid,
) -> Result<ConditionResult> {
    let g_inv = g_tilde.inverse();
    grid_strict("rho_s0_admissible", grid, 0.0, |r| {
        Ok((candidate.try_eval(r)? * r, rho_upper_s.try_eval(g_inv.try_eval(r)?)?))
    })
}

/// `ρ_f⁰(s) = 1.04·ρ̲_f(ᾱ_f(g_f^l⁻¹(s)))`, verified against
/// `ρ_f⁰(g_f^l(r)) ≥ ρ̲_f(ᾱ_f(r))` on the grid.
pub fn derive_rho_f0(
    cert: &ISSCertificate,
    rho_lower_f: &ComparisonCurve,
    g_f_lower: &ComparisonCurve,
    grid: &LogGrid,
) -> Result<ComparisonCurve> {
    require_kinf(g_f_lower)?;
    let chain = compose(rho_lower_f, &cert.curves.fast_upper_bound);
    let curve = compose(&chain, &g_f_lower.inverse())
        .scaled(RHO_F0_SAFETY)
        .with_class(CurveClass::P)
        .with_label("rho_f0");
    for r in grid.points() {
        let lhs = curve.try_eval(g_f_lower.try_eval(r)?)?;
        let rhs = chain.try_eval(r)?;
        if !(lhs >= rhs) {
            return Err(Error::InequalityViolation {
                name: "rho_f0".into(),
                r,
                margin: lhs - rhs,
            });
        }
    }
    Ok(curve)
}

/// Conditions for constant rates `ρ_s ≡ c₀`, `ρ_f ≡ 1`: ρ̲_s ≡ c₀,
/// ρ̲_f ≡ 1, `γ_f = ((1+η)γ_s)⁻¹` and `ρ̄_s = c₀·ĝ_s` with ĝ_s the bound
/// composite taken at `(1+η)γ_s`.
pub fn constant_rate_conditions(
    cert: &ISSCertificate,
    g_breve: &ComparisonCurve,
    c0: f64,
    eta: f64,
) -> Result<TheoremConditions> {
    if !(c0 > 0.0 && eta > 0.0) {
        return Err(Error::Precondition(format!("need c0 > 0 and eta > 0, got {c0}, {eta}")));
    }
    require_envelope(g_breve)?;
    let gamma_hat = cert.curves.slow_gain.scaled(1.0 + eta);
    let gamma_f = gamma_hat.inverse().with_label("gamma_f");
    let g_hat = bound_composite(cert, &gamma_hat, g_breve);
    Ok(TheoremConditions::new(
        ComparisonCurve::constant(c0),
        gamma_f,
        g_hat.scaled(c0).with_class(CurveClass::P).with_label("rho_upper_s"),
        ComparisonCurve::constant(1.0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Slow,
    Fast,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovValue {
    pub v_s: f64,
    pub v_f: f64,
    pub v: f64,
    pub branch: Branch,
}

/// `V(x, z) = max{V_s(x), σ(V_f(z, x))}`.
#[derive(Debug, Clone)]
pub struct MaxLyapunov {
    cert: ISSCertificate,
    sigma: ComparisonCurve,
}

pub fn build_max_lyapunov(cert: &ISSCertificate, sigma: &ComparisonCurve) -> MaxLyapunov {
    MaxLyapunov {
        cert: cert.clone(),
        sigma: sigma.clone(),
    }
}

impl MaxLyapunov {
    pub fn sigma(&self) -> &ComparisonCurve {
        &self.sigma
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> LyapunovValue {
        let v_s = self.cert.v_s(x);
        let v_f = self.cert.v_f(z, x);
        let fast = self.sigma.eval(v_f);
        let v = v_s.max(fast);
        let branch = if (v_s - fast).abs() <= 1e-12 * v {
            Branch::Tie
        } else if v_s > fast {
            Branch::Slow
        } else {
            Branch::Fast
        };
        LyapunovValue { v_s, v_f, v, branch }
    }

    /// `(V_s, V_f, V)` for trajectory export.
    pub fn triple(&self, x: &[f64], z: &[f64]) -> [f64; 3] {
        let l = self.eval(x, z);
        [l.v_s, l.v_f, l.v]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseReport {
    pub pass: bool,
    pub checked_pairs: usize,
    pub violations: usize,
    /// Fraction of samples with `V > input_level`.
    pub fraction_above: f64,
    /// Largest `V(t_{k+1}) − V(t_k)` among checked pairs.
    pub worst_increase: f64,
    pub first_violation_time: Option<f64>,
}

/// Difference-form decrease: `V(t_{k+1}) ≤ V(t_k) + 1e-7·max(1, V(t_k))`
/// whenever `V(t_k) > input_level`.
pub fn check_decrease_along_trajectory(traj: &Trajectory, v: &MaxLyapunov, input_level: f64) -> DecreaseReport {
    let values: Vec<f64> = traj.xs.iter().zip(&traj.zs).map(|(x, z)| v.eval(x, z).v).collect();
    let above = values.iter().filter(|&&val| val > input_level).count();
    let mut report = DecreaseReport {
        pass: true,
        checked_pairs: 0,
        violations: 0,
        fraction_above: if values.is_empty() { 0.0 } else { above as f64 / values.len() as f64 },
        worst_increase: f64::NEG_INFINITY,
        first_violation_time: None,
    };
    for k in 1..values.len() {
        let (prev, next) = (values[k - 1], values[k]);
        if !(prev > input_level) {
            continue;
        }
        report.checked_pairs += 1;
        let increase = next - prev;
        report.worst_increase = report.worst_increase.max(increase);
        if increase > 1e-7 * prev.max(1.0) || next.is_nan() {
            report.violations += 1;
            report.first_violation_time.get_or_insert(traj.times[k]);
        }
    }
    report.pass = report.violations == 0;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{simulate, SimConfig};

    fn id() -> ComparisonCurve {
        ComparisonCurve::identity()
    }

    fn identity_curves() -> CertificateCurves {
        CertificateCurves {
            slow_lower_bound: id(),
            slow_upper_bound: id(),
            slow_gain: id(),
            slow_input_gain: Some(id()),
            slow_decay: id(),
            fast_lower_bound: id(),
            fast_upper_bound: id(),
            fast_input_gain: None,
            fast_decay: id(),
            cross_fast: id(),
            cross_slow: ComparisonCurve::zero(),
        }
    }

    fn identity_cert() -> ISSCertificate {
        ISSCertificate::quadratic_shift(1.0, 1.0, vec![0.0], identity_curves())
    }

    #[test]
    fn gbar_of_identities_is_three_r() {
        let g = build_gbar_s(&identity_cert(), &id()).unwrap();
        for r in [1e-3, 0.5, 2.0, 100.0] {
            assert!((g.eval(r) - 3.0 * r).abs() < 1e-9 * r);
        }
        assert_eq!(g.eval(0.0), 0.0);
    }

    #[test]
    fn c0_ratio_constant() {
        let bound = c0_ratio_bound(
            &ComparisonCurve::linear(2.0),
            &ComparisonCurve::power(1.0, 0.5),
            &ComparisonCurve::power(1.0, 0.5),
            &LogGrid::default(),
        )
        .unwrap();
        assert!(!bound.unsatisfiable);
        assert!((bound.c0_max - 1.998).abs() < 1e-9);
    }

    #[test]
    fn c0_ratio_vanishing_is_flagged() {
        let bound = c0_ratio_bound(&id(), &id(), &id(), &LogGrid::default()).unwrap();
        assert!(bound.unsatisfiable);
        assert_eq!(bound.c0_max, 0.0);
    }

    #[test]
    fn rho_s0_linear_cancellation() {
        let rho = derive_rho_s0(&id(), &id(), &LogGrid::default()).unwrap();
        for r in [0.0, 1e-4, 1.0, 1e3] {
            assert!((rho.eval(r) - 0.96).abs() < 1e-9, "r = {r}: {}", rho.eval(r));
        }
    }

    #[test]
    fn rho_s0_square_pair() {
        let sq = ComparisonCurve::power(1.0, 2.0);
        let rho = derive_rho_s0(&sq, &sq, &LogGrid::default()).unwrap();
        assert!((rho.eval(4.0) - 0.96).abs() < 1e-9);
    }

    #[test]
    fn rho_f0_examples() {
        let grid = LogGrid::default();
        let cert = identity_cert();
        let r = derive_rho_f0(&cert, &id(), &id(), &grid).unwrap();
        assert!((r.eval(3.0) - 3.12).abs() < 1e-9);

        let mut curves = identity_curves();
        curves.fast_upper_bound = ComparisonCurve::power(1.0, 2.0);
        let cert = ISSCertificate::quadratic_shift(1.0, 1.0, vec![0.0], curves);
        let r = derive_rho_f0(&cert, &id(), &ComparisonCurve::power(1.0, 3.0), &grid).unwrap();
        assert!((r.eval(8.0) - 4.16).abs() < 1e-9);

        let r = derive_rho_f0(&identity_cert(), &ComparisonCurve::constant(1.0), &id(), &grid).unwrap();
        assert!((r.eval(0.3) - 1.04).abs() < 1e-12);
    }

    #[test]
    fn max_lyapunov_branches() {
        let cert = identity_cert();
        let v = build_max_lyapunov(&cert, &ComparisonCurve::linear(2.0));
        let at = v.eval(&[1.0], &[1.0]);
        assert_eq!((at.v, at.branch), (1.0, Branch::Slow));
        let at = v.eval(&[0.0], &[0.0]);
        assert_eq!(at.v, 0.0);
        let at = v.eval(&[2.0_f64.sqrt()], &[2.0_f64.sqrt() + 1.0]);
        assert_eq!(at.branch, Branch::Tie);
        let at = v.eval(&[0.0], &[3.0]);
        assert_eq!((at.v, at.branch), (18.0, Branch::Fast));
    }

    #[test]
    fn gradient_check_catches_wrong_gradient() {
        let good = identity_cert();
        let bad = ISSCertificate::new(
            |x| x[0] * x[0],
            |x| vec![3.0 * x[0]],
            |z, x| (z[0] - x[0]).powi(2),
            |z, x| vec![2.0 * (z[0] - x[0])],
            |z, x| vec![-2.0 * (z[0] - x[0])],
            identity_curves(),
        );
        let samples = vec![StateSample {
            x: vec![1.5],
            z: vec![-0.5],
            d: vec![],
            w: vec![],
        }];
        assert!(check_gradients(&good, &samples).pass);
        assert!(!check_gradients(&bad, &samples).pass);
    }

    #[test]
    fn sampling_is_reproducible_and_boxed() {
        let sys = PerturbedSystem::new("s", Dims::new(2, 1, 1, 0)).steady_state(|_, out| out[0] = 1.0);
        let bx = SampleBox::new(5.0, 200, 7);
        let a = sample_states(&sys, &bx);
        let b = sample_states(&sys, &bx);
        assert_eq!(a, b);
        assert_eq!(a[0].z, vec![1.0]);
        assert_eq!(a.len(), 1 + 8 * 3 + 200);
        assert!(a.iter().all(|s| s.x.iter().all(|v| v.abs() <= 5.0) && (s.z[0] - 1.0).abs() <= 5.0));
        assert!(a.iter().all(|s| s.d[0].abs() <= 1.0));
        let c = sample_states(&sys, &SampleBox::new(5.0, 200, 8));
        assert_ne!(a[30], c[30]);
    }

    #[test]
    fn decrease_on_constant_trajectory_is_vacuous() {
        let sys = PerturbedSystem::new("still", Dims::new(1, 1, 0, 0));
        let traj = simulate(&sys, &[0.0], &[0.0], &SimConfig::rk4(1.0, 0.1)).unwrap();
        let v = build_max_lyapunov(&identity_cert(), &id());
        let rep = check_decrease_along_trajectory(&traj, &v, 0.0);
        assert!(rep.pass);
        assert_eq!(rep.checked_pairs, 0);
    }

    #[test]
    fn decrease_flags_growth() {
        let sys = PerturbedSystem::new("grow", Dims::new(1, 1, 0, 0)).slow(|x, _, _, out| out[0] = x[0]);
        let traj = simulate(&sys, &[1.0], &[1.0], &SimConfig::rk4(1.0, 0.1)).unwrap();
        let v = build_max_lyapunov(&identity_cert(), &id());
        let rep = check_decrease_along_trajectory(&traj, &v, 0.0);
        assert!(!rep.pass);
        assert_eq!(rep.first_violation_time, Some(traj.times[1]));
    }
}
