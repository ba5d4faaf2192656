//! Comparison functions on the nonnegative half-line.
//!
//! A [`ComparisonCurve`] wraps a scalar map together with the class it is
//! claimed to belong to (K, K∞, P, PD). Class membership is never proven
//! symbolically; [`check_class`] samples the curve on a [`LogGrid`] and the
//! checks in [`crate::certificates`] do the same for every inequality.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Relative margin used to witness strict inequalities on a grid.
pub const STRICT_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveClass {
    /// Strictly increasing, zero at zero.
    K,
    /// Class K and unbounded.
    KInf,
    /// Positive for r > 0, nonnegative at zero.
    P,
    /// Positive for r > 0, zero at zero.
    PD,
    Unspecified,
}

impl CurveClass {
    pub fn is_k(self) -> bool {
        matches!(self, CurveClass::K | CurveClass::KInf)
    }

    /// Every K-type or PD curve vanishes at zero and is positive elsewhere.
    fn is_positive_definite(self) -> bool {
        matches!(self, CurveClass::K | CurveClass::KInf | CurveClass::PD)
    }

    fn is_positive(self) -> bool {
        self.is_positive_definite() || self == CurveClass::P
    }

    pub fn name(self) -> &'static str {
        match self {
            CurveClass::K => "K",
            CurveClass::KInf => "K_INF",
            CurveClass::P => "P",
            CurveClass::PD => "PD",
            CurveClass::Unspecified => "UNSPECIFIED",
        }
    }

    /// Class of `outer ∘ inner`.
    pub fn compose(outer: CurveClass, inner: CurveClass) -> CurveClass {
        use CurveClass::*;
        match (outer, inner) {
            (KInf, KInf) => KInf,
            (o, i) if o.is_k() && i.is_k() => K,
            (o, i) if o.is_positive_definite() && i.is_positive_definite() => PD,
            _ => Unspecified,
        }
    }

    fn sum(a: CurveClass, b: CurveClass) -> CurveClass {
        use CurveClass::*;
        match (a, b) {
            (a, b) if a.is_k() && b.is_k() => {
                if a == KInf || b == KInf {
                    KInf
                } else {
                    K
                }
            }
            (a, b) if a.is_positive_definite() && b.is_positive_definite() => PD,
            (a, b) if a.is_positive() && b.is_positive() => P,
            _ => Unspecified,
        }
    }

    fn product(a: CurveClass, b: CurveClass) -> CurveClass {
        use CurveClass::*;
        match (a, b) {
            (KInf, KInf) => KInf,
            (a, b) if a.is_k() && b.is_k() => K,
            (a, b)
                if (a.is_positive_definite() && b.is_positive())
                    || (b.is_positive_definite() && a.is_positive()) =>
            {
                PD
            }
            (P, P) => P,
            _ => Unspecified,
        }
    }
}

impl fmt::Display for CurveClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Log-spaced sample points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for LogGrid {
    fn default() -> Self {
        LogGrid {
            lo: 1e-6,
            hi: 1e6,
            points: 200,
        }
    }
}

impl LogGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) || points < 2 {
            return Err(Error::Precondition(format!(
                "log grid needs 0 < lo < hi and at least two points (got [{lo}, {hi}], {points})"
            )));
        }
        Ok(LogGrid { lo, hi, points })
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.points.max(2);
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..n)
            .map(|i| {
                if i == 0 {
                    self.lo
                } else if i == n - 1 {
                    self.hi
                } else {
                    (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                }
            })
            .collect()
    }
}

/// A scalar map `r ↦ value` on `r ≥ 0` with a declared comparison class.
#[derive(Clone)]
pub struct ComparisonCurve {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Closed-form inverse when one is known.
    inv: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    class: CurveClass,
    domain: (f64, f64),
    label: String,
}

impl fmt::Debug for ComparisonCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComparisonCurve")
            .field("label", &self.label)
            .field("class", &self.class)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ComparisonCurve {
    pub fn new(
        label: impl Into<String>,
        class: CurveClass,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let grid = LogGrid::default();
        ComparisonCurve {
            f: Arc::new(f),
            inv: None,
            class,
            domain: (grid.lo, grid.hi),
            label: label.into(),
        }
    }

    fn with_inverse(mut self, inv: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.inv = Some(Arc::new(inv));
        self
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = (lo, hi);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_class(mut self, class: CurveClass) -> Self {
        self.class = class;
        self
    }

    pub fn identity() -> Self {
        Self::new("id", CurveClass::KInf, |r| r).with_inverse(|y| y)
    }

    pub fn linear(k: f64) -> Self {
        let class = if k > 0.0 {
            CurveClass::KInf
        } else {
            CurveClass::Unspecified
        };
        let curve = Self::new(format!("{k}*r"), class, move |r| k * r);
        if k > 0.0 {
            curve.with_inverse(move |y| if y >= 0.0 { y / k } else { f64::NAN })
        } else {
            curve
        }
    }

    /// `k·r^p`; K∞ for positive `k` and `p`.
    pub fn power(k: f64, p: f64) -> Self {
        let class = if k > 0.0 && p > 0.0 {
            CurveClass::KInf
        } else {
            CurveClass::Unspecified
        };
        let curve = Self::new(format!("{k}*r^{p}"), class, move |r| k * r.powf(p));
        if k > 0.0 && p > 0.0 {
            curve.with_inverse(move |y| if y >= 0.0 { (y / k).powf(1.0 / p) } else { f64::NAN })
        } else {
            curve
        }
    }

    pub fn constant(c: f64) -> Self {
        let class = if c > 0.0 {
            CurveClass::P
        } else {
            CurveClass::Unspecified
        };
        Self::new(format!("{c}"), class, move |_| c)
    }

    pub fn zero() -> Self {
        Self::new("0", CurveClass::Unspecified, |_| 0.0)
    }

    /// `min(1, r)`; bounded and flat past 1, so tagged PD.
    pub fn saturation() -> Self {
        Self::new("sat", CurveClass::PD, |r: f64| r.min(1.0))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn class(&self) -> CurveClass {
        self.class
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        (self.f)(r)
    }

    /// Evaluates and rejects negative arguments and negative or non-finite values.
    pub fn try_eval(&self, r: f64) -> Result<f64> {
        let value = if r >= 0.0 { self.eval(r) } else { f64::NAN };
        if value.is_finite() && value >= 0.0 {
            Ok(value)
        } else {
            Err(Error::Evaluation {
                curve: self.label.clone(),
                r,
                value,
            })
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        let f = self.f.clone();
        let class = if k > 0.0 {
            self.class
        } else {
            CurveClass::Unspecified
        };
        let inv = match (&self.inv, k > 0.0) {
            (Some(g), true) => {
                let g = g.clone();
                Some(Arc::new(move |y: f64| g(y / k)) as Arc<dyn Fn(f64) -> f64 + Send + Sync>)
            }
            _ => None,
        };
        ComparisonCurve {
            f: Arc::new(move |r| k * f(r)),
            inv,
            class,
            domain: self.domain,
            label: format!("{k}*({})", self.label),
        }
    }

    pub fn plus(&self, other: &ComparisonCurve) -> Self {
        let (f, g) = (self.f.clone(), other.f.clone());
        ComparisonCurve {
            f: Arc::new(move |r| f(r) + g(r)),
            inv: None,
            class: CurveClass::sum(self.class, other.class),
            domain: self.domain,
            label: format!("({})+({})", self.label, other.label),
        }
    }

    pub fn times(&self, other: &ComparisonCurve) -> Self {
        let (f, g) = (self.f.clone(), other.f.clone());
        ComparisonCurve {
            f: Arc::new(move |r| f(r) * g(r)),
            inv: None,
            class: CurveClass::product(self.class, other.class),
            domain: self.domain,
            label: format!("({})*({})", self.label, other.label),
        }
    }

    /// Closed-form inverse when known, else [`invert_numeric`]; evaluates to
    /// NaN where the inversion fails so that [`ComparisonCurve::try_eval`]
    /// reports it.
    pub fn inverse(&self) -> Self {
        let f: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match &self.inv {
            Some(g) => g.clone(),
            None => {
                let curve = self.clone();
                Arc::new(move |y| invert_numeric(&curve, y, Bracket::default()).unwrap_or(f64::NAN))
            }
        };
        ComparisonCurve {
            f,
            inv: Some(self.f.clone()),
            class: self.class,
            domain: self.domain,
            label: format!("inv({})", self.label),
        }
    }
}

/// `r ↦ outer(inner(r))`.
pub fn compose(outer: &ComparisonCurve, inner: &ComparisonCurve) -> ComparisonCurve {
    let (f, g) = (outer.f.clone(), inner.f.clone());
    let inv = match (&outer.inv, &inner.inv) {
        (Some(fi), Some(gi)) => {
            let (fi, gi) = (fi.clone(), gi.clone());
            Some(Arc::new(move |y: f64| gi(fi(y))) as Arc<dyn Fn(f64) -> f64 + Send + Sync>)
        }
        _ => None,
    };
    ComparisonCurve {
        f: Arc::new(move |r| {
            let v = g(r);
            if v < 0.0 {
                f64::NAN
            } else {
                f(v)
            }
        }),
        inv,
        class: CurveClass::compose(outer.class, inner.class),
        domain: inner.domain,
        label: format!("{}∘{}", outer.label, inner.label),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Bracket {
    fn default() -> Self {
        Bracket { lo: 0.0, hi: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertOptions {
    pub rtol: f64,
    pub y_floor: f64,
    pub max_doublings: usize,
}

impl Default for InvertOptions {
    fn default() -> Self {
        InvertOptions {
            rtol: 1e-12,
            y_floor: 1e-300,
            max_doublings: 60,
        }
    }
}

pub fn invert_numeric(curve: &ComparisonCurve, y: f64, bracket: Bracket) -> Result<f64> {
    invert_numeric_with(curve, y, bracket, InvertOptions::default())
}

/// Bisection for `curve(r) = y` on an increasing curve. The upper end of the
/// bracket is doubled until it encloses `y`.
pub fn invert_numeric_with(
    curve: &ComparisonCurve,
    y: f64,
    bracket: Bracket,
    opts: InvertOptions,
) -> Result<f64> {
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::Precondition(format!(
            "cannot invert `{}` at y = {y}",
            curve.label
        )));
    }
    let (mut lo, mut hi) = (bracket.lo.max(0.0), bracket.hi.max(bracket.lo.max(0.0)));
    let mut f_lo = curve.try_eval(lo)?;
    let mut f_hi = curve.try_eval(hi)?;
    let tol = opts.rtol * y.max(opts.y_floor);

    if y < f_lo - tol {
        return Err(Error::BracketFailure {
            curve: curve.label.clone(),
            y,
            upper: lo,
            value: f_lo,
        });
    }
    let mut doublings = 0;
    while f_hi < y - tol {
        if doublings == opts.max_doublings {
            return Err(Error::BracketFailure {
                curve: curve.label.clone(),
                y,
                upper: hi,
                value: f_hi,
            });
        }
        if f_hi < f_lo {
            return Err(Error::NonMonotone {
                curve: curve.label.clone(),
                r: hi,
            });
        }
        lo = hi;
        f_lo = f_hi;
        hi = if hi > 0.0 { 2.0 * hi } else { 1.0 };
        f_hi = curve.try_eval(hi)?;
        doublings += 1;
    }
    if (f_lo - y).abs() <= tol {
        return Ok(lo);
    }
    if (f_hi - y).abs() <= tol {
        return Ok(hi);
    }
    if f_hi < f_lo {
        return Err(Error::NonMonotone {
            curve: curve.label.clone(),
            r: hi,
        });
    }

    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            // Interval exhausted at machine resolution.
            return Ok(if (f_lo - y).abs() <= (f_hi - y).abs() {
                lo
            } else {
                hi
            });
        }
        let f_mid = curve.try_eval(mid)?;
        if f_mid < f_lo || f_mid > f_hi {
            return Err(Error::NonMonotone {
                curve: curve.label.clone(),
                r: mid,
            });
        }
        if (f_mid - y).abs() <= tol {
            return Ok(mid);
        }
        if f_mid < y {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub pass: bool,
    pub problem: Option<String>,
}

/// Samples `curve` at zero and on `grid` and checks its declared class.
pub fn check_class(curve: &ComparisonCurve, grid: &LogGrid) -> ClassReport {
    let fail = |msg: String| ClassReport {
        pass: false,
        problem: Some(msg),
    };
    let class = curve.class;
    let at_zero = curve.eval(0.0);
    if class.is_positive_definite() && at_zero != 0.0 {
        return fail(format!("value at 0 is {at_zero}, expected 0"));
    }
    if class == CurveClass::P && !(at_zero >= 0.0) {
        return fail(format!("value at 0 is {at_zero}, expected >= 0"));
    }
    let mut prev = at_zero;
    for r in grid.points() {
        let v = curve.eval(r);
        if !(v.is_finite() && v >= 0.0) {
            return fail(format!("value {v} at r = {r}"));
        }
        if class.is_positive() && v <= 0.0 {
            return fail(format!("not positive at r = {r}"));
        }
        if class.is_k() && v <= prev {
            return fail(format!("not strictly increasing at r = {r}"));
        }
        prev = v;
    }
    ClassReport {
        pass: true,
        problem: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallGainReport {
    pub pass: bool,
    /// `min over grid of (r − γ₁(γ₂(r))) / r`.
    pub worst_margin: f64,
    pub worst_r: f64,
}

pub fn check_small_gain(
    gamma_1: &ComparisonCurve,
    gamma_2: &ComparisonCurve,
    grid: &LogGrid,
) -> Result<SmallGainReport> {
    check_small_gain_with(gamma_1, gamma_2, grid, STRICT_MARGIN)
}

/// Checks `γ₁∘γ₂(r) < r` on `grid` with a relative margin.
pub fn check_small_gain_with(
    gamma_1: &ComparisonCurve,
    gamma_2: &ComparisonCurve,
    grid: &LogGrid,
    margin_min: f64,
) -> Result<SmallGainReport> {
    for gamma in [gamma_1, gamma_2] {
        if gamma.class != CurveClass::KInf {
            return Err(Error::ClassMismatch {
                curve: gamma.label.clone(),
                expected: CurveClass::KInf.to_string(),
                found: gamma.class.to_string(),
            });
        }
    }
    let mut worst = SmallGainReport {
        pass: true,
        worst_margin: f64::INFINITY,
        worst_r: f64::NAN,
    };
    for r in grid.points() {
        let loop_gain = gamma_1.try_eval(gamma_2.try_eval(r)?)?;
        let margin = (r - loop_gain) / r;
        if margin < worst.worst_margin {
            worst.worst_margin = margin;
            worst.worst_r = r;
        }
    }
    worst.pass = worst.worst_margin >= margin_min;
    Ok(worst)
}

pub fn construct_sigma(
    gamma_s: &ComparisonCurve,
    gamma_f: &ComparisonCurve,
) -> Result<ComparisonCurve> {
    construct_sigma_on(gamma_s, gamma_f, &LogGrid::default())
}

/// σ(r) = √(γ_s(r)·γ_f⁻¹(r)), which sits strictly between γ_s and γ_f⁻¹
/// whenever the small-gain condition `γ_f∘γ_s < id` holds.
pub fn construct_sigma_on(
    gamma_s: &ComparisonCurve,
    gamma_f: &ComparisonCurve,
    grid: &LogGrid,
) -> Result<ComparisonCurve> {
    let gain = check_small_gain(gamma_f, gamma_s, grid)?;
    if !gain.pass {
        return Err(Error::Precondition(format!(
            "small-gain condition fails at r = {} (margin {:e})",
            gain.worst_r, gain.worst_margin
        )));
    }
    let lower = gamma_s.clone();
    let upper = gamma_f.inverse();
    let (lo_f, up_f) = (lower.clone(), upper.clone());
    let sigma = ComparisonCurve::new("sigma", CurveClass::KInf, move |r| {
        (lo_f.eval(r) * up_f.eval(r)).sqrt()
    });
    for r in grid.points() {
        let (a, s, b) = (lower.try_eval(r)?, sigma.try_eval(r)?, upper.try_eval(r)?);
        if !(s - a > 1e-12 * s && b - s > 1e-12 * s) {
            return Err(Error::Precondition(format!(
                "sigma not strictly between its bounds at r = {r}"
            )));
        }
    }
    Ok(sigma)
}
