//! Smooth objectives and the mean-value remainder bound
//! `|h(ξ₁) − h(ξ₂) − ∇h(ξ₁)(ξ₁ − ξ₂)| ≤ ϑ|ξ₁ − ξ₂|²`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Value = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Gradient = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Objective `h` with its gradient, a strong-convexity constant ω (0 if
/// not convex) and a gradient-Lipschitz constant ϑ.
#[derive(Clone)]
pub struct Objective {
    pub label: String,
    value: Value,
    gradient: Gradient,
    pub omega: f64,
    pub theta: f64,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("label", &self.label)
            .field("omega", &self.omega)
            .field("theta", &self.theta)
            .finish()
    }
}

impl Objective {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        omega: f64,
        theta: f64,
    ) -> Self {
        Objective {
            label: label.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            omega,
            theta,
        }
    }

    /// `scale·|ξ − center|²`
    pub fn quadratic(center: Vec<f64>, scale: f64) -> Self {
        let c2 = center.clone();
        Objective::new(
            "quadratic",
            move |p| scale * p.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            move |p| p.iter().zip(&c2).map(|(a, b)| 2.0 * scale * (a - b)).collect(),
            2.0 * scale,
            2.0 * scale,
        )
    }

    /// `|ξ|² + sin(ξ₁)`, Hessian norm at most 3.
    pub fn quadratic_plus_sine() -> Self {
        Objective::new(
            "quadratic_plus_sine",
            |p| p.iter().map(|a| a * a).sum::<f64>() + p[0].sin(),
            |p| {
                let mut g: Vec<f64> = p.iter().map(|a| 2.0 * a).collect();
                g[0] += p[0].cos();
                g
            },
            1.0,
            3.0,
        )
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        Objective::new("constant", move |_| c, move |_| vec![0.0; dim], 0.0, 0.0)
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        (self.value)(p)
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        (self.gradient)(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub pass: bool,
    /// max of `remainder / (ϑ|ξ₁ − ξ₂|²)`; at most 1 when the bound holds.
    pub worst_ratio: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub checked: usize,
}

pub fn lemma1_check(h: &Objective, theta: f64, pairs: &[(Vec<f64>, Vec<f64>)]) -> LemmaReport {
    let mut report = LemmaReport {
        pass: true,
        worst_ratio: 0.0,
        worst_pair: None,
        checked: pairs.len(),
    };
    for (a, b) in pairs {
        let diff: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
        let dist2: f64 = diff.iter().map(|v| v * v).sum();
        let grad = h.gradient(a);
        let linear: f64 = grad.iter().zip(&diff).map(|(g, d)| g * d).sum();
        let remainder = (h.value(a) - h.value(b) - linear).abs();
        let bound = theta * dist2;
        if remainder > bound + 1e-12 * (1.0 + bound) {
            report.pass = false;
        }
        let ratio = if bound > 0.0 { remainder / bound } else { 0.0 };
        if ratio > report.worst_ratio || report.worst_pair.is_none() {
            report.worst_ratio = report.worst_ratio.max(ratio);
            report.worst_pair = Some((a.clone(), b.clone()));
        }
    }
    report
}

/// Uniform pairs in `[−half_width, half_width]^dim`, one ChaCha stream per
/// pair.
pub fn random_pairs(dim: usize, count: usize, half_width: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut point = || (0..dim).map(|_| rng.random_range(-half_width..=half_width)).collect::<Vec<_>>();
            (point(), point())
        })
        .collect()
}

/// Worst ratios of the strong-convexity and gradient-Lipschitz inequalities
/// on sample pairs: `(min (Δp)ᵀΔ∇h / |Δp|², max |Δ∇h| / |Δp|)`.
pub fn convexity_constants(h: &Objective, pairs: &[(Vec<f64>, Vec<f64>)]) -> (f64, f64) {
    let mut strong = f64::INFINITY;
    let mut lipschitz: f64 = 0.0;
    for (a, b) in pairs {
        let dp: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
        let dist2: f64 = dp.iter().map(|v| v * v).sum();
        if dist2 == 0.0 {
            continue;
        }
        let dg: Vec<f64> = h.gradient(a).iter().zip(h.gradient(b)).map(|(u, v)| u - v).collect();
        let inner: f64 = dp.iter().zip(&dg).map(|(u, v)| u * v).sum();
        strong = strong.min(inner / dist2);
        lipschitz = lipschitz.max(dg.iter().map(|v| v * v).sum::<f64>().sqrt() / dist2.sqrt());
    }
    (strong, lipschitz)
}
