//! Saturated two-time-scale example:
//! `ẋ = −c₀·sat(z)`, `ż = −sat(z − x)`.

use rayon::prelude::*;

use crate::certificates::{
    constant_rate_conditions, find_c0_max, C0Bound, CertificateCurves, ISSCertificate, TheoremConditions,
};
use crate::comparison::{ComparisonCurve, CurveClass, LogGrid};
use crate::error::Result;
use crate::system::{Dims, PerturbedSystem};

pub fn sat(r: f64) -> f64 {
    r.clamp(-1.0, 1.0)
}

/// `ψ(r) = r·sat(r)` on `r ≥ 0`.
fn psi(r: f64) -> f64 {
    r * sat(r)
}

pub fn system(c0: f64) -> PerturbedSystem {
    PerturbedSystem::new("example1_saturated", Dims::new(1, 1, 0, 0))
        .slow(|_, z, _, out| out[0] = -sat(z[0]))
        .fast(|z, x, _, out| out[0] = -sat(z[0] - x[0]))
        .slow_rate(move |_, _, _| c0)
        .steady_state(|x, out| out[0] = x[0])
}

/// `V_s = x²/2`, `V_f = (z − x)²/2` with gain `γ_s(r) = r/ϱ²` and decay
/// `α_s = (1 − ϱ)·ψ∘ᾱ_s⁻¹`.
pub fn certificate(varrho: f64) -> ISSCertificate {
    let half_square = || ComparisonCurve::power(0.5, 2.0);
    let curves = CertificateCurves {
        slow_lower_bound: half_square(),
        slow_upper_bound: half_square(),
        slow_gain: ComparisonCurve::linear(1.0 / (varrho * varrho)),
        slow_input_gain: None,
        slow_decay: ComparisonCurve::new("(1-rho)*psi(sqrt(2r))", CurveClass::PD, move |r| {
            (1.0 - varrho) * psi((2.0 * r).sqrt())
        }),
        fast_lower_bound: half_square(),
        fast_upper_bound: half_square(),
        fast_input_gain: None,
        fast_decay: ComparisonCurve::new("psi(sqrt(2r))", CurveClass::PD, |r| psi((2.0 * r).sqrt())),
        cross_fast: ComparisonCurve::power(2f64.sqrt(), 0.5),
        cross_slow: ComparisonCurve::zero(),
    };
    ISSCertificate::quadratic_shift(0.5, 0.5, vec![0.0], curves)
}

/// `ğ_s = sat`, bounding `|g_s| = |sat(z)|` by `sat(|x| + |z − x|)`.
pub fn g_breve() -> ComparisonCurve {
    ComparisonCurve::saturation()
}

/// Theorem conditions for `ρ_s ≡ c₀`, `ρ_f ≡ 1`.
pub fn conditions(varrho: f64, c0: f64, eta: f64) -> Result<TheoremConditions> {
    constant_rate_conditions(&certificate(varrho), &g_breve(), c0, eta)
}

/// `ϱ ∈ {0.01, 0.02, …, 0.99}`.
pub fn default_varrho_grid() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub per_varrho: Vec<(f64, C0Bound)>,
    pub best_varrho: f64,
    pub c0_max: f64,
}

/// Largest admissible `c₀` over the given `ϱ` values.
pub fn c0_threshold_sweep(varrhos: &[f64], grid: &LogGrid) -> Result<ThresholdSweep> {
    let per_varrho = varrhos
        .par_iter()
        .map(|&v| find_c0_max(&certificate(v), &g_breve(), grid).map(|b| (v, b)))
        .collect::<Result<Vec<_>>>()?;
    let (best_varrho, c0_max) = per_varrho
        .iter()
        .fold((f64::NAN, 0.0), |acc, (v, b)| if b.c0_max > acc.1 { (*v, b.c0_max) } else { acc });
    Ok(ThresholdSweep {
        per_varrho,
        best_varrho,
        c0_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::build_gbar_s;

    #[test]
    fn rhs_examples() {
        let sys = system(0.4);
        assert_eq!(sys.rhs(0.0, &[0.0], &[0.0]).unwrap(), (vec![0.0], vec![0.0]));
        let (dx, dz) = sys.rhs(0.0, &[0.0], &[2.0]).unwrap();
        assert!((dx[0] + 0.4).abs() < 1e-15);
        assert_eq!(dz[0], -1.0);
    }

    #[test]
    fn gbar_hand_value() {
        let g = build_gbar_s(&certificate(0.9), &g_breve()).unwrap();
        let want = ((0.04f64 / 0.81).sqrt() + 0.2).min(1.0);
        assert!((g.eval(0.02) - want).abs() < 1e-9);
        assert!((g.eval(0.02) - 0.4222).abs() < 1e-4);
        assert_eq!(g.eval(0.0), 0.0);
    }

    #[test]
    fn per_varrho_bound_matches_closed_form() {
        let grid = LogGrid::default();
        for v in [0.1, 0.5, 0.9] {
            let b = find_c0_max(&certificate(v), &g_breve(), &grid).unwrap();
            assert!((b.infimum - v / (1.0 + v)).abs() < 1e-6, "varrho {v}: {}", b.infimum);
        }
    }
}
