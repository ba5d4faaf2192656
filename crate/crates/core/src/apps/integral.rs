//! Integral control of `ż = −(z − x)³` with output `y = z` and the
//! integrator `ẋ = −ρ_s⁰(|y|)·y`.

use crate::certificates::{CertificateCurves, ISSCertificate, TheoremConditions};
use crate::comparison::ComparisonCurve;
use crate::system::{Dims, PerturbedSystem};

/// Nonlinear gain `ρ_s⁰(r) = coeff·r²` or the classical constant gain.
pub fn system(use_nonlinear_gain: bool, rho_coeff: f64) -> PerturbedSystem {
    let sys = PerturbedSystem::new("integral_control", Dims::new(1, 1, 0, 0))
        .slow(|_, z, _, out| out[0] = -z[0])
        .fast(|z, x, _, out| out[0] = -(z[0] - x[0]).powi(3))
        .steady_state(|x, out| out[0] = x[0]);
    if use_nonlinear_gain {
        sys.slow_rate(move |_, z, _| rho_coeff * z[0] * z[0])
    } else {
        sys.slow_rate(move |_, _, _| rho_coeff)
    }
}

/// `V_s = x²`, `V_f = (z − x)²`.
pub fn certificate() -> ISSCertificate {
    let square = || ComparisonCurve::power(1.0, 2.0);
    let curves = CertificateCurves {
        slow_lower_bound: square(),
        slow_upper_bound: square(),
        slow_gain: ComparisonCurve::linear(4.0),
        slow_input_gain: None,
        slow_decay: ComparisonCurve::linear(1.0),
        fast_lower_bound: square(),
        fast_upper_bound: square(),
        fast_input_gain: None,
        fast_decay: ComparisonCurve::power(2.0, 2.0),
        cross_fast: ComparisonCurve::power(2.0, 0.5),
        cross_slow: ComparisonCurve::zero(),
    };
    ISSCertificate::quadratic_shift(1.0, 1.0, vec![0.0], curves)
}

/// `γ_f(r) = r/4.41`, `ρ̄_s(r) = 0.99r^{3/2}`, `ρ̲_f ≡ 1` and
/// `ρ̲_s(r) = (coeff/4)·r` (under the slow guard `|z| ≥ |x|/2`).
pub fn conditions(rho_coeff: f64) -> TheoremConditions {
    TheoremConditions::new(
        ComparisonCurve::linear(rho_coeff / 4.0),
        ComparisonCurve::linear(1.0 / 4.41),
        ComparisonCurve::power(0.99, 1.5),
        ComparisonCurve::constant(1.0),
    )
}

/// `ğ_s = id`, since `|z| ≤ |x| + |z − x|`.
pub fn g_breve() -> ComparisonCurve {
    ComparisonCurve::identity()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_equilibrium() {
        for nonlinear in [true, false] {
            let (dx, dz) = system(nonlinear, 1.0).rhs(0.0, &[0.0], &[0.0]).unwrap();
            assert_eq!((dx[0], dz[0]), (0.0, 0.0));
        }
    }

    #[test]
    fn nonlinear_gain_matches_cubic_integrator() {
        let (dx, _) = system(true, 0.5).rhs(0.0, &[0.3], &[-2.0]).unwrap();
        assert!((dx[0] - 4.0).abs() < 1e-15);
    }
}
