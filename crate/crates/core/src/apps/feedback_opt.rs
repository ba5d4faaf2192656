//! Feedback optimization of `ż° = −(z° − x°)³` towards the minimizer of
//! `Φ(z°) = (z°)² − 2z°`, written in the shifted coordinates `x = x° − 1`,
//! `z = z°`:
//!
//! ```text
//! ẋ = ρ_s⁰(|−2z + 2|)·(−2z + 2)
//! ż = −(z − x − 1)³
//! ```

use nalgebra::DMatrix;

use crate::certificates::{CertificateCurves, ISSCertificate, TheoremConditions};
use crate::comparison::ComparisonCurve;
use crate::error::Result;
use crate::system::{Dims, PerturbedSystem};

/// Coefficient of the default perturbation function `ρ_s⁰(r) = 0.004r²`.
pub const RHO_COEFF: f64 = 0.004;
pub const EQUILIBRIUM: (f64, f64) = (0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainLaw {
    /// `ρ_s⁰(r) = k·r²`
    Quadratic(f64),
    /// `ρ_s⁰ ≡ c`
    Constant(f64),
}

pub fn system(law: GainLaw) -> PerturbedSystem {
    let sys = PerturbedSystem::new("example2_feedback_opt", Dims::new(1, 1, 0, 0))
        .slow(|_, z, _, out| out[0] = -2.0 * z[0] + 2.0)
        .fast(|z, x, _, out| out[0] = -(z[0] - x[0] - 1.0).powi(3))
        .steady_state(|x, out| out[0] = x[0] + 1.0);
    match law {
        GainLaw::Quadratic(k) => sys.slow_rate(move |_, z, _| k * (-2.0 * z[0] + 2.0).powi(2)),
        GainLaw::Constant(c) => sys.slow_rate(move |_, _, _| c),
    }
}

/// `V_s = x²`, `V_f = (z − x − 1)²`.
pub fn certificate() -> ISSCertificate {
    let square = || ComparisonCurve::power(1.0, 2.0);
    let curves = CertificateCurves {
        slow_lower_bound: square(),
        slow_upper_bound: square(),
        slow_gain: ComparisonCurve::linear(4.0),
        slow_input_gain: None,
        slow_decay: ComparisonCurve::linear(2.0),
        fast_lower_bound: square(),
        fast_upper_bound: square(),
        fast_input_gain: None,
        fast_decay: ComparisonCurve::power(2.0, 2.0),
        cross_fast: ComparisonCurve::power(2.0, 0.5),
        cross_slow: ComparisonCurve::zero(),
    };
    ISSCertificate::quadratic_shift(1.0, 1.0, vec![1.0], curves)
}

/// `γ_f(r) = r/4.41`, `ρ̄_s(r) = rho_upper_coeff·r^{3/2}`, `ρ̲_f ≡ 1` and
/// `ρ̲_s(r) = k·r`, which holds because `|g_s| ≥ |x|` under the slow guard.
pub fn conditions(k: f64, rho_upper_coeff: f64) -> TheoremConditions {
    TheoremConditions::new(
        ComparisonCurve::linear(k),
        ComparisonCurve::linear(1.0 / 4.41),
        ComparisonCurve::power(rho_upper_coeff, 1.5),
        ComparisonCurve::constant(1.0),
    )
}

/// `ğ_s(s) = 2s`, since `|−2z + 2| ≤ 2(|x| + |z − x − 1|)`.
pub fn g_breve() -> ComparisonCurve {
    ComparisonCurve::linear(2.0)
}

/// `ĝ_s(r) = 6.2√r`.
pub fn g_hat() -> ComparisonCurve {
    ComparisonCurve::power(6.2, 0.5)
}

/// Central-difference Jacobian of the full right-hand side.
pub fn jacobian(sys: &PerturbedSystem, x: &[f64], z: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len() + z.len();
    let mut y: Vec<f64> = x.iter().chain(z).copied().collect();
    let mut jac = DMatrix::zeros(n, n);
    let eval = |y: &[f64]| -> Result<Vec<f64>> {
        let (dx, dz) = sys.rhs(0.0, &y[..x.len()], &y[x.len()..])?;
        Ok(dx.into_iter().chain(dz).collect())
    };
    for j in 0..n {
        let h = 1e-6 * y[j].abs().max(1.0);
        let orig = y[j];
        y[j] = orig + h;
        let up = eval(&y)?;
        y[j] = orig - h;
        let down = eval(&y)?;
        y[j] = orig;
        for i in 0..n {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Spectral norm of `exp(J·t)`.
pub fn expm_norm(jac: &DMatrix<f64>, t: f64) -> f64 {
    (jac * t).exp().singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_at_sample_point() {
        let (dx, dz) = system(GainLaw::Quadratic(RHO_COEFF)).rhs(0.0, &[0.0], &[2.0]).unwrap();
        assert!((dx[0] + 0.032).abs() < 1e-15);
        assert_eq!(dz[0], -1.0);
    }

    #[test]
    fn constant_gain_linearization_is_nilpotent() {
        let c = 0.004;
        let jac = jacobian(&system(GainLaw::Constant(c)), &[0.0], &[1.0]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, -2.0 * c, 0.0, 0.0]);
        assert!((&jac - want).norm() < 1e-9);
        assert!((&jac * &jac).norm() < 1e-12);
        // exp(Jt) = I + Jt, whose norm grows linearly.
        assert!(expm_norm(&jac, 1e4) > expm_norm(&jac, 1e3));
        assert!(expm_norm(&jac, 2000.0) >= 10.0);
    }
}
