//! Explicit Runge–Kutta integrators: classical RK4 with a fixed step and the
//! Dormand–Prince 5(4) pair with a PI step-size controller.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Returned by an observer after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Integrates `y' = f(t, y)` from `t0` to `t_final` with step `dt`.
/// The last step is shortened to land exactly on `t_final`.
pub fn rk4<F, O>(mut f: F, y0: &[f64], t0: f64, t_final: f64, dt: f64, mut observe: O) -> Result<StepStats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> Flow,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let steps = ((t_final - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut stats = StepStats::default();
    let mut t = t0;
    for k in 0..steps {
        let t_next = if k + 1 == steps {
            t_final
        } else {
            t0 + (k + 1) as f64 * dt
        };
        let h = t_next - t;
        f(t, &y, &mut k1)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t = t_next;
        stats.accepted += 1;
        if observe(t, &y) == Flow::Stop {
            break;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: Option<f64>,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], opts: &AdaptiveOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Adaptive Dormand–Prince integration with PI step control.
pub fn dopri5<F, O>(
    mut f: F,
    y0: &[f64],
    t0: f64,
    t_final: f64,
    opts: AdaptiveOptions,
    mut observe: O,
) -> Result<StepStats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> Flow,
{
    let n = y0.len();
    let span = t_final - t0;
    let h_max = opts.max_step.unwrap_or(span).min(span);
    let h_floor = 1e-14 * t_final.abs().max(span);
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let (mut tmp, mut y_new, mut err) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stats = StepStats::default();

    f(t0, &y, &mut k1)?;
    let mut h = initial_step(&mut f, t0, &y, &k1, &opts, h_max)?;
    let mut t = t0;
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    while t < t_final {
        if h < h_floor {
            return Err(Error::StepUnderflow {
                t,
                step: h,
                floor: h_floor,
            });
        }
        let last = t + h >= t_final;
        if last {
            h = t_final - t;
        }
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &tmp, &mut k4)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &tmp, &mut k5)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &tmp, &mut k6)?;
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let t_new = if last { t_final } else { t + h };
        f(t_new, &y_new, &mut k7)?;
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err_norm = error_norm(&err, &y, &y_new, &opts);
        if !err_norm.is_finite() {
            stats.rejected += 1;
            last_rejected = true;
            h *= FAC_MIN;
            continue;
        }

        let fac11 = err_norm.powf(0.2 - 0.75 * BETA);
        if err_norm <= 1.0 {
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err_norm.max(1e-4);
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            stats.accepted += 1;
            last_rejected = false;
            h = h_new;
            if observe(t, &y) == Flow::Stop {
                break;
            }
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            stats.rejected += 1;
            last_rejected = true;
        }
    }
    Ok(stats)
}

/// Starting step heuristic (Hairer, Nørsett & Wanner, II.4).
fn initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], opts: &AdaptiveOptions, h_max: f64) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let scale: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.abs()).collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
    };
    let (d0, d1) = (norm(y0), norm(f0));
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(h_max);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
    let mut f1 = vec![0.0; n];
    f(t0 + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(h_max))
}
