//! Dormand–Prince 5(4) integrator for complex-valued systems on a real interval.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("tolerance not met after {steps} steps (stopped at t = {t})")]
    ToleranceNotMet { t: f64, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Largest normalized error estimate among accepted steps (≤ 1).
    pub max_error: f64,
    pub min_step: f64,
}

impl OdeStats {
    pub fn merge(&mut self, other: &OdeStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rhs_evals += other.rhs_evals;
        self.max_error = self.max_error.max(other.max_error);
        self.min_step = if self.min_step == 0.0 {
            other.min_step
        } else if other.min_step == 0.0 {
            self.min_step
        } else {
            self.min_step.min(other.min_step)
        };
    }
}

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

// Hairer's PI step-size controller constants
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
///
/// `after_step` runs on every accepted step with the new time and state and
/// may modify the state (e.g. to project back onto a constraint manifold).
pub fn integrate<F, H>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &[Complex64],
    opts: &OdeOptions,
    mut after_step: H,
) -> Result<(Vec<Complex64>, OdeStats), OdeError>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    H: FnMut(f64, &mut [Complex64]),
{
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut stats = OdeStats::default();
    if t1 <= t0 || dim == 0 {
        return Ok((y, stats));
    }
    let span = t1 - t0;
    let zero = Complex64::new(0.0, 0.0);
    let mut k1 = vec![zero; dim];
    let mut k2 = vec![zero; dim];
    let mut k3 = vec![zero; dim];
    let mut k4 = vec![zero; dim];
    let mut k5 = vec![zero; dim];
    let mut k6 = vec![zero; dim];
    let mut k7 = vec![zero; dim];
    let mut ytmp = vec![zero; dim];
    let mut ynew = vec![zero; dim];

    f(t0, &y, &mut k1);
    stats.rhs_evals += 1;
    let mut h = initial_step(&mut f, t0, &y, &k1, span, opts, &mut stats);
    let mut t = t0;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    while t < t1 {
        if steps >= opts.max_steps {
            return Err(OdeError::ToleranceNotMet { t, steps });
        }
        steps += 1;
        let last = t + h >= t1 - 1e-14 * span;
        if last {
            h = t1 - t;
        }
        if h <= 1e-14 * span.max(t.abs()) {
            return Err(OdeError::StepSizeUnderflow { t });
        }

        for i in 0..dim {
            ytmp[i] = y[i] + k1[i] * (h * A21);
        }
        f(t + C2 * h, &ytmp, &mut k2);
        for i in 0..dim {
            ytmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        f(t + C3 * h, &ytmp, &mut k3);
        for i in 0..dim {
            ytmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        f(t + C4 * h, &ytmp, &mut k4);
        for i in 0..dim {
            ytmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        f(t + C5 * h, &ytmp, &mut k5);
        for i in 0..dim {
            ytmp[i] = y[i]
                + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        f(t + h, &ytmp, &mut k6);
        for i in 0..dim {
            ynew[i] = y[i]
                + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        f(t + h, &ynew, &mut k7);
        stats.rhs_evals += 6;

        let mut err = 0.0;
        for i in 0..dim {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                * h;
            let sk = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
            err += (e.norm() / sk).powi(2);
        }
        let mut err = (err / dim as f64).sqrt();
        if !err.is_finite() {
            err = 1e10;
        }

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let fac = fac11 / facold.powf(BETA);
            let fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut hnew = h / fac;
            facold = err.max(1e-4);
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(err);
            stats.min_step = if stats.min_step == 0.0 { h } else { stats.min_step.min(h) };
            t = if last { t1 } else { t + h };
            std::mem::swap(&mut y, &mut ynew);
            after_step(t, &mut y);
            // FSAL: k7 is f(t+h, ynew) unless the hook changed the state
            f(t, &y, &mut k1);
            stats.rhs_evals += 1;
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            h = hnew;
        } else {
            let hnew = h / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            stats.rejected += 1;
            last_rejected = true;
            h = hnew;
        }
    }
    Ok((y, stats))
}

fn initial_step<F>(
    f: &mut F,
    t0: f64,
    y0: &[Complex64],
    f0: &[Complex64],
    span: f64,
    opts: &OdeOptions,
    stats: &mut OdeStats,
) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let dim = y0.len();
    let sk: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.norm()).collect();
    let rms = |v: &[Complex64]| -> f64 {
        (v.iter()
            .zip(&sk)
            .map(|(x, s)| (x.norm() / s).powi(2))
            .sum::<f64>()
            / dim as f64)
            .sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<Complex64> = y0.iter().zip(f0).map(|(y, k)| y + k * h0).collect();
    let mut f1 = vec![Complex64::new(0.0, 0.0); dim];
    f(t0 + h0, &y1, &mut f1);
    stats.rhs_evals += 1;
    let diff: Vec<Complex64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exponential_growth() {
        let opts = OdeOptions::with_tol(1e-12);
        let (y, stats) = integrate(
            |_t, y, dy| dy[0] = y[0],
            0.0,
            1.0,
            &[c(1.0, 0.0)],
            &opts,
            |_, _| {},
        )
        .unwrap();
        assert!((y[0] - c(std::f64::consts::E, 0.0)).norm() < 1e-10);
        assert!(stats.accepted > 0);
        assert!(stats.max_error <= 1.0);
    }

    #[test]
    fn oscillator_with_complex_rate() {
        let w = c(0.0, 40.0);
        let opts = OdeOptions::with_tol(1e-12);
        let (y, _) = integrate(
            |_t, y, dy| dy[0] = w * y[0],
            0.0,
            2.0,
            &[c(1.0, 0.0)],
            &opts,
            |_, _| {},
        )
        .unwrap();
        assert!((y[0] - (w * 2.0).exp()).norm() < 1e-9);
    }

    #[test]
    fn time_dependent_system() {
        // y' = 2t y, y(0) = 1 → e^{t²}
        let opts = OdeOptions::with_tol(1e-11);
        let (y, _) = integrate(
            |t, y, dy| dy[0] = y[0] * (2.0 * t),
            0.0,
            1.5,
            &[c(1.0, 0.0)],
            &opts,
            |_, _| {},
        )
        .unwrap();
        assert!((y[0].re - 2.25f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn hook_sees_every_accepted_step() {
        let mut seen = Vec::new();
        let opts = OdeOptions::with_tol(1e-8);
        let (_, stats) = integrate(
            |_t, y, dy| dy[0] = -y[0],
            0.0,
            3.0,
            &[c(1.0, 0.0)],
            &opts,
            |t, _| seen.push(t),
        )
        .unwrap();
        assert_eq!(seen.len(), stats.accepted);
        assert_eq!(*seen.last().unwrap(), 3.0);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn blow_up_reports_underflow_or_budget() {
        // y' = y², y(0) = 1 explodes at t = 1
        let opts = OdeOptions {
            max_steps: 100_000,
            ..OdeOptions::with_tol(1e-10)
        };
        let r = integrate(
            |_t, y, dy| dy[0] = y[0] * y[0],
            0.0,
            2.0,
            &[c(1.0, 0.0)],
            &opts,
            |_, _| {},
        );
        match r {
            Err(OdeError::StepSizeUnderflow { t }) | Err(OdeError::ToleranceNotMet { t, .. }) => {
                assert!((t - 1.0).abs() < 1e-3, "stopped at {t}")
            }
            Ok(_) => panic!("integrated through a pole"),
        }
    }

    #[test]
    fn empty_interval_is_identity() {
        let (y, stats) = integrate(
            |_t, y, dy| dy[0] = y[0],
            1.0,
            1.0,
            &[c(2.0, 0.0)],
            &OdeOptions::default(),
            |_, _| {},
        )
        .unwrap();
        assert_eq!(y[0], c(2.0, 0.0));
        assert_eq!(stats.accepted, 0);
    }
}
