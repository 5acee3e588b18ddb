//! Complex log-Gamma and the branched logarithm used for z^{-[A]/2πι}.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("logarithm of zero")]
    ZeroArgument,
    #[error("log-Gamma pole at {re} + {im}i")]
    PoleArgument { re: f64, im: f64 },
}

/// Logarithm with imaginary part in (−3π/2, π/2].
///
/// Real on the positive axis, `log(−1) = −ιπ`, cut along the nonnegative
/// imaginary axis where the value from the right half-plane is taken.
pub fn branched_log(z: Complex64) -> Result<Complex64, SpecialError> {
    if z.re == 0.0 && z.im == 0.0 {
        return Err(SpecialError::ZeroArgument);
    }
    let mut l = z.ln();
    if l.im > PI / 2.0 {
        l.im -= 2.0 * PI;
    }
    Ok(l)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const POLE_TOL: f64 = 1e-14;

/// Log-Gamma, analytic continuation of the real function from the positive axis.
pub fn log_gamma(z: Complex64) -> Result<Complex64, SpecialError> {
    if z.re <= 0.0 && z.im.abs() <= POLE_TOL && (z.re - z.re.round()).abs() <= POLE_TOL {
        return Err(SpecialError::PoleArgument { re: z.re, im: z.im });
    }
    if z.re < 0.5 {
        // Γ(z)Γ(1−z) = π / sin(πz)
        let one = Complex64::new(1.0, 0.0);
        let rest = log_gamma(one - z)?;
        return Ok(Complex64::new(PI.ln(), 0.0) - log_sin_pi(z) - rest);
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln())
}

/// `ln sin(πz)` without overflow for large |Im z|.
fn log_sin_pi(z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let w = PI * z;
    if z.im.abs() < 20.0 {
        return w.sin().ln();
    }
    // sin w = (e^{iw} − e^{−iw}) / 2i; factor out the dominant exponential
    if z.im > 0.0 {
        -i * w + (1.0 - (2.0 * i * w).exp()).ln() - (2.0 * i).ln()
    } else {
        i * w + (1.0 - (-2.0 * i * w).exp()).ln() - (2.0 * i).ln()
    }
}

/// Γ(z) itself, for tests and small arguments.
pub fn gamma(z: Complex64) -> Result<Complex64, SpecialError> {
    Ok(log_gamma(z)?.exp())
}
