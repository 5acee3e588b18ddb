//! Fast closed-form checks run by the `selftest` command.

use std::f64::consts::PI;

use serde_json::json;

use crate::connection::{connect_via_flow, pvi_parameters};
use crate::flow::{integrate_path, seed_plus, PathInU, RegularPoint};
use crate::io::run::Outcome;
use crate::linalg::{herm_eigen, matrix_exp, scaled_power, ComplexMatrix, HermitianMatrix, C64};
use crate::special::{branched_log, log_gamma};
use crate::stokes::{stokes_numeric, LinearSystem, StokesOptions};

type Check = (&'static str, fn() -> Option<f64>);

fn eigen_diagonal() -> Option<f64> {
    let e = herm_eigen(&HermitianMatrix::from_real_diagonal(&[3.0, 1.0, 2.0])).ok()?;
    Some(e.values.iter().zip([1.0, 2.0, 3.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn exp_zero() -> Option<f64> {
    let z = ComplexMatrix::zeros(3, 3);
    Some((matrix_exp(&z).ok()? - ComplexMatrix::identity(3, 3)).norm())
}

fn power_at_one() -> Option<f64> {
    let a = HermitianMatrix::from_real_diagonal(&[0.5, -1.0]);
    let r = scaled_power(&a, 1.0, C64::new(0.3, -2.0)).ok()?;
    Some((r - ComplexMatrix::identity(2, 2)).norm())
}

fn gamma_values() -> Option<f64> {
    let g1 = log_gamma(C64::new(1.0, 0.0)).ok()?.norm();
    let gh = (log_gamma(C64::new(0.5, 0.0)).ok()? - C64::new(0.5 * PI.ln(), 0.0)).norm();
    Some(g1.max(gh))
}

fn log_minus_one() -> Option<f64> {
    Some((branched_log(C64::new(-1.0, 0.0)).ok()? - C64::new(0.0, -PI)).norm())
}

fn stokes_diagonal() -> Option<f64> {
    let d = [0.4, -0.7];
    let sys = LinearSystem::new(vec![0.0, 1.0], HermitianMatrix::from_real_diagonal(&d)).ok()?;
    let p = stokes_numeric(&sys, &StokesOptions::default()).ok()?;
    let want = ComplexMatrix::from_fn(2, 2, |i, j| if i == j { C64::new((d[i] / 2.0).exp(), 0.0) } else { C64::new(0.0, 0.0) });
    Some((&p.s_plus - &want).norm().max((&p.s_minus - &want).norm()))
}

fn seed_diagonal() -> Option<f64> {
    let a = HermitianMatrix::from_real_diagonal(&[0.3, -0.5, 0.9]);
    let s = seed_plus(&a, 100.0).ok()?;
    Some((s.phi.matrix() - a.matrix()).norm())
}

fn flow_zero() -> Option<f64> {
    let path = PathInU::new(vec![
        RegularPoint::new(vec![0.0, 1.0, 2.0]).ok()?,
        RegularPoint::new(vec![0.0, 1.5, 3.0]).ok()?,
    ])
    .ok()?;
    let tr = integrate_path(&HermitianMatrix::zeros(3), &path, 1e-10).ok()?;
    Some(tr.final_phi().norm())
}

fn connect_diagonal() -> Option<f64> {
    let a = HermitianMatrix::from_real_diagonal(&[0.2, -0.1, 0.6]);
    let c = connect_via_flow(&a, 100.0, 1e-10).ok()?;
    Some((c.a_minus.matrix() - a.matrix()).norm())
}

fn pvi_zero() -> Option<f64> {
    let u = RegularPoint::new(vec![0.0, 1.0, 2.0]).ok()?;
    let p = pvi_parameters(&HermitianMatrix::zeros(3), &u, 1e-10).ok()?;
    Some((p.x - 0.5).abs().max((p.alpha - C64::new(0.5, 0.0)).norm()))
}

const CHECKS: &[Check] = &[
    ("herm_eigen of a diagonal matrix", eigen_diagonal),
    ("matrix_exp(0) = Id", exp_zero),
    ("scaled_power at x = 1", power_at_one),
    ("log_gamma(1) and log_gamma(1/2)", gamma_values),
    ("branched_log(-1) = -i pi", log_minus_one),
    ("stokes_numeric of a diagonal A", stokes_diagonal),
    ("seed_plus of a diagonal A", seed_diagonal),
    ("flow from zero stays at zero", flow_zero),
    ("connection fixes diagonal A", connect_diagonal),
    ("Painleve VI parameters of zero", pvi_zero),
];

const SELFTEST_TOL: f64 = 1e-9;

pub fn selftest() -> Outcome {
    let mut failed = Vec::new();
    let checks: Vec<_> = CHECKS
        .iter()
        .map(|(name, f)| {
            let err = f();
            let passed = matches!(err, Some(e) if e <= SELFTEST_TOL);
            if !passed {
                failed.push(*name);
            }
            json!({"name": name, "error": err, "passed": passed})
        })
        .collect();
    Outcome {
        results: json!({"checks": checks, "tol": SELFTEST_TOL}),
        failure: (!failed.is_empty()).then(|| format!("failed: {}", failed.join(", "))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let out = selftest();
        assert_eq!(out.failure, None, "{}", out.results);
        assert_eq!(out.results["checks"].as_array().unwrap().len(), CHECKS.len());
    }
}
