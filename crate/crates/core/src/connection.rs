//! The connection A_∞ ↦ A_{−∞} between the plus and minus caterpillar zones:
//! transport by the flow, verification through Stokes data, inversion by
//! damped least squares, and the n = 3 Painlevé VI parameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::closed::{closed_subdiagonals, ClosedError, SubdiagonalData};
use crate::flow::{
    extract_minus, extract_plus, integrate_path_with, seed_minus, seed_plus, Conservation,
    FlowDiagnostics, FlowError, FlowOptions, PathInU, RegularPoint, FP_TOL, RHO_MIN,
};
use crate::linalg::{flip, herm_eigen, HermitianMatrix, LinalgError, C64};
use crate::stokes::{stokes_numeric, LinearSystem, StokesError, StokesOptions, StokesPair};

/// Seeded solutions are transported down to u⁺(2) before their Stokes data is computed.
pub const STOKES_BASE_RHO: f64 = 2.0;
pub const SEEDED_FLOW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConnectionError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Stokes(#[from] StokesError),
    #[error(transparent)]
    Closed(#[from] ClosedError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("solver did not converge after {iterations} iterations (best residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: HermitianMatrix,
    },
    #[error("Painlevé VI parameters need n = 3, got n = {0}")]
    WrongDimension(usize),
    #[error("no eigenvalue within {tol:.1e} of zero (closest {closest:.3e})")]
    NoZeroEigenvalue { closest: f64, tol: f64 },
}

/// Straight segment from u⁺(ρ) to u⁻(ρ).
pub fn connection_path(n: usize, rho: f64) -> Result<PathInU, ConnectionError> {
    if !(rho > RHO_MIN) {
        return Err(FlowError::RhoTooSmall { rho, min: RHO_MIN }.into());
    }
    Ok(PathInU::new(vec![
        RegularPoint::plus_family(n, rho)?,
        RegularPoint::minus_family(n, rho)?,
    ])?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeededOptions {
    pub flow_tol: f64,
    pub stokes: StokesOptions,
}

impl Default for SeededOptions {
    fn default() -> Self {
        SeededOptions {
            flow_tol: SEEDED_FLOW_TOL,
            stokes: StokesOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeededStokes {
    pub pair: StokesPair,
    /// Where the Stokes data was computed, and Φ there.
    pub point: RegularPoint,
    pub phi: HermitianMatrix,
    pub flow: FlowDiagnostics,
}

/// Waypoints u⁺(ρ), u⁺(ρ/2), ..., u⁺(2).
fn descent_path(n: usize, rho: f64) -> Result<PathInU, FlowError> {
    let mut pts = vec![RegularPoint::plus_family(n, rho)?];
    let mut x = rho;
    while x / 2.0 > 1.5 * STOKES_BASE_RHO {
        x /= 2.0;
        pts.push(RegularPoint::plus_family(n, x)?);
    }
    pts.push(RegularPoint::plus_family(n, STOKES_BASE_RHO)?);
    PathInU::new(pts)
}

/// Stokes pair of the isomonodromic solution whose plus-zone data is `a_inf`,
/// approximated by the seed at u⁺(ρ).
pub fn seeded_stokes(
    a_inf: &HermitianMatrix,
    rho: f64,
    opts: &SeededOptions,
) -> Result<SeededStokes, ConnectionError> {
    let seed = seed_plus(a_inf, rho)?;
    let n = a_inf.dim();
    if n == 1 {
        let sys = LinearSystem::at_point(&seed.point, seed.phi.clone())?;
        return Ok(SeededStokes {
            pair: stokes_numeric(&sys, &opts.stokes)?,
            point: seed.point,
            phi: seed.phi,
            flow: FlowDiagnostics::default(),
        });
    }
    let path = descent_path(n, rho)?;
    let tr = integrate_path_with(
        &seed.phi,
        &path,
        &FlowOptions {
            tol: opts.flow_tol,
            record_samples: false,
        },
    )?;
    let phi = tr.final_phi().clone();
    let point = path.end().clone();
    let sys = LinearSystem::at_point(&point, phi.clone())?;
    Ok(SeededStokes {
        pair: stokes_numeric(&sys, &opts.stokes)?,
        point,
        phi,
        flow: tr.diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConnection {
    pub a_minus: HermitianMatrix,
    /// Φ at u⁻(ρ) after transport.
    pub phi_end: HermitianMatrix,
    pub conservation: Conservation,
    pub flow: FlowDiagnostics,
    pub rho: f64,
}

/// seed_plus at u⁺(ρ), flow to u⁻(ρ), extract_minus there.
pub fn connect_via_flow(
    a_inf: &HermitianMatrix,
    rho: f64,
    tol: f64,
) -> Result<FlowConnection, ConnectionError> {
    let seed = seed_plus(a_inf, rho)?;
    let path = connection_path(a_inf.dim(), rho)?;
    transport(&seed.phi, &path, rho, tol, |phi, u| extract_minus(phi, u, FP_TOL))
}

/// The inverse transport: seed_minus at u⁻(ρ), flow to u⁺(ρ), extract_plus there.
pub fn connect_back_via_flow(
    a_minus: &HermitianMatrix,
    rho: f64,
    tol: f64,
) -> Result<FlowConnection, ConnectionError> {
    let seed = seed_minus(a_minus, rho)?;
    let path = connection_path(a_minus.dim(), rho)?.reversed();
    transport(&seed.phi, &path, rho, tol, |phi, u| extract_plus(phi, u, FP_TOL))
}

fn transport(
    phi0: &HermitianMatrix,
    path: &PathInU,
    rho: f64,
    tol: f64,
    extract: impl Fn(&HermitianMatrix, &RegularPoint) -> Result<HermitianMatrix, FlowError>,
) -> Result<FlowConnection, ConnectionError> {
    let tr = integrate_path_with(
        phi0,
        path,
        &FlowOptions {
            tol,
            record_samples: true,
        },
    )?;
    let phi_end = tr.final_phi().clone();
    let a = extract(&phi_end, path.end())?;
    let conservation = tr.conservation()?;
    Ok(FlowConnection {
        a_minus: a,
        phi_end,
        conservation,
        flow: tr.diagnostics,
        rho,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionReport {
    pub a_inf: HermitianMatrix,
    pub a_minus_inf: HermitianMatrix,
    pub stokes_from_plus: StokesPair,
    pub stokes_from_minus: StokesPair,
    /// ‖S_+(A_∞) − P·S_−(P·A_{−∞}·P)·P‖_F.
    pub residual: f64,
    pub s_plus_norm: f64,
    /// Largest relative error of the closed-form sub-diagonals against the
    /// unit-diagonal numeric pair, when the GT pattern of A_∞ is generic.
    pub closed_form_error: Option<f64>,
    pub rho: f64,
    pub tol: f64,
    pub passed: bool,
}

impl ConnectionReport {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.s_plus_norm
    }
}

pub fn verify_connection(
    a_inf: &HermitianMatrix,
    a_minus_inf: &HermitianMatrix,
    rho: f64,
    tol: f64,
    opts: &SeededOptions,
) -> Result<ConnectionReport, ConnectionError> {
    if a_inf.dim() != a_minus_inf.dim() {
        return Err(ConnectionError::DimensionMismatch(a_inf.dim(), a_minus_inf.dim()));
    }
    let left = seeded_stokes(a_inf, rho, opts)?.pair;
    let right = seeded_stokes(&a_minus_inf.flipped(), rho, opts)?.pair;
    let residual = (&left.s_plus - flip(&right.s_minus)).norm();
    let s_plus_norm = left.s_plus.norm();
    let closed_form_error = closed_form_error(a_inf, &left)?;
    Ok(ConnectionReport {
        a_inf: a_inf.clone(),
        a_minus_inf: a_minus_inf.clone(),
        stokes_from_plus: left,
        stokes_from_minus: right,
        residual,
        s_plus_norm,
        closed_form_error,
        rho,
        tol,
        passed: residual <= tol * s_plus_norm,
    })
}

/// Max relative error of [`closed_subdiagonals`] against the unit-diagonal pair,
/// or `None` when the pattern is degenerate.
pub fn closed_form_error(a_inf: &HermitianMatrix, pair: &StokesPair) -> Result<Option<f64>, ConnectionError> {
    let closed = match closed_subdiagonals(a_inf) {
        Ok(c) => c,
        Err(ClosedError::DegenerateSpectrum { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let numeric = SubdiagonalData::from_matrices(&pair.unit_plus(), &pair.unit_minus());
    Ok(Some(subdiagonal_error(&closed, &numeric)))
}

/// Largest entrywise error relative to max(|closed|, 1e−3).
pub fn subdiagonal_error(closed: &SubdiagonalData, numeric: &SubdiagonalData) -> f64 {
    closed
        .s_plus
        .iter()
        .zip(&numeric.s_plus)
        .chain(closed.s_minus.iter().zip(&numeric.s_minus))
        .map(|(c, x)| (c - x).norm() / c.norm().max(1e-3))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Forward-difference step per real parameter.
    pub fd_step: f64,
    /// Absolute residual at which the solve counts as converged.
    pub target: f64,
    pub seeded: SeededOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 100,
            fd_step: 1e-6,
            target: 1e-8,
            seeded: SeededOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StokesSolve {
    pub a_minus: HermitianMatrix,
    pub residual: f64,
    pub initial_residual: f64,
    pub iterations: usize,
}

/// Solves S_+(A_∞) = P·S_−(P·X·P)·P for X ∈ Herm(n) by Levenberg–Marquardt.
pub fn connect_via_stokes(
    a_inf: &HermitianMatrix,
    initial_guess: &HermitianMatrix,
    rho: f64,
    opts: &SolverOptions,
) -> Result<StokesSolve, ConnectionError> {
    let n = a_inf.dim();
    if initial_guess.dim() != n {
        return Err(ConnectionError::DimensionMismatch(n, initial_guess.dim()));
    }
    let target = seeded_stokes(a_inf, rho, &opts.seeded)?.pair.s_plus;
    let resid = |x: &[f64]| -> Result<DVector<f64>, ConnectionError> {
        let xm = HermitianMatrix::from_real_coords(n, x);
        let s = seeded_stokes(&xm.flipped(), rho, &opts.seeded)?.pair.s_minus;
        let d = &target - flip(&s);
        let mut v = Vec::with_capacity(2 * n * n);
        for z in d.iter() {
            v.push(z.re);
            v.push(z.im);
        }
        Ok(DVector::from_vec(v))
    };

    let mut x = initial_guess.to_real_coords();
    let mut r = resid(&x)?;
    let initial_residual = r.norm();
    let mut cost = initial_residual;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let p = x.len();

    while cost > opts.target && iterations < opts.max_iterations {
        iterations += 1;
        let mut jac = DMatrix::<f64>::zeros(r.len(), p);
        for k in 0..p {
            let mut xp = x.clone();
            let h = opts.fd_step * x[k].abs().max(1.0);
            xp[k] += h;
            let rp = resid(&xp)?;
            jac.set_column(k, &((rp - &r) / h));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        let mut stalled = false;
        for _ in 0..12 {
            let mut m = jtj.clone();
            for k in 0..p {
                m[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = m.lu().solve(&(-&g)) else {
                lambda *= 4.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rn = resid(&xn)?;
            if rn.norm() < cost {
                let gain = cost - rn.norm();
                x = xn;
                r = rn;
                cost = r.norm();
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                // further iterations would only chase integration noise
                stalled = step.norm() <= 1e-13 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
                    || gain <= 1e-4 * cost;
                break;
            }
            lambda *= 4.0;
        }
        if !improved || stalled {
            break;
        }
    }
    let best = HermitianMatrix::from_real_coords(n, &x);
    if cost <= opts.target {
        Ok(StokesSolve {
            a_minus: best,
            residual: cost,
            initial_residual,
            iterations,
        })
    } else {
        Err(ConnectionError::NonConvergence {
            iterations,
            residual: cost,
            best,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PviParameters {
    pub x: f64,
    pub theta: [C64; 3],
    pub theta_inf: C64,
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    pub delta: C64,
}

/// θ_k = Φ_kk/(2πι), θ_∞ from the two nonzero eigenvalues
/// πι(Σθ ∓ θ_∞), and 2α = (θ_∞ − 1)², 2β = −θ₁², 2γ = −θ₃², 2δ = −θ₂².
pub fn pvi_parameters(
    phi: &HermitianMatrix,
    u: &RegularPoint,
    eig_tol: f64,
) -> Result<PviParameters, ConnectionError> {
    if phi.dim() != 3 {
        return Err(ConnectionError::WrongDimension(phi.dim()));
    }
    if u.dim() != 3 {
        return Err(ConnectionError::WrongDimension(u.dim()));
    }
    let two_pi_i = C64::new(0.0, 2.0 * PI);
    let d = phi.diagonal();
    let theta = [
        C64::new(d[0], 0.0) / two_pi_i,
        C64::new(d[1], 0.0) / two_pi_i,
        C64::new(d[2], 0.0) / two_pi_i,
    ];
    let vals = herm_eigen(phi)?.values;
    let zero = (0..3)
        .min_by(|&a, &b| vals[a].abs().total_cmp(&vals[b].abs()))
        .expect("three eigenvalues");
    let tol = eig_tol * phi.norm().max(1.0);
    if vals[zero].abs() > tol {
        return Err(ConnectionError::NoZeroEigenvalue {
            closest: vals[zero],
            tol,
        });
    }
    let rest: Vec<f64> = (0..3).filter(|&k| k != zero).map(|k| vals[k]).collect();
    let theta_inf = C64::new(rest[1] - rest[0], 0.0) / two_pi_i;
    let one = C64::new(1.0, 0.0);
    let uc = u.coords();
    Ok(PviParameters {
        x: (uc[1] - uc[0]) / (uc[2] - uc[0]),
        theta,
        theta_inf,
        alpha: (theta_inf - one).powi(2) / 2.0,
        beta: -theta[0].powi(2) / 2.0,
        gamma: -theta[2].powi(2) / 2.0,
        delta: -theta[1].powi(2) / 2.0,
    })
}
