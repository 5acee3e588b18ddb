//! The isomonodromy equation dΦ = (1/2πι)·Σ_k [Φ, ad_u⁻¹ ad_{E_kk} Φ] du_k,
//! its integration along paths of regular points, and the caterpillar-zone
//! seeds and their inverses.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    delta_k, eta_k, herm_eigen, inv_two_pi_i, max_abs, scaled_power, scaled_power_log,
    ComplexMatrix, HermitianMatrix, LinalgError, C64,
};
use crate::ode::{integrate, OdeError, OdeOptions, OdeStats};
use crate::special::{branched_log, SpecialError};

pub const GAP_FLOOR: f64 = 1e-10;
pub const RHO_MIN: f64 = 10.0;
pub const FLOW_TOL: f64 = 1e-10;
pub const FP_TOL: f64 = 1e-13;
pub const EXTRACT_MAX_ITER: usize = 200;
const NEWTON_FD_STEP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("degenerate u: gap {gap:.3e} between positions {index} and {} is below {floor:.1e}", index + 1)]
    DegenerateU { index: usize, gap: f64, floor: f64 },
    #[error("u has non-finite coordinates")]
    NonFiniteU,
    #[error("expected zero diagonal, found {value:.3e} at position {index}")]
    NonzeroDiagonal { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("a path needs at least two waypoints")]
    EmptyPath,
    #[error("step size underflow at t = {t} (near-degenerate gaps or a pole of the solution)")]
    StepSizeUnderflow { t: f64 },
    #[error("tolerance not met after {steps} steps at t = {t}")]
    ToleranceNotMet { t: f64, steps: usize },
    #[error("re-symmetrization correction {correction:.3e} exceeds {limit:.3e}")]
    HermiticityDrift { correction: f64, limit: f64 },
    #[error("coordinate ratio {ratio} at position {index} is not positive")]
    NonPositiveRatio { index: usize, ratio: f64 },
    #[error("rho = {rho} must exceed {min}")]
    RhoTooSmall { rho: f64, min: f64 },
    #[error("extraction did not converge in {iterations} iterations (residual {residual:.3e}); the point is not deep enough in the zone")]
    FixedPointDivergence { iterations: usize, residual: f64 },
}

/// A real diagonal u = diag(u_1, ..., u_n) with strictly increasing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularPoint {
    u: Vec<f64>,
}

impl RegularPoint {
    pub fn new(u: Vec<f64>) -> Result<Self, FlowError> {
        Self::with_gap_floor(u, GAP_FLOOR)
    }

    pub fn with_gap_floor(u: Vec<f64>, floor: f64) -> Result<Self, FlowError> {
        if u.iter().any(|x| !x.is_finite()) {
            return Err(FlowError::NonFiniteU);
        }
        for k in 1..u.len() {
            let gap = u[k] - u[k - 1];
            if !(gap >= floor) {
                return Err(FlowError::DegenerateU {
                    index: k - 1,
                    gap,
                    floor,
                });
            }
        }
        Ok(RegularPoint { u })
    }

    /// u⁺(ρ) = (ρ, ρ², ..., ρⁿ).
    pub fn plus_family(n: usize, rho: f64) -> Result<Self, FlowError> {
        Self::new((1..=n).map(|k| rho.powi(k as i32)).collect())
    }

    /// u⁻(ρ) = (−ρⁿ, ..., −ρ², −ρ).
    pub fn minus_family(n: usize, rho: f64) -> Result<Self, FlowError> {
        Self::new((1..=n).rev().map(|k| -rho.powi(k as i32)).collect())
    }

    pub fn coords(&self) -> &[f64] {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn min_gap(&self) -> f64 {
        self.u
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// −P·u·P, which is again increasing.
    pub fn flipped(&self) -> Self {
        RegularPoint {
            u: self.u.iter().rev().map(|x| -x).collect(),
        }
    }

    pub fn translated(&self, c: f64) -> Self {
        RegularPoint {
            u: self.u.iter().map(|x| x + c).collect(),
        }
    }
}

/// Piecewise-linear path through regular points, parametrized by t ∈ [0, 1]
/// with each segment taking an equal share of t.
#[derive(Debug, Clone, PartialEq)]
pub struct PathInU {
    waypoints: Vec<RegularPoint>,
}

impl PathInU {
    /// Convex combinations of increasing vectors are increasing with gaps at
    /// least the smaller endpoint gap, so regular waypoints give a regular path.
    pub fn new(waypoints: Vec<RegularPoint>) -> Result<Self, FlowError> {
        if waypoints.len() < 2 {
            return Err(FlowError::EmptyPath);
        }
        let n = waypoints[0].dim();
        for w in &waypoints {
            if w.dim() != n {
                return Err(FlowError::DimensionMismatch {
                    expected: n,
                    found: w.dim(),
                });
            }
        }
        Ok(PathInU { waypoints })
    }

    pub fn waypoints(&self) -> &[RegularPoint] {
        &self.waypoints
    }

    pub fn dim(&self) -> usize {
        self.waypoints[0].dim()
    }

    pub fn segments(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn start(&self) -> &RegularPoint {
        &self.waypoints[0]
    }

    pub fn end(&self) -> &RegularPoint {
        self.waypoints.last().expect("non-empty path")
    }

    pub fn point_at(&self, t: f64) -> Vec<f64> {
        let m = self.segments();
        let x = (t.clamp(0.0, 1.0) * m as f64).min(m as f64);
        let i = (x.floor() as usize).min(m - 1);
        let s = x - i as f64;
        lerp(self.waypoints[i].coords(), self.waypoints[i + 1].coords(), s)
    }

    /// Euclidean length in u-space.
    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| {
                w[0].coords()
                    .iter()
                    .zip(w[1].coords())
                    .map(|(a, b)| (b - a).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }

    pub fn reversed(&self) -> Self {
        PathInU {
            waypoints: self.waypoints.iter().rev().cloned().collect(),
        }
    }

    /// Smallest gap among the waypoints, which bounds every gap along the path.
    pub fn min_gap(&self) -> f64 {
        self.waypoints
            .iter()
            .map(RegularPoint::min_gap)
            .fold(f64::INFINITY, f64::min)
    }
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

/// The unique off-diagonal M with [diag(u), M] = N.
pub fn ad_u_inverse(u: &RegularPoint, n: &ComplexMatrix) -> Result<ComplexMatrix, FlowError> {
    let dim = u.dim();
    if n.nrows() != dim || n.ncols() != dim {
        return Err(FlowError::DimensionMismatch {
            expected: dim,
            found: n.nrows(),
        });
    }
    let tol = 1e-13 * max_abs(n).max(1.0);
    for i in 0..dim {
        if n[(i, i)].norm() > tol {
            return Err(FlowError::NonzeroDiagonal {
                index: i,
                value: n[(i, i)].norm(),
            });
        }
    }
    let uc = u.coords();
    Ok(ComplexMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            C64::new(0.0, 0.0)
        } else {
            n[(i, j)] / (uc[i] - uc[j])
        }
    }))
}

/// The coefficient matrices V_k of dΦ = Σ_k V_k du_k.
pub fn iso_vector_field(
    u: &RegularPoint,
    phi: &HermitianMatrix,
) -> Result<Vec<HermitianMatrix>, FlowError> {
    let n = u.dim();
    if phi.dim() != n {
        return Err(FlowError::DimensionMismatch {
            expected: n,
            found: phi.dim(),
        });
    }
    let p = phi.matrix();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = ComplexMatrix::zeros(n, n);
        e[(k, k)] = C64::new(1.0, 0.0);
        let ad = &e * p - p * &e;
        let m = ad_u_inverse(u, &ad)?;
        let v = (p * &m - &m * p) * inv_two_pi_i();
        out.push(HermitianMatrix::symmetrize(v));
    }
    Ok(out)
}

/// dΦ/dt = (1/2πι)[Φ, G] with G_ij = Φ_ij (u̇_i − u̇_j)/(u_i − u_j).
pub fn flow_derivative(u: &[f64], udot: &[f64], phi: &ComplexMatrix) -> ComplexMatrix {
    let n = u.len();
    let g = ComplexMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(0.0, 0.0)
        } else {
            phi[(i, j)] * ((udot[i] - udot[j]) / (u[i] - u[j]))
        }
    });
    (phi * &g - &g * phi) * inv_two_pi_i()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub tol: f64,
    /// Keep (t, u, Φ) at every accepted step; otherwise only the endpoints.
    pub record_samples: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: FLOW_TOL,
            record_samples: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub u: Vec<f64>,
    pub phi: HermitianMatrix,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowDiagnostics {
    pub stats: OdeStats,
    /// Largest Hermiticity correction applied after an accepted step.
    pub max_symmetrization: f64,
    pub path_length: f64,
    pub tol: f64,
}

/// Drift of the flow invariants relative to the first sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conservation {
    pub hermiticity_defect: f64,
    pub diagonal_drift: f64,
    pub spectrum_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub diagnostics: FlowDiagnostics,
}

impl Trajectory {
    pub fn final_phi(&self) -> &HermitianMatrix {
        &self.samples.last().expect("trajectory has samples").phi
    }

    pub fn final_u(&self) -> &[f64] {
        &self.samples.last().expect("trajectory has samples").u
    }

    pub fn conservation(&self) -> Result<Conservation, FlowError> {
        let first = &self.samples[0].phi;
        let d0 = first.diagonal();
        let s0 = herm_eigen(first)?.values;
        let mut diagonal_drift = 0.0_f64;
        let mut spectrum_drift = 0.0_f64;
        for s in &self.samples[1..] {
            for (a, b) in s.phi.diagonal().iter().zip(&d0) {
                diagonal_drift = diagonal_drift.max((a - b).abs());
            }
            for (a, b) in herm_eigen(&s.phi)?.values.iter().zip(&s0) {
                spectrum_drift = spectrum_drift.max((a - b).abs());
            }
        }
        Ok(Conservation {
            hermiticity_defect: self.diagnostics.max_symmetrization,
            diagonal_drift,
            spectrum_drift,
        })
    }
}

pub fn integrate_path(
    phi0: &HermitianMatrix,
    path: &PathInU,
    tol: f64,
) -> Result<Trajectory, FlowError> {
    integrate_path_with(
        phi0,
        path,
        &FlowOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn integrate_path_with(
    phi0: &HermitianMatrix,
    path: &PathInU,
    opts: &FlowOptions,
) -> Result<Trajectory, FlowError> {
    let n = path.dim();
    if phi0.dim() != n {
        return Err(FlowError::DimensionMismatch {
            expected: n,
            found: phi0.dim(),
        });
    }
    let ode = OdeOptions::with_tol(opts.tol);
    let limit = 10.0 * opts.tol * phi0.norm().max(1.0);
    let m = path.segments();
    let mut samples = vec![TrajectorySample {
        t: 0.0,
        u: path.start().coords().to_vec(),
        phi: phi0.clone(),
    }];
    let mut diag = FlowDiagnostics {
        path_length: path.length(),
        tol: opts.tol,
        ..Default::default()
    };
    let mut y: Vec<C64> = phi0.matrix().as_slice().to_vec();

    for seg in 0..m {
        let a = path.waypoints()[seg].coords();
        let b = path.waypoints()[seg + 1].coords();
        let udot: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let mut worst = 0.0_f64;
        let mut drift: Option<f64> = None;
        let mut local = Vec::new();
        let result = integrate(
            |s, y, dy| {
                let u = lerp(a, b, s);
                let p = DMatrix::from_column_slice(n, n, y);
                let d = flow_derivative(&u, &udot, &p);
                dy.copy_from_slice(d.as_slice());
            },
            0.0,
            1.0,
            &y,
            &ode,
            |s, y| {
                let p = DMatrix::from_column_slice(n, n, y);
                let h = HermitianMatrix::symmetrize(p.clone());
                let corr = max_abs(&(h.matrix() - &p));
                worst = worst.max(corr);
                if corr > limit && drift.is_none() {
                    drift = Some(corr);
                }
                y.copy_from_slice(h.matrix().as_slice());
                if opts.record_samples && s < 1.0 {
                    local.push(TrajectorySample {
                        t: (seg as f64 + s) / m as f64,
                        u: lerp(a, b, s),
                        phi: h,
                    });
                }
            },
        );
        let (yend, stats) = result.map_err(|e| match e {
            OdeError::StepSizeUnderflow { t } => FlowError::StepSizeUnderflow {
                t: (seg as f64 + t) / m as f64,
            },
            OdeError::ToleranceNotMet { t, steps } => FlowError::ToleranceNotMet {
                t: (seg as f64 + t) / m as f64,
                steps,
            },
        })?;
        if let Some(correction) = drift {
            return Err(FlowError::HermiticityDrift { correction, limit });
        }
        diag.stats.merge(&stats);
        diag.max_symmetrization = diag.max_symmetrization.max(worst);
        y = yend;
        samples.extend(local);
        samples.push(TrajectorySample {
            t: (seg + 1) as f64 / m as f64,
            u: b.to_vec(),
            phi: HermitianMatrix::symmetrize(DMatrix::from_column_slice(n, n, &y)),
        });
    }
    Ok(Trajectory {
        samples,
        diagnostics: diag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSeed {
    pub zone: Zone,
    pub rho: f64,
    pub point: RegularPoint,
    pub phi: HermitianMatrix,
}

/// C = (u_{n−1}/u_n)^{δ_{n−1}(A)/2πι} ··· (u_1/u_2)^{δ_1(A)/2πι} · (1/u_1)^{δ_0(A)/2πι}.
pub fn conjugator_plus(a: &HermitianMatrix, u: &RegularPoint) -> Result<ComplexMatrix, FlowError> {
    let n = u.dim();
    if a.dim() != n {
        return Err(FlowError::DimensionMismatch {
            expected: n,
            found: a.dim(),
        });
    }
    let mut ext = Vec::with_capacity(n + 1);
    ext.push(1.0);
    ext.extend_from_slice(u.coords());
    let s = inv_two_pi_i();
    let mut c = ComplexMatrix::identity(n, n);
    for k in (0..n).rev() {
        let ratio = ext[k] / ext[k + 1];
        if !(ratio > 0.0) {
            return Err(FlowError::NonPositiveRatio { index: k, ratio });
        }
        c *= scaled_power(&delta_k(a, k)?, ratio, s)?;
    }
    Ok(c)
}

fn check_rho(rho: f64) -> Result<(), FlowError> {
    if !(rho > RHO_MIN) || !rho.is_finite() {
        return Err(FlowError::RhoTooSmall { rho, min: RHO_MIN });
    }
    Ok(())
}

/// `C⁻¹·A·C` at `u`, the leading asymptotics of the solution with data A in the plus zone.
pub fn seed_map_plus(a: &HermitianMatrix, u: &RegularPoint) -> Result<HermitianMatrix, FlowError> {
    let c = conjugator_plus(a, u)?;
    Ok(a.conjugate_by(&c)?)
}

pub fn seed_plus(a_inf: &HermitianMatrix, rho: f64) -> Result<ZoneSeed, FlowError> {
    check_rho(rho)?;
    let point = RegularPoint::plus_family(a_inf.dim(), rho)?;
    let phi = seed_map_plus(a_inf, &point)?;
    Ok(ZoneSeed {
        zone: Zone::Plus,
        rho,
        point,
        phi,
    })
}

/// Minus-zone seed through the P-flip: `P·seed_plus(P·A·P)·P` at `u⁻(ρ)`.
pub fn seed_minus(a_minus: &HermitianMatrix, rho: f64) -> Result<ZoneSeed, FlowError> {
    let plus = seed_plus(&a_minus.flipped(), rho)?;
    Ok(ZoneSeed {
        zone: Zone::Minus,
        rho,
        point: plus.point.flipped(),
        phi: plus.phi.flipped(),
    })
}

/// Minus-zone seed from the coordinate-space product
/// C = ∏_{k=1..n} (u_{k+1}/u_k)^{η_{n−k}(A)/2πι}, u_{n+1} := −1, k = 1 leftmost.
///
/// Independent of [`seed_minus`]; the two agree to roundoff.
pub fn seed_minus_direct(a_minus: &HermitianMatrix, rho: f64) -> Result<ZoneSeed, FlowError> {
    check_rho(rho)?;
    let n = a_minus.dim();
    let point = RegularPoint::minus_family(n, rho)?;
    let mut ext = point.coords().to_vec();
    ext.push(-1.0);
    let s = inv_two_pi_i();
    let mut c = ComplexMatrix::identity(n, n);
    for k in 0..n {
        let ratio = C64::new(ext[k + 1] / ext[k], 0.0);
        let log = branched_log(ratio)?;
        c *= scaled_power_log(&eta_k(a_minus, n - 1 - k)?, log, s)?;
    }
    let phi = a_minus.conjugate_by(&c)?;
    Ok(ZoneSeed {
        zone: Zone::Minus,
        rho,
        point,
        phi,
    })
}

/// Recovers A with `seed_map_plus(A, u) = Φ` by Newton iteration on the
/// n² real coordinates of Herm(n), using a central-difference Jacobian.
pub fn extract_plus(
    phi: &HermitianMatrix,
    u: &RegularPoint,
    fp_tol: f64,
) -> Result<HermitianMatrix, FlowError> {
    let n = u.dim();
    if phi.dim() != n {
        return Err(FlowError::DimensionMismatch {
            expected: n,
            found: phi.dim(),
        });
    }
    let target = phi.to_real_coords();
    let scale = phi.norm().max(1.0);
    let tol = fp_tol * scale;
    let dim = target.len();
    let map = |x: &[f64]| -> Result<Vec<f64>, FlowError> {
        let a = HermitianMatrix::from_real_coords(n, x);
        Ok(seed_map_plus(&a, u)?.to_real_coords())
    };
    let residual = |x: &[f64]| -> Result<Vec<f64>, FlowError> {
        Ok(map(x)?.iter().zip(&target).map(|(a, b)| a - b).collect())
    };
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));

    let mut x = target.clone();
    let mut r = residual(&x)?;
    let r0 = inf(&r);
    for it in 0..EXTRACT_MAX_ITER {
        let rn = inf(&r);
        if !rn.is_finite() || rn > 1e3 * scale.max(r0) {
            return Err(FlowError::FixedPointDivergence {
                iterations: it,
                residual: rn,
            });
        }
        if rn <= tol {
            return Ok(HermitianMatrix::from_real_coords(n, &x));
        }
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        let mut xp = x.clone();
        for p in 0..dim {
            let h = NEWTON_FD_STEP * x[p].abs().max(1.0);
            xp[p] = x[p] + h;
            let fp = map(&xp)?;
            xp[p] = x[p] - h;
            let fm = map(&xp)?;
            xp[p] = x[p];
            for q in 0..dim {
                jac[(q, p)] = (fp[q] - fm[q]) / (2.0 * h);
            }
        }
        let rhs = nalgebra::DVector::from_column_slice(&r);
        let step = jac.lu().solve(&rhs).ok_or(FlowError::FixedPointDivergence {
            iterations: it,
            residual: rn,
        })?;
        for p in 0..dim {
            x[p] -= step[p];
        }
        let sn = step.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        r = residual(&x)?;
        if sn <= tol && inf(&r) <= 1e3 * tol {
            return Ok(HermitianMatrix::from_real_coords(n, &x));
        }
    }
    Err(FlowError::FixedPointDivergence {
        iterations: EXTRACT_MAX_ITER,
        residual: inf(&r),
    })
}

/// `P·extract_plus(P·Φ·P, −P·u·P)·P`.
pub fn extract_minus(
    phi: &HermitianMatrix,
    u: &RegularPoint,
    fp_tol: f64,
) -> Result<HermitianMatrix, FlowError> {
    Ok(extract_plus(&phi.flipped(), &u.flipped(), fp_tol)?.flipped())
}
