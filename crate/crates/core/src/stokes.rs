//! Canonical solutions of dF/dz = (ιu − A/(2πιz))·F near z = ∞ and their
//! Stokes matrices.
//!
//! F_± are anchored by the truncated formal series at z = ±R and continued
//! numerically. S_+ comes from continuing F_+ along the real axis below the
//! origin, S_− from the same continuation above it.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::flow::{RegularPoint, GAP_FLOOR};
use crate::linalg::{
    diag_complex, inverse, perm_matrix, solve, strict_lower_norm, strict_upper_norm,
    ComplexMatrix, HermitianMatrix, LinalgError, Permutation, C64,
};
use crate::ode::{integrate, OdeError, OdeOptions, OdeStats};
use crate::special::{branched_log, SpecialError};

pub const SERIES_ORDER: usize = 12;
/// Smallest accepted value of R·min_gap(u).
pub const ANCHOR_FLOOR: f64 = 30.0;
pub const ODE_TOL: f64 = 1e-12;
pub const TRI_TOL: f64 = 1e-8;
pub const DAGGER_TOL: f64 = 1e-6;
const ANCHOR_DOUBLINGS: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StokesError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("degenerate u: smallest gap {gap:.3e} is below {floor:.1e}")]
    DegenerateU { gap: f64, floor: f64 },
    #[error("u has {found} entries but A is {expected}x{expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("series order must be at least 1")]
    InvalidOrder,
    #[error("arg {arg} is outside the continuation range of F_{which}")]
    PathCrossesCut { arg: f64, which: &'static str },
    #[error("anchor radius {radius} gives R·min_gap = {product:.3} below {floor}")]
    AnchorTooClose {
        radius: f64,
        product: f64,
        floor: f64,
    },
    #[error("propagation failed: {0}")]
    Propagation(#[from] OdeError),
    #[error("triangularity defect {defect:.3e} exceeds {tol:.3e}")]
    TriangularityViolation { defect: f64, tol: f64 },
    #[error("conditioning failure: {0}")]
    ConditioningFailure(String),
}

/// dF/dz = (ιu − A/(2πιz))·F for real, pairwise distinct u.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    u: Vec<f64>,
    a: HermitianMatrix,
    sigma: Permutation,
}

impl LinearSystem {
    pub fn new(u: Vec<f64>, a: HermitianMatrix) -> Result<Self, StokesError> {
        Self::with_gap_floor(u, a, GAP_FLOOR)
    }

    pub fn with_gap_floor(u: Vec<f64>, a: HermitianMatrix, floor: f64) -> Result<Self, StokesError> {
        if u.len() != a.dim() {
            return Err(StokesError::DimensionMismatch {
                expected: a.dim(),
                found: u.len(),
            });
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(StokesError::DegenerateU {
                gap: f64::NAN,
                floor,
            });
        }
        let sigma = Permutation::sorting(&u);
        let gap = min_sorted_gap(&u, &sigma);
        if !(gap >= floor) {
            return Err(StokesError::DegenerateU { gap, floor });
        }
        Ok(LinearSystem { u, a, sigma })
    }

    pub fn at_point(u: &RegularPoint, a: HermitianMatrix) -> Result<Self, StokesError> {
        Self::new(u.coords().to_vec(), a)
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn a(&self) -> &HermitianMatrix {
        &self.a
    }

    pub fn sigma(&self) -> &Permutation {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn min_gap(&self) -> f64 {
        min_sorted_gap(&self.u, &self.sigma)
    }

    /// The system (−P·u·P, P·A·P).
    pub fn flipped(&self) -> Self {
        let u: Vec<f64> = self.u.iter().rev().map(|x| -x).collect();
        let sigma = Permutation::sorting(&u);
        LinearSystem {
            u,
            a: self.a.flipped(),
            sigma,
        }
    }

    /// The conjugated system with u sorted ascending and A permuted accordingly.
    fn sorted(&self) -> (Vec<f64>, HermitianMatrix) {
        let s = self.sigma.images();
        let n = self.dim();
        let u: Vec<f64> = s.iter().map(|&i| self.u[i]).collect();
        let a = ComplexMatrix::from_fn(n, n, |i, j| self.a[(s[i], s[j])]);
        (u, HermitianMatrix::symmetrize(a))
    }
}

fn min_sorted_gap(u: &[f64], sigma: &Permutation) -> f64 {
    sigma
        .images()
        .windows(2)
        .map(|w| u[w[1]] - u[w[0]])
        .fold(f64::INFINITY, f64::min)
}

/// F ≈ (Id + Σ_j H_j z^{−j})·e^{ιuz}·z^{−[A]/2πι}.
#[derive(Debug, Clone, PartialEq)]
pub struct FormalSeries {
    u: Vec<f64>,
    b: ComplexMatrix,
    lambda: Vec<C64>,
    /// H_0 = Id, H_1, ..., H_m.
    pub coeffs: Vec<ComplexMatrix>,
}

pub fn formal_series(sys: &LinearSystem, m: usize) -> Result<FormalSeries, StokesError> {
    FormalSeries::new(&sys.u, &sys.a, m)
}

impl FormalSeries {
    pub fn new(u: &[f64], a: &HermitianMatrix, m: usize) -> Result<Self, StokesError> {
        if m == 0 {
            return Err(StokesError::InvalidOrder);
        }
        let n = u.len();
        let i = C64::new(0.0, 1.0);
        // B = −A/(2πι), Λ = diag(B)
        let b = a.matrix() * C64::new(0.0, 1.0 / (2.0 * PI));
        let lambda: Vec<C64> = (0..n).map(|k| b[(k, k)]).collect();
        let mut coeffs = vec![ComplexMatrix::identity(n, n)];
        for j in 0..m {
            let h = &coeffs[j];
            let mut rhs = -(h * C64::new(j as f64, 0.0)) - &b * h;
            for c in 0..n {
                for r in 0..n {
                    rhs[(r, c)] += h[(r, c)] * lambda[c];
                }
            }
            let mut next = ComplexMatrix::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    if r != c {
                        next[(r, c)] = rhs[(r, c)] / (i * (u[r] - u[c]));
                    }
                }
            }
            for r in 0..n {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..n {
                    if k != r {
                        s += b[(r, k)] * next[(k, r)];
                    }
                }
                next[(r, r)] = -s / (j + 1) as f64;
            }
            coeffs.push(next);
        }
        Ok(FormalSeries {
            u: u.to_vec(),
            b,
            lambda,
            coeffs,
        })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Σ_{j ≤ order} H_j z^{−j}.
    pub fn partial_sum(&self, z: C64, order: usize) -> ComplexMatrix {
        let w = z.inv();
        let mut acc = self.coeffs[order.min(self.order())].clone();
        for j in (0..order.min(self.order())).rev() {
            acc = acc * w + &self.coeffs[j];
        }
        acc
    }

    /// The truncated formal solution at z, with `log_z` the chosen logarithm of z.
    pub fn value(&self, z: C64, log_z: C64, order: usize) -> ComplexMatrix {
        let i = C64::new(0.0, 1.0);
        let e: Vec<C64> = self
            .u
            .iter()
            .zip(&self.lambda)
            .map(|(&uk, &lk)| (i * uk * z + lk * log_z).exp())
            .collect();
        self.partial_sum(z, order) * diag_complex(&e)
    }

    /// ‖Y' + Y(ιu + Λ/z) − (ιu + B/z)Y‖ for the truncated Y.
    pub fn defect(&self, z: C64, order: usize) -> f64 {
        let n = self.u.len();
        let i = C64::new(0.0, 1.0);
        let y = self.partial_sum(z, order);
        let mut dy = ComplexMatrix::zeros(n, n);
        for j in 1..=order.min(self.order()) {
            dy -= &self.coeffs[j] * (C64::new(j as f64, 0.0) * z.powi(-(j as i32) - 1));
        }
        let mut r = dy - (&self.b * &y) / z;
        for c in 0..n {
            for rr in 0..n {
                r[(rr, c)] += y[(rr, c)] * (i * self.u[c] + self.lambda[c] / z)
                    - i * self.u[rr] * y[(rr, c)];
            }
        }
        r.norm()
    }

    /// Largest order ≤ m before the term norms ‖H_j‖·R^{−j} start to grow.
    pub fn truncation_order(&self, radius: f64) -> usize {
        let mut prev = f64::INFINITY;
        for j in 1..=self.order() {
            let t = self.coeffs[j].norm() * radius.powi(-(j as i32));
            if t > prev && prev > 0.0 {
                return j - 1;
            }
            prev = t;
        }
        self.order()
    }

    /// Size of the last retained term, used as the truncation error estimate.
    pub fn tail_estimate(&self, radius: f64, order: usize) -> f64 {
        let k = order.min(self.order());
        self.coeffs[k].norm() * radius.powi(-(k as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Plus,
    Minus,
}

/// z = modulus·e^{ι·arg} with the argument tracked explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub modulus: f64,
    pub arg: f64,
}

impl PolarPoint {
    pub fn new(modulus: f64, arg: f64) -> Self {
        PolarPoint { modulus, arg }
    }

    pub fn to_complex(self) -> C64 {
        Complex64::from_polar(self.modulus, self.arg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesOptions {
    /// Anchor radius R; chosen from min_gap(u) when absent.
    pub anchor_radius: Option<f64>,
    pub order: usize,
    /// Radius of the detour around z = 0; min(1, R/100) when absent.
    pub detour_radius: Option<f64>,
    pub ode_tol: f64,
    pub tri_tol: f64,
    pub dagger_tol: f64,
    /// Report S_− = S_+† instead of computing it.
    pub use_dagger: bool,
}

impl Default for StokesOptions {
    fn default() -> Self {
        StokesOptions {
            anchor_radius: None,
            order: SERIES_ORDER,
            detour_radius: None,
            ode_tol: ODE_TOL,
            tri_tol: TRI_TOL,
            dagger_tol: DAGGER_TOL,
            use_dagger: true,
        }
    }
}

impl StokesOptions {
    pub fn direct() -> Self {
        StokesOptions {
            use_dagger: false,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Line { from: C64, to: C64 },
    Arc { radius: f64, from: f64, to: f64 },
}

impl Segment {
    fn point(&self, s: f64) -> (C64, C64) {
        match *self {
            Segment::Line { from, to } => (from + (to - from) * s, to - from),
            Segment::Arc { radius, from, to } => {
                let z = Complex64::from_polar(radius, from + (to - from) * s);
                (z, z * C64::new(0.0, to - from))
            }
        }
    }
}

/// Anchor geometry shared by evaluation and Stokes extraction.
#[derive(Debug, Clone)]
struct Anchor {
    u: Vec<f64>,
    shift: f64,
    a: HermitianMatrix,
    series: FormalSeries,
    radius: f64,
    order: usize,
    detour: f64,
    tail: f64,
}

fn prepare_anchor(u_raw: &[f64], a: &HermitianMatrix, min_gap: f64, opts: &StokesOptions) -> Result<Anchor, StokesError> {
    let shift = u_raw.iter().sum::<f64>() / u_raw.len() as f64;
    let u: Vec<f64> = u_raw.iter().map(|x| x - shift).collect();
    let series = FormalSeries::new(&u, a, opts.order)?;
    let mut radius = match opts.anchor_radius {
        Some(r) => {
            let product = r * min_gap;
            if !(product >= ANCHOR_FLOOR) {
                return Err(StokesError::AnchorTooClose {
                    radius: r,
                    product,
                    floor: ANCHOR_FLOOR,
                });
            }
            r
        }
        None => (ANCHOR_FLOOR / min_gap).max(10.0),
    };
    let mut order = series.truncation_order(radius);
    let mut tail = series.tail_estimate(radius, order);
    if opts.anchor_radius.is_none() {
        for _ in 0..ANCHOR_DOUBLINGS {
            if tail <= opts.ode_tol {
                break;
            }
            radius *= 2.0;
            order = series.truncation_order(radius);
            tail = series.tail_estimate(radius, order);
        }
    }
    let detour = opts.detour_radius.unwrap_or((radius / 100.0).min(1.0));
    Ok(Anchor {
        u,
        shift,
        a: a.clone(),
        series,
        radius,
        order,
        detour,
        tail,
    })
}

fn propagate(
    u: &[f64],
    a: &HermitianMatrix,
    f0: &ComplexMatrix,
    path: &[Segment],
    tol: f64,
    stats: &mut OdeStats,
) -> Result<ComplexMatrix, StokesError> {
    let n = u.len();
    // B = −A/(2πι)
    let b = a.matrix() * C64::new(0.0, 1.0 / (2.0 * PI));
    let i = C64::new(0.0, 1.0);
    let opts = OdeOptions::with_tol(tol);
    let mut y: Vec<C64> = f0.as_slice().to_vec();
    for seg in path {
        let (yend, st) = integrate(
            |s, y, dy| {
                let (z, dz) = seg.point(s);
                let w = z.inv();
                for c in 0..n {
                    for r in 0..n {
                        let mut acc = i * u[r] * y[c * n + r];
                        let mut bs = C64::new(0.0, 0.0);
                        for k in 0..n {
                            bs += b[(r, k)] * y[c * n + k];
                        }
                        acc += bs * w;
                        dy[c * n + r] = acc * dz;
                    }
                }
            },
            0.0,
            1.0,
            &y,
            &opts,
            |_, _| {},
        )?;
        stats.merge(&st);
        y = yend;
    }
    Ok(ComplexMatrix::from_column_slice(n, n, &y))
}

/// Value of a canonical solution with its error bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalValue {
    pub value: ComplexMatrix,
    /// Truncation estimate of the anchor series.
    pub series_error: f64,
    pub stats: OdeStats,
}

/// F_+ (arg z ∈ [−π, π]) or F_− (arg z ∈ [−2π, 0]) at z.
///
/// F_+ is anchored at +R and F_− at −R (arg −π); from the anchor the path runs
/// radially to the detour circle, around it to arg z, then radially out to |z|.
pub fn canonical_eval(
    sys: &LinearSystem,
    z: PolarPoint,
    which: Which,
    opts: &StokesOptions,
) -> Result<CanonicalValue, StokesError> {
    let (lo, hi, base, name) = match which {
        Which::Plus => (-PI, PI, 0.0, "+"),
        Which::Minus => (-2.0 * PI, 0.0, -PI, "-"),
    };
    if !(z.arg >= lo && z.arg <= hi) {
        return Err(StokesError::PathCrossesCut {
            arg: z.arg,
            which: name,
        });
    }
    if !(z.modulus > 0.0) || !z.modulus.is_finite() {
        return Err(StokesError::ConditioningFailure(format!(
            "cannot evaluate at |z| = {}",
            z.modulus
        )));
    }
    let an = prepare_anchor(&sys.u, &sys.a, sys.min_gap(), opts)?;
    let dir = Complex64::from_polar(1.0, base);
    let za = dir * an.radius;
    let log_za = match which {
        Which::Plus => C64::new(an.radius.ln(), 0.0),
        Which::Minus => branched_log(za)?,
    };
    let f0 = an.series.value(za, log_za, an.order);
    let target = z.to_complex();
    let mut path = Vec::new();
    if z.arg == base {
        path.push(Segment::Line { from: za, to: target });
    } else {
        let r = an.detour.min(z.modulus);
        path.push(Segment::Line { from: za, to: dir * r });
        path.push(Segment::Arc {
            radius: r,
            from: base,
            to: z.arg,
        });
        path.push(Segment::Line {
            from: Complex64::from_polar(r, z.arg),
            to: target,
        });
    }
    let mut stats = OdeStats::default();
    let f = propagate(&an.u, &an.a, &f0, &path, opts.ode_tol, &mut stats)?;
    let phase = (C64::new(0.0, an.shift) * target).exp();
    Ok(CanonicalValue {
        value: f * phase,
        series_error: an.tail,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StokesDiagnostics {
    /// max of ‖strict lower(S_+)‖/‖S_+‖ and ‖strict upper(S_−)‖/‖S_−‖.
    pub triangularity_defect: f64,
    /// ‖S_− − S_+†‖, present when S_− was computed directly.
    pub dagger_defect: Option<f64>,
    pub anchor_radius: f64,
    pub series_order: usize,
    pub series_error: f64,
    pub detour_radius: f64,
    pub ode_tol: f64,
    pub stats: OdeStats,
    pub escalated: bool,
}

/// Upper-triangular S_+ and lower-triangular S_− for the system sorted by σ.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesPair {
    pub s_plus: ComplexMatrix,
    pub s_minus: ComplexMatrix,
    pub sigma: Permutation,
    pub diagnostics: StokesDiagnostics,
}

impl StokesPair {
    pub fn dim(&self) -> usize {
        self.s_plus.nrows()
    }

    /// S_+·diag(S_+)⁻¹, unit diagonal.
    pub fn unit_plus(&self) -> ComplexMatrix {
        let n = self.dim();
        let d: Vec<C64> = (0..n).map(|k| self.s_plus[(k, k)].inv()).collect();
        &self.s_plus * diag_complex(&d)
    }

    /// diag(S_−)⁻¹·S_−, unit diagonal.
    pub fn unit_minus(&self) -> ComplexMatrix {
        let n = self.dim();
        let d: Vec<C64> = (0..n).map(|k| self.s_minus[(k, k)].inv()).collect();
        diag_complex(&d) * &self.s_minus
    }

    /// P_σ·S_+·P_σ⁻¹, the transition matrix in the original ordering of u.
    pub fn plus_transition(&self) -> ComplexMatrix {
        let p = perm_matrix(&self.sigma);
        &p * &self.s_plus * p.transpose()
    }

    pub fn minus_transition(&self) -> ComplexMatrix {
        let p = perm_matrix(&self.sigma);
        &p * &self.s_minus * p.transpose()
    }
}

pub fn stokes_numeric(sys: &LinearSystem, opts: &StokesOptions) -> Result<StokesPair, StokesError> {
    match stokes_attempt(sys, opts, false) {
        Ok(pair) => Ok(pair),
        Err(StokesError::TriangularityViolation { .. }) | Err(StokesError::ConditioningFailure(_)) => {
            let retry = StokesOptions {
                ode_tol: opts.ode_tol / 2.0,
                order: opts.order + 6,
                ..*opts
            };
            stokes_attempt(sys, &retry, true)
        }
        Err(e) => Err(e),
    }
}

fn stokes_attempt(sys: &LinearSystem, opts: &StokesOptions, escalated: bool) -> Result<StokesPair, StokesError> {
    let n = sys.dim();
    let (u_sorted, a_sorted) = sys.sorted();
    let an = prepare_anchor(&u_sorted, &a_sorted, sys.min_gap(), opts)?;
    let r_big = an.radius;
    let r = an.detour;
    let plus_anchor = C64::new(r_big, 0.0);
    let minus_anchor = C64::new(-r_big, 0.0);
    let f_plus = an.series.value(plus_anchor, C64::new(r_big.ln(), 0.0), an.order);
    let f_minus = an
        .series
        .value(minus_anchor, branched_log(minus_anchor)?, an.order);

    let mut stats = OdeStats::default();
    let near = propagate(
        &an.u,
        &an.a,
        &f_plus,
        &[Segment::Line {
            from: plus_anchor,
            to: C64::new(r, 0.0),
        }],
        opts.ode_tol,
        &mut stats,
    )?;
    let below = propagate(
        &an.u,
        &an.a,
        &near,
        &[
            Segment::Arc {
                radius: r,
                from: 0.0,
                to: -PI,
            },
            Segment::Line {
                from: C64::new(-r, 0.0),
                to: minus_anchor,
            },
        ],
        opts.ode_tol,
        &mut stats,
    )?;
    let half: Vec<C64> = a_sorted
        .diagonal()
        .iter()
        .map(|&d| C64::new((d / 2.0).exp(), 0.0))
        .collect();
    let e_half = diag_complex(&half);
    let e_half_inv = diag_complex(&half.iter().map(|x| x.inv()).collect::<Vec<_>>());

    let s_plus = &e_half * solve(&f_minus, &below).map_err(conditioning)?;
    let (s_minus, dagger_defect) = if opts.use_dagger {
        (s_plus.adjoint(), None)
    } else {
        let above = propagate(
            &an.u,
            &an.a,
            &near,
            &[
                Segment::Arc {
                    radius: r,
                    from: 0.0,
                    to: PI,
                },
                Segment::Line {
                    from: C64::new(-r, 0.0),
                    to: minus_anchor,
                },
            ],
            opts.ode_tol,
            &mut stats,
        )?;
        let s_minus = inverse(&above).map_err(conditioning)? * &f_minus * &e_half_inv;
        let d = (&s_minus - s_plus.adjoint()).norm();
        (s_minus, Some(d))
    };
    if !s_plus.iter().chain(s_minus.iter()).all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(StokesError::ConditioningFailure("non-finite Stokes matrix".into()));
    }

    let tri = (strict_lower_norm(&s_plus) / s_plus.norm()).max(strict_upper_norm(&s_minus) / s_minus.norm());
    if tri > opts.tri_tol {
        return Err(StokesError::TriangularityViolation {
            defect: tri,
            tol: opts.tri_tol,
        });
    }
    if let Some(d) = dagger_defect {
        if d > opts.dagger_tol {
            return Err(StokesError::ConditioningFailure(format!(
                "dagger defect {d:.3e} exceeds {:.3e}",
                opts.dagger_tol
            )));
        }
    }
    debug_assert_eq!(s_plus.nrows(), n);
    Ok(StokesPair {
        s_plus,
        s_minus,
        sigma: sys.sigma.clone(),
        diagnostics: StokesDiagnostics {
            triangularity_defect: tri,
            dagger_defect,
            anchor_radius: r_big,
            series_order: an.order,
            series_error: an.tail,
            detour_radius: r,
            ode_tol: opts.ode_tol,
            stats,
            escalated,
        },
    })
}

fn conditioning(e: LinalgError) -> StokesError {
    StokesError::ConditioningFailure(format!("fundamental solution is singular: {e}"))
}
