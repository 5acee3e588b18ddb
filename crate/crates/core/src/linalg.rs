//! Dense complex linear algebra on small matrices.
//!
//! Everything here is deterministic: the Hermitian eigensolver is a cyclic
//! Jacobi iteration with a fixed sweep order and a fixed eigenvector phase
//! convention, so identical inputs give bit-identical outputs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// General square complex matrix.
pub type ComplexMatrix = DMatrix<C64>;

/// Default Hermiticity tolerance, relative to the Frobenius norm.
pub const HERMIT_TOL: f64 = 1e-12;

/// Maximum number of cyclic Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 30;

/// Jacobi stops once the off-diagonal Frobenius norm is below this multiple of ‖A‖_F.
pub const JACOBI_OFF_TOL: f64 = 1e-14;

/// `matrix_exp` refuses inputs whose 1-norm exceeds this cap (e^700 is close to f64::MAX).
pub const EXP_NORM_CAP: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (defect {defect:.3e} exceeds {tol:.3e})")]
    NonHermitianInput { defect: f64, tol: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("Jacobi eigensolver did not converge in {sweeps} sweeps (off-diagonal norm {off:.3e})")]
    ConvergenceFailure { sweeps: usize, off: f64 },
    #[error("matrix exponential input norm {norm:.3e} exceeds cap {cap:.1}")]
    OverflowRisk { norm: f64, cap: f64 },
    #[error("scaled power needs a positive base, got {0}")]
    NonPositiveBase(f64),
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("row selection has {rows} indices but column selection has {cols}")]
    MismatchedSelection { rows: usize, cols: usize },
    #[error("not a permutation of 0..{0}")]
    InvalidPermutation(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is singular")]
    Singular,
}

/// An n×n complex matrix equal to its conjugate transpose.
///
/// The stored matrix is exactly Hermitian: construction validates the input
/// against a tolerance and then replaces it by `(A + A†)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        Self::with_tol(m, HERMIT_TOL)
    }

    pub fn with_tol(m: ComplexMatrix, tol: f64) -> Result<Self, LinalgError> {
        check_square(&m)?;
        check_finite(&m)?;
        let defect = hermiticity_defect(&m);
        let scale = m.norm().max(f64::MIN_POSITIVE);
        if defect > tol * scale && defect > 0.0 {
            return Err(LinalgError::NonHermitianInput {
                defect,
                tol: tol * scale,
            });
        }
        Ok(Self::symmetrize(m))
    }

    /// Projects any square matrix onto Herm(n) by `(M + M†)/2`.
    pub fn symmetrize(m: ComplexMatrix) -> Self {
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let mut h = h;
        for i in 0..h.nrows() {
            h[(i, i)] = C64::new(h[(i, i)].re, 0.0);
        }
        HermitianMatrix(h)
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        HermitianMatrix(diag_real(d))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(ComplexMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest eigenvalue modulus.
    pub fn spectral_norm(&self) -> Result<f64, LinalgError> {
        let e = herm_eigen(self)?;
        Ok(e.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    pub fn scale(&self, c: f64) -> Self {
        HermitianMatrix(&self.0 * C64::new(c, 0.0))
    }

    /// `A + c·Id`.
    pub fn shift(&self, c: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += C64::new(c, 0.0);
        }
        HermitianMatrix(m)
    }

    /// `P·A·P` with P the anti-diagonal permutation.
    pub fn flipped(&self) -> Self {
        HermitianMatrix(flip(&self.0))
    }

    /// Leading k×k principal submatrix.
    pub fn leading(&self, k: usize) -> Self {
        HermitianMatrix(self.0.view((0, 0), (k, k)).into_owned())
    }

    /// The n² real coordinates: diagonal first, then (re, im) of each entry above it, row by row.
    pub fn to_real_coords(&self) -> Vec<f64> {
        let n = self.dim();
        let mut v = Vec::with_capacity(n * n);
        v.extend((0..n).map(|i| self.0[(i, i)].re));
        for i in 0..n {
            for j in (i + 1)..n {
                v.push(self.0[(i, j)].re);
                v.push(self.0[(i, j)].im);
            }
        }
        v
    }

    /// Inverse of [`HermitianMatrix::to_real_coords`]; `v` must have length n².
    pub fn from_real_coords(n: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), n * n, "real coordinate vector has wrong length");
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(v[i], 0.0);
        }
        let mut p = n;
        for i in 0..n {
            for j in (i + 1)..n {
                let z = C64::new(v[p], v[p + 1]);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
                p += 2;
            }
        }
        HermitianMatrix(m)
    }

    /// Unitary conjugation `U⁻¹·A·U`, re-symmetrized.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Self, LinalgError> {
        let au = &self.0 * u;
        let x = solve(u, &au)?;
        Ok(Self::symmetrize(x))
    }
}

impl std::ops::Index<(usize, usize)> for HermitianMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors; the largest-modulus
    /// component of each column is real and positive.
    pub vectors: ComplexMatrix,
    pub sweeps: usize,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = diag_real(&self.values);
        &self.vectors * d * self.vectors.adjoint()
    }

    /// `V·diag(f(λ))·V†`.
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn herm_eigen(a: &HermitianMatrix) -> Result<EigenDecomposition, LinalgError> {
    jacobi(a.matrix())
}

/// Like [`herm_eigen`] but for an unvalidated matrix.
pub fn herm_eigen_matrix(m: &ComplexMatrix) -> Result<EigenDecomposition, LinalgError> {
    let h = HermitianMatrix::new(m.clone())?;
    herm_eigen(&h)
}

fn jacobi(m: &ComplexMatrix) -> Result<EigenDecomposition, LinalgError> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = ComplexMatrix::identity(n, n);
    let scale = a.norm();
    let target = JACOBI_OFF_TOL * scale;
    let mut sweeps = 0;

    loop {
        let off = off_diagonal_norm(&a);
        if off <= target {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::ConvergenceFailure { sweeps, off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut big = 0.0_f64;
        for i in 0..n {
            big = big.max(v[(i, src)].norm());
        }
        // first component within rounding of the maximum fixes the phase
        let pivot = (0..n)
            .find(|&i| v[(i, src)].norm() >= big * (1.0 - 1e-12))
            .unwrap_or(0);
        let pv = v[(pivot, src)];
        let phase = if pv.norm() > 0.0 {
            pv.conj() / pv.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            vectors[(i, col)] = v[(i, src)] * phase;
        }
        vectors[(pivot, col)] = C64::new(vectors[(pivot, col)].re, 0.0);
    }
    Ok(EigenDecomposition {
        values,
        vectors,
        sweeps,
    })
}

fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let n = a.nrows();
    let apq = a[(p, q)];
    let b = apq.norm();
    if b == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let e = apq / b;
    let ec = e.conj();
    let tau = (aqq - app) / (2.0 * b);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // U = [[c, s], [-s·e*, c·e*]] on the (p, q) plane; A ← U†AU, V ← VU.
    for k in 0..n {
        let x = a[(k, p)];
        let y = a[(k, q)];
        a[(k, p)] = x * c - y * ec * s;
        a[(k, q)] = x * s + y * ec * c;
    }
    for k in 0..n {
        let x = a[(p, k)];
        let y = a[(q, k)];
        a[(p, k)] = x * c - y * e * s;
        a[(q, k)] = x * s + y * e * c;
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
    for k in 0..n {
        let x = v[(k, p)];
        let y = v[(k, q)];
        v[(k, p)] = x * c - y * ec * s;
        v[(k, q)] = x * s + y * ec * c;
    }
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exp(m: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    check_square(m)?;
    check_finite(m)?;
    let n = m.nrows();
    let norm1 = one_norm(m);
    if norm1 > EXP_NORM_CAP {
        return Err(LinalgError::OverflowRisk {
            norm: norm1,
            cap: EXP_NORM_CAP,
        });
    }
    let id = ComplexMatrix::identity(n, n);
    if norm1 == 0.0 {
        return Ok(id);
    }
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m * C64::new(2f64.powi(-s), 0.0);
    let b = |k: usize| C64::new(PADE13[k], 0.0);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = &a
        * (&a6 * inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let num = &v + &u;
    let den = &v - &u;
    let mut r = solve(&den, &num)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `exp(c·H)` for Hermitian H via its eigen-decomposition.
pub fn exp_hermitian(h: &HermitianMatrix, c: C64) -> Result<ComplexMatrix, LinalgError> {
    let e = herm_eigen(h)?;
    Ok(e.apply(|l| (c * l).exp()))
}

/// `x^{s·M} := exp(ln(x)·s·M)` for Hermitian M and x > 0.
///
/// With `s = 1/(2πι)` the exponent is anti-Hermitian and the result unitary.
pub fn scaled_power(m: &HermitianMatrix, x: f64, s: C64) -> Result<ComplexMatrix, LinalgError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(LinalgError::NonPositiveBase(x));
    }
    scaled_power_log(m, C64::new(x.ln(), 0.0), s)
}

/// `exp(log_x·s·M)` where `log_x` is a logarithm already chosen by the caller.
pub fn scaled_power_log(
    m: &HermitianMatrix,
    log_x: C64,
    s: C64,
) -> Result<ComplexMatrix, LinalgError> {
    let e = herm_eigen(m)?;
    let c = log_x * s;
    Ok(e.apply(|l| (c * l).exp()))
}

/// The scalar `1/(2πι)`.
pub fn inv_two_pi_i() -> C64 {
    C64::new(0.0, -1.0 / (2.0 * std::f64::consts::PI))
}

/// Keeps the upper-left k×k block and the diagonal of A, zeroing the rest.
pub fn delta_k(a: &HermitianMatrix, k: usize) -> Result<HermitianMatrix, LinalgError> {
    let n = a.dim();
    if k > n {
        return Err(LinalgError::IndexOutOfRange { index: k, dim: n });
    }
    Ok(HermitianMatrix(block_mask(a.matrix(), |i, j| {
        i == j || (i < k && j < k)
    })))
}

/// Keeps the lower-right k×k block and the diagonal of A, zeroing the rest.
pub fn eta_k(a: &HermitianMatrix, k: usize) -> Result<HermitianMatrix, LinalgError> {
    let n = a.dim();
    if k > n {
        return Err(LinalgError::IndexOutOfRange { index: k, dim: n });
    }
    let lo = n - k;
    Ok(HermitianMatrix(block_mask(a.matrix(), |i, j| {
        i == j || (i >= lo && j >= lo)
    })))
}

fn block_mask(m: &ComplexMatrix, keep: impl Fn(usize, usize) -> bool) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        if keep(i, j) {
            m[(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Determinant of the submatrix with the given (0-based) rows and columns,
/// by LU with partial pivoting. The empty selection has determinant 1.
pub fn minor_det(m: &ComplexMatrix, rows: &[usize], cols: &[usize]) -> Result<C64, LinalgError> {
    if rows.len() != cols.len() {
        return Err(LinalgError::MismatchedSelection {
            rows: rows.len(),
            cols: cols.len(),
        });
    }
    for &i in rows {
        if i >= m.nrows() {
            return Err(LinalgError::IndexOutOfRange {
                index: i,
                dim: m.nrows(),
            });
        }
    }
    for &j in cols {
        if j >= m.ncols() {
            return Err(LinalgError::IndexOutOfRange {
                index: j,
                dim: m.ncols(),
            });
        }
    }
    let k = rows.len();
    let mut s = ComplexMatrix::from_fn(k, k, |i, j| m[(rows[i], cols[j])]);
    Ok(lu_det_in_place(&mut s))
}

fn lu_det_in_place(s: &mut ComplexMatrix) -> C64 {
    let k = s.nrows();
    let mut det = C64::new(1.0, 0.0);
    for c in 0..k {
        let mut piv = c;
        for r in (c + 1)..k {
            if s[(r, c)].norm() > s[(piv, c)].norm() {
                piv = r;
            }
        }
        if s[(piv, c)].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != c {
            s.swap_rows(piv, c);
            det = -det;
        }
        let d = s[(c, c)];
        det *= d;
        for r in (c + 1)..k {
            let f = s[(r, c)] / d;
            for j in (c + 1)..k {
                let v = s[(c, j)];
                s[(r, j)] -= f * v;
            }
        }
    }
    det
}

/// Anti-diagonal permutation matrix P with `P[(i, n-1-i)] = 1`.
pub fn antidiag_p(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |i, j| {
        if i + j + 1 == n {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `P·M·P` computed by index reversal: `(PMP)[i][j] = M[n-1-i][n-1-j]`.
pub fn flip(m: &ComplexMatrix) -> ComplexMatrix {
    let n = m.nrows();
    ComplexMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)])
}

/// A permutation σ of `0..n`, acting on basis vectors by `e_i ↦ e_{σ(i)}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self, LinalgError> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &s in &images {
            if s >= n || seen[s] {
                return Err(LinalgError::InvalidPermutation(n));
            }
            seen[s] = true;
        }
        Ok(Permutation(images))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    /// The permutation listing indices of `values` in ascending order, so that
    /// `values[σ(0)] < values[σ(1)] < ...`.
    pub fn sorting(values: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        Permutation(idx)
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &s)| i == s)
    }
}

/// Permutation matrix with `P_σ e_i = e_{σ(i)}`.
pub fn perm_matrix(sigma: &Permutation) -> ComplexMatrix {
    let n = sigma.len();
    let mut p = ComplexMatrix::zeros(n, n);
    for (i, &s) in sigma.images().iter().enumerate() {
        p[(s, i)] = C64::new(1.0, 0.0);
    }
    p
}

pub fn diag_real(d: &[f64]) -> ComplexMatrix {
    let n = d.len();
    ComplexMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(d[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn diag_complex(d: &[C64]) -> ComplexMatrix {
    let n = d.len();
    ComplexMatrix::from_fn(n, n, |i, j| if i == j { d[i] } else { C64::new(0.0, 0.0) })
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

/// `max |M_ij − conj(M_ji)|`.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut d = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    d
}

/// Frobenius norm of the strictly lower triangle.
pub fn strict_lower_norm(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..i {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Frobenius norm of the strictly upper triangle.
pub fn strict_upper_norm(m: &ComplexMatrix) -> f64 {
    strict_lower_norm(&m.transpose())
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0_f64, |a, z| a.max(z.norm()))
}

pub fn one_norm(m: &ComplexMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `A·X = B` by LU with partial pivoting.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    if a.nrows() != b.nrows() {
        return Err(LinalgError::DimensionMismatch(a.nrows(), b.nrows()));
    }
    a.clone().lu().solve(b).ok_or(LinalgError::Singular)
}

pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let n = a.nrows();
    solve(a, &ComplexMatrix::identity(n, n))
}

pub fn check_square(m: &ComplexMatrix) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

pub fn check_finite(m: &ComplexMatrix) -> Result<(), LinalgError> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}
