//! Closed-form sub-diagonal Stokes entries from the Gelfand–Tsetlin pattern
//! of the asymptotic data, and the anti-diagonal transform between the two
//! caterpillar zones.

use std::f64::consts::PI;

use thiserror::Error;

use crate::linalg::{flip, herm_eigen, minor_det, ComplexMatrix, HermitianMatrix, LinalgError, C64};
use crate::special::{log_gamma, SpecialError};
use crate::stokes::StokesPair;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("degenerate spectrum at level {level}: eigenvalues {i} and {l} differ by {gap:.3e}")]
    DegenerateSpectrum {
        level: usize,
        i: usize,
        l: usize,
        gap: f64,
    },
    #[error("index out of range: level {k}, position {i}, dimension {n}")]
    IndexOutOfRange { k: usize, i: usize, n: usize },
}

/// Eigenvalues λ^{(k)}_1 ≤ ... ≤ λ^{(k)}_k of every leading k×k block.
#[derive(Debug, Clone, PartialEq)]
pub struct GTPattern {
    /// `levels[k]` holds level k; `levels[0]` is empty.
    pub levels: Vec<Vec<f64>>,
    /// `extensions[k]` = λ^{(k)}_{k+1} = Σ λ^{(k+1)} − Σ λ^{(k)} for k = 0..n−1.
    pub extensions: Vec<f64>,
}

impl GTPattern {
    pub fn dim(&self) -> usize {
        self.levels.len() - 1
    }

    /// Largest violation of λ^{(k+1)}_i ≤ λ^{(k)}_i ≤ λ^{(k+1)}_{i+1}.
    pub fn interlacing_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for k in 1..self.dim() {
            let (lo, hi) = (&self.levels[k], &self.levels[k + 1]);
            for i in 0..k {
                worst = worst.max(hi[i] - lo[i]).max(lo[i] - hi[i + 1]);
            }
        }
        worst
    }
}

pub fn gt_pattern(a: &HermitianMatrix) -> Result<GTPattern, ClosedError> {
    let n = a.dim();
    let mut levels = vec![Vec::new()];
    for k in 1..=n {
        levels.push(herm_eigen(&a.leading(k))?.values);
    }
    let sums: Vec<f64> = levels.iter().map(|l| l.iter().sum()).collect();
    let extensions = (0..n).map(|k| sums[k + 1] - sums[k]).collect();
    Ok(GTPattern { levels, extensions })
}

/// Checks that no level has two eigenvalues closer than `tol`
/// (default 1e−8 times the spread of the top level).
pub fn genericity_check(pat: &GTPattern, tol: Option<f64>) -> Result<(), ClosedError> {
    let n = pat.dim();
    let top = &pat.levels[n];
    let spread = if n > 0 { top[n - 1] - top[0] } else { 0.0 };
    let tol = tol.unwrap_or(1e-8 * spread);
    for (level, vals) in pat.levels.iter().enumerate() {
        for i in 0..vals.len() {
            for l in (i + 1)..vals.len() {
                let gap = (vals[l] - vals[i]).abs();
                if gap <= tol {
                    return Err(ClosedError::DegenerateSpectrum { level, i, l, gap });
                }
            }
        }
    }
    Ok(())
}

/// m^{(k)}_i for 1 ≤ k ≤ n−1 and 0-based `i` < k:
/// Σ_j (−1)^{k−j} Δ^{1..ĵ..k}_{1..k−1}(λ·Id − A) / Π_{l≠i}(λ − λ^{(k)}_l) · A_{j,k+1}, λ = λ^{(k)}_i.
pub fn m_coeff(a: &HermitianMatrix, pat: &GTPattern, k: usize, i: usize) -> Result<C64, ClosedError> {
    let n = a.dim();
    if k == 0 || k >= n || i >= k {
        return Err(ClosedError::IndexOutOfRange { k, i, n });
    }
    let level = &pat.levels[k];
    let lam = level[i];
    let mut den = 1.0;
    for (l, &x) in level.iter().enumerate() {
        if l != i {
            let d = lam - x;
            if d == 0.0 {
                return Err(ClosedError::DegenerateSpectrum {
                    level: k,
                    i,
                    l,
                    gap: 0.0,
                });
            }
            den *= d;
        }
    }
    let shifted = ComplexMatrix::identity(n, n) * C64::new(lam, 0.0) - a.matrix();
    let cols: Vec<usize> = (0..k - 1).collect();
    let mut sum = C64::new(0.0, 0.0);
    for j in 1..=k {
        let rows: Vec<usize> = (1..=k).filter(|&r| r != j).map(|r| r - 1).collect();
        let minor = minor_det(&shifted, &rows, &cols)?;
        let sign = if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 };
        sum += minor * a[(j - 1, k)] * sign;
    }
    Ok(sum / den)
}

/// (S_+)_{k,k+1} and (S_−)_{k+1,k} for k = 1..n−1, stored at index k−1.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdiagonalData {
    pub s_plus: Vec<C64>,
    pub s_minus: Vec<C64>,
}

impl SubdiagonalData {
    pub fn len(&self) -> usize {
        self.s_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_plus.is_empty()
    }

    /// Reads the first off-diagonals of a Stokes pair.
    pub fn from_matrices(s_plus: &ComplexMatrix, s_minus: &ComplexMatrix) -> Self {
        let n = s_plus.nrows();
        SubdiagonalData {
            s_plus: (1..n).map(|k| s_plus[(k - 1, k)]).collect(),
            s_minus: (1..n).map(|k| s_minus[(k, k - 1)]).collect(),
        }
    }
}

/// Γ-ratio weight of eigenvalue i at level k, as exp of summed log-Gamma values.
fn gamma_weight(pat: &GTPattern, k: usize, i: usize, sign: f64) -> Result<C64, ClosedError> {
    let li = pat.levels[k][i];
    // 1 + x/(2πι) = 1 − ι·x/(2π)
    let lg = |x: f64| log_gamma(C64::new(1.0, -sign * x / (2.0 * PI)));
    let mut s = C64::new(0.0, 0.0);
    for (l, &x) in pat.levels[k].iter().enumerate() {
        if l != i {
            s += lg(x - li)? * 2.0;
        }
    }
    for &x in &pat.levels[k + 1] {
        s -= lg(x - li)?;
    }
    for &x in &pat.levels[k - 1] {
        s -= lg(x - li)?;
    }
    Ok(s.exp())
}

pub fn closed_subdiagonals(a_inf: &HermitianMatrix) -> Result<SubdiagonalData, ClosedError> {
    let n = a_inf.dim();
    let pat = gt_pattern(a_inf)?;
    if n > 1 {
        genericity_check(&pat, None)?;
    }
    closed_subdiagonals_with(a_inf, &pat)
}

/// Same as [`closed_subdiagonals`] with a precomputed, already checked pattern.
pub fn closed_subdiagonals_with(a_inf: &HermitianMatrix, pat: &GTPattern) -> Result<SubdiagonalData, ClosedError> {
    let n = a_inf.dim();
    let mut s_plus = Vec::with_capacity(n.saturating_sub(1));
    let mut s_minus = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let pre = ((pat.extensions[k - 1] - pat.extensions[k]) / 4.0).exp();
        let mut plus = C64::new(0.0, 0.0);
        let mut minus = C64::new(0.0, 0.0);
        for i in 0..k {
            let m = m_coeff(a_inf, pat, k, i)?;
            plus += gamma_weight(pat, k, i, 1.0)? * m;
            minus += gamma_weight(pat, k, i, -1.0)? * m.conj();
        }
        s_plus.push(plus * pre);
        s_minus.push(minus * pre);
    }
    Ok(SubdiagonalData { s_plus, s_minus })
}

/// The anti-diagonal transform M ↦ P·M·P with the plus and minus roles swapped.
pub trait TransformMinus: Sized {
    fn transform_minus(&self) -> Self;
}

impl TransformMinus for SubdiagonalData {
    fn transform_minus(&self) -> Self {
        SubdiagonalData {
            s_plus: self.s_minus.iter().rev().cloned().collect(),
            s_minus: self.s_plus.iter().rev().cloned().collect(),
        }
    }
}

impl TransformMinus for StokesPair {
    fn transform_minus(&self) -> Self {
        let n = self.dim();
        let s = self.sigma.images();
        let sigma = crate::linalg::Permutation::new((0..n).map(|i| n - 1 - s[n - 1 - i]).collect())
            .expect("reflected permutation");
        StokesPair {
            s_plus: flip(&self.s_minus),
            s_minus: flip(&self.s_plus),
            sigma,
            diagnostics: self.diagnostics.clone(),
        }
    }
}

pub fn transform_minus<T: TransformMinus>(x: &T) -> T {
    x.transform_minus()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Permutation;
    use crate::sample::random_hermitian;
    use crate::special::gamma;
    use crate::stokes::{LinearSystem, StokesOptions, stokes_numeric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn herm(rows: &[&[C64]]) -> HermitianMatrix {
        let n = rows.len();
        HermitianMatrix::new(ComplexMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn pattern_of_diagonal() {
        let p = gt_pattern(&HermitianMatrix::from_real_diagonal(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(p.levels, vec![vec![], vec![1.0], vec![1.0, 2.0], vec![1.0, 2.0, 3.0]]);
        assert_eq!(p.extensions, vec![1.0, 2.0, 3.0]);
        assert!(genericity_check(&p, None).is_ok());
    }

    #[test]
    fn pattern_of_swap() {
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        let p = gt_pattern(&herm(&[&[z, o], &[o, z]])).unwrap();
        assert_eq!(p.levels[1], vec![0.0]);
        assert!((p.levels[2][0] + 1.0).abs() < 1e-15 && (p.levels[2][1] - 1.0).abs() < 1e-15);
        assert!(p.extensions[1].abs() < 1e-15);
    }

    #[test]
    fn interlacing_and_telescoping() {
        let mut g = rng(1);
        for _ in 0..300 {
            let n = g.random_range(1..=6);
            let a = random_hermitian(n, 2.0, &mut g);
            let p = gt_pattern(&a).unwrap();
            assert!(p.interlacing_defect() <= 1e-10);
            for k in 1..=n {
                let tr: f64 = a.diagonal()[..k].iter().sum();
                let s: f64 = p.levels[k].iter().sum();
                assert!((tr - s).abs() <= 1e-10);
                assert!((p.extensions[k - 1] - a.diagonal()[k - 1]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn genericity_examples() {
        let p = gt_pattern(&HermitianMatrix::from_real_diagonal(&[1.0, 1.0, 2.0])).unwrap();
        assert!(matches!(
            genericity_check(&p, None),
            Err(ClosedError::DegenerateSpectrum { level: 2, .. })
        ));
        let b = c(0.4, 0.3);
        let p = gt_pattern(&herm(&[&[c(0.5, 0.0), b], &[b.conj(), c(0.5, 0.0)]])).unwrap();
        assert!(genericity_check(&p, None).is_ok());
        let p = gt_pattern(&HermitianMatrix::from_real_diagonal(&[0.3, 0.3])).unwrap();
        assert!(genericity_check(&p, None).is_err());
    }

    #[test]
    fn m_coeff_conventions() {
        let mut g = rng(2);
        let a = random_hermitian(3, 1.0, &mut g);
        let p = gt_pattern(&a).unwrap();
        let m11 = m_coeff(&a, &p, 1, 0).unwrap();
        assert!((m11 - a[(0, 1)]).norm() < 1e-15);
        assert!(matches!(m_coeff(&a, &p, 3, 0), Err(ClosedError::IndexOutOfRange { .. })));
        assert!(matches!(m_coeff(&a, &p, 2, 2), Err(ClosedError::IndexOutOfRange { .. })));

        let d = HermitianMatrix::from_real_diagonal(&[0.1, 0.7, 1.9]);
        let pd = gt_pattern(&d).unwrap();
        for k in 1..3 {
            for i in 0..k {
                assert_eq!(m_coeff(&d, &pd, k, i).unwrap(), c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn m_coeff_level_two_brute_force() {
        let mut g = rng(3);
        for _ in 0..10 {
            let a = random_hermitian(3, 1.5, &mut g);
            let p = gt_pattern(&a).unwrap();
            for i in 0..2 {
                let lam = p.levels[2][i];
                let other = p.levels[2][1 - i];
                // rows {2} (j = 1) and {1} (j = 2), column {1}, of λ − A
                let minor_j1 = c(0.0, 0.0) - a[(1, 0)];
                let minor_j2 = c(lam, 0.0) - a[(0, 0)];
                let want = (-minor_j1 * a[(0, 2)] + minor_j2 * a[(1, 2)]) / (lam - other);
                let got = m_coeff(&a, &p, 2, i).unwrap();
                assert!((got - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn closed_form_edge_cases() {
        let one = closed_subdiagonals(&HermitianMatrix::from_real_diagonal(&[0.4])).unwrap();
        assert!(one.is_empty());
        let d = closed_subdiagonals(&HermitianMatrix::from_real_diagonal(&[0.4, -1.0, 2.0])).unwrap();
        assert!(d.s_plus.iter().chain(&d.s_minus).all(|z| *z == c(0.0, 0.0)));
        assert!(matches!(
            closed_subdiagonals(&HermitianMatrix::from_real_diagonal(&[1.0, 1.0, 2.0])),
            Err(ClosedError::DegenerateSpectrum { .. })
        ));
    }

    #[test]
    fn two_by_two_instantiation() {
        let (a11, a22, b) = (0.6, -0.3, c(0.25, -0.4));
        let a = herm(&[&[c(a11, 0.0), b], &[b.conj(), c(a22, 0.0)]]);
        let p = gt_pattern(&a).unwrap();
        let tpi = c(0.0, 2.0 * PI);
        let (l1, l2) = (p.levels[2][0], p.levels[2][1]);
        let want = (a11 - a22) / 4.0;
        let want = c(want.exp(), 0.0) * b
            / (gamma(c(1.0, 0.0) + c(l1 - a11, 0.0) / tpi).unwrap()
                * gamma(c(1.0, 0.0) + c(l2 - a11, 0.0) / tpi).unwrap());
        let got = closed_subdiagonals(&a).unwrap();
        assert!((got.s_plus[0] - want).norm() < 1e-13);
        assert!((got.s_minus[0] - want.conj()).norm() < 1e-13);
    }

    #[test]
    fn conjugation_and_shift_invariance() {
        let mut g = rng(4);
        for n in 2..=5 {
            let a = random_hermitian(n, 2.0, &mut g);
            let s = closed_subdiagonals(&a).unwrap();
            for (p, m) in s.s_plus.iter().zip(&s.s_minus) {
                assert!((p.conj() - m).norm() <= 1e-12 * p.norm().max(1.0));
            }
            let t = closed_subdiagonals(&a.shift(0.83)).unwrap();
            for (x, y) in s.s_plus.iter().zip(&t.s_plus) {
                assert!((x - y).norm() <= 1e-10 * x.norm().max(1.0));
            }
        }
    }

    #[test]
    fn transform_is_an_involution() {
        let data = SubdiagonalData {
            s_plus: vec![c(1.0, 2.0), c(3.0, 4.0)],
            s_minus: vec![c(5.0, 6.0), c(7.0, 8.0)],
        };
        let t = transform_minus(&data);
        assert_eq!(t.s_plus, vec![c(7.0, 8.0), c(5.0, 6.0)]);
        assert_eq!(transform_minus(&t), data);

        let mut g = rng(6);
        let a = random_hermitian(3, 1.0, &mut g);
        let sys = LinearSystem::new(vec![0.4, -1.0, 1.0], a).unwrap();
        let pair = stokes_numeric(&sys, &StokesOptions::default()).unwrap();
        let t = pair.transform_minus();
        assert_eq!(t.transform_minus(), pair);
        assert!(crate::linalg::strict_lower_norm(&t.s_plus) < 1e-8 * t.s_plus.norm());
        assert_eq!(t.s_plus[(0, 1)], pair.s_minus[(2, 1)]);
        assert_eq!(t.sigma, Permutation::sorting(&[-1.0, 1.0, -0.4]));
    }
}
