//! Seeded random inputs for tests, the CLI, and acceptance runs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::flow::{PathInU, RegularPoint};
use crate::linalg::{ComplexMatrix, HermitianMatrix, C64};

/// Gaussian Hermitian matrix rescaled to spectral norm `norm`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, norm: f64, rng: &mut R) -> HermitianMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            m[(i, j)] = C64::new(re, im);
        }
    }
    let h = HermitianMatrix::symmetrize(m);
    let s = h.spectral_norm().unwrap_or(0.0);
    if s > 0.0 {
        h.scale(norm / s)
    } else {
        h
    }
}

/// Real diagonal matrix with entries uniform in `[-bound, bound]`.
pub fn random_real_diagonal<R: Rng + ?Sized>(n: usize, bound: f64, rng: &mut R) -> HermitianMatrix {
    let d = Uniform::new_inclusive(-bound, bound).expect("valid range");
    let v: Vec<f64> = (0..n).map(|_| d.sample(rng)).collect();
    HermitianMatrix::from_real_diagonal(&v)
}

/// Increasing point with consecutive gaps uniform in `[lo, hi]`, starting near zero.
pub fn random_regular_point<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> RegularPoint {
    let g = Uniform::new_inclusive(lo, hi).expect("valid range");
    let start = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let mut u = Vec::with_capacity(n);
    let mut x: f64 = start.sample(rng);
    for _ in 0..n {
        u.push(x);
        x += g.sample(rng);
    }
    RegularPoint::new(u).expect("positive gaps")
}

/// Straight path of Euclidean length `length` from `start` in a random direction
/// that keeps every gap at least half its starting value.
pub fn random_path<R: Rng + ?Sized>(start: &RegularPoint, length: f64, rng: &mut R) -> PathInU {
    let n = start.dim();
    let u0 = start.coords();
    loop {
        let mut d: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        d.iter_mut().for_each(|x| *x *= length / norm);
        let u1: Vec<f64> = u0.iter().zip(&d).map(|(a, b)| a + b).collect();
        let ok = (1..n).all(|k| u1[k] - u1[k - 1] >= 0.5 * (u0[k] - u0[k - 1]));
        if ok {
            let end = RegularPoint::new(u1).expect("checked gaps");
            return PathInU::new(vec![start.clone(), end]).expect("regular endpoints");
        }
    }
}
