//! Small dense eigenvalue helpers shared by the oracles and the solver.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

pub fn is_real(m: &DMatrix<Complex64>) -> bool {
    m.iter().all(|v| v.im == 0.0)
}

pub fn real_part(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|v| v.re)
}

/// Largest entry of `|M - M^†|`.
pub fn hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn hermitian_min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if is_real(m) {
        return symmetric_min_eigenvalue(&real_part(m));
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of a Hermitian operator given only its action, by
/// Lanczos with full reorthogonalization.
pub fn lanczos_min_eigenvalue<F>(dim: usize, apply: F, tol: f64) -> f64
where
    F: Fn(&[Complex64], &mut [Complex64]),
{
    let max_steps = dim.min(400);
    // Deterministic, dense start vector.
    let mut v: Vec<Complex64> = (0..dim)
        .map(|i| {
            let t = (i as f64 + 1.0) * 0.618_033_988_749_895;
            Complex64::new(1.0 + (t - t.floor()), 0.25 * (3.7 * t).sin())
        })
        .collect();
    normalize(&mut v);

    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    let mut last = f64::INFINITY;

    for step in 0..max_steps {
        apply(&v, &mut w);
        let alpha = dot(&v, &w).re;
        basis.push(v.clone());
        alphas.push(alpha);
        // Full reorthogonalization against the whole Krylov basis, twice.
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= proj * bi;
                }
            }
        }
        let beta = norm(&w);

        if step % 5 == 4 || beta < 1e-12 || step + 1 == max_steps {
            let current = tridiagonal_min(&alphas, &betas);
            if (current - last).abs() < tol || beta < 1e-12 {
                return current;
            }
            last = current;
        }
        betas.push(beta);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / beta;
        }
    }
    tridiagonal_min(&alphas, &betas[..alphas.len() - 1])
}

fn tridiagonal_min(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    symmetric_min_eigenvalue(&t)
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(a: &mut [Complex64]) {
    let n = norm(a);
    for x in a.iter_mut() {
        *x /= n;
    }
}
