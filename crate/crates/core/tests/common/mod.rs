//! Dense reference constructions shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use circembed::covariance::StationaryKernel;
use circembed::embedding::{multi_index, rho_ext, Embedding, GridSpec};
use nalgebra::{DMatrix, SymmetricEigen};

/// Dense extended matrix with entries `ρ^ext(h0 (k - k'))` over `Z^d_{2m}`.
pub fn dense_extended<K: StationaryKernel + ?Sized>(kernel: &K, emb: &Embedding) -> DMatrix<f64> {
    let d = emb.grid().d();
    let n = emb.n();
    let s = emb.s();
    let h0 = emb.grid().h0();
    let idx: Vec<Vec<usize>> = (0..s).map(|i| multi_index(i, n, d)).collect();
    DMatrix::from_fn(s, s, |i, j| {
        let x: Vec<f64> = (0..d)
            .map(|a| h0 * (idx[i][a] as f64 - idx[j][a] as f64))
            .collect();
        rho_ext(kernel, &x, emb.ell())
    })
}

/// Dense grid covariance `ρ(h0 (k - k'))` over `{0..m0}^d`.
pub fn dense_grid<K: StationaryKernel + ?Sized>(kernel: &K, grid: GridSpec) -> DMatrix<f64> {
    let d = grid.d();
    let pts = grid.points();
    let h0 = grid.h0();
    let idx: Vec<Vec<usize>> = (0..pts).map(|i| multi_index(i, grid.m0() + 1, d)).collect();
    DMatrix::from_fn(pts, pts, |i, j| {
        let x: Vec<f64> = (0..d)
            .map(|a| h0 * (idx[i][a] as f64 - idx[j][a] as f64))
            .collect();
        kernel.rho(&x)
    })
}

/// Eigenvalues of a symmetric matrix in increasing order.
pub fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `Q = Re F + Im F` with `F_{jk} = s^{-1/2} exp(2πi j·k/n)`.
pub fn dense_q(emb: &Embedding) -> DMatrix<f64> {
    let d = emb.grid().d();
    let n = emb.n();
    let s = emb.s();
    let idx: Vec<Vec<usize>> = (0..s).map(|i| multi_index(i, n, d)).collect();
    let norm = 1.0 / (s as f64).sqrt();
    DMatrix::from_fn(s, s, |i, j| {
        let dot: usize = idx[i].iter().zip(&idx[j]).map(|(a, b)| a * b).sum();
        let t = 2.0 * PI * (dot % n) as f64 / n as f64;
        (t.cos() + t.sin()) * norm
    })
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
