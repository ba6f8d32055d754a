//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

/// `σ_k` by enumerating all subsets of size `k`.
pub fn subset_sigma(values: &[f64], k: usize) -> f64 {
    subset_sigma_excluding(values, k, &[])
}

pub fn subset_sigma_excluding(values: &[f64], k: usize, excluded: &[usize]) -> f64 {
    let n = values.len();
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k || excluded.iter().any(|&e| mask & (1 << e) != 0) {
            continue;
        }
        total += (0..n).filter(|i| mask & (1 << i) != 0).map(|i| values[i]).product::<f64>();
    }
    total
}

/// Sum of the absolute values of the enumerated products: the natural scale
/// for relative comparisons of `σ_k` under cancellation.
pub fn subset_sigma_abs(values: &[f64], k: usize, excluded: &[usize]) -> f64 {
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    subset_sigma_excluding(&abs, k, excluded)
}

/// `σ_{l+2}/σ_{l+1}` of the eigenvalues of a symmetric matrix.
pub fn quotient(w: &DMatrix<f64>, l: usize) -> f64 {
    let ev = SymmetricEigen::new(w.clone()).eigenvalues;
    let v: Vec<f64> = ev.iter().copied().collect();
    subset_sigma(&v, l + 2) / subset_sigma(&v, l + 1)
}

/// Symmetric basis `E_ii`, `E_ij + E_ji` (i < j).
pub fn sym_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = vec![];
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

/// Least-squares slope of `log y` on `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
