//! Elementary symmetric functions of eigenvalues and the rank quotient
//! `q = σ_{l+2}/σ_{l+1}` with its first and second derivatives.
//!
//! Indices in this module are zero-based. Derivatives with respect to matrix
//! entries treat `W_ij` and `W_ji` as independent variables, so for a
//! diagonal `W` the second derivative `∂²f/∂W_ij∂W_km` is nonzero only on
//! the patterns `(ii,kk)` and `(ij,ji)`. [`DiagHessian`] stores exactly those.
//!
//! Second derivatives are only defined for eigenbasis (diagonal) input;
//! callers rotate general matrices first.

use crate::linalg::SpectralMatrix;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative off-diagonal mass above which a matrix is not treated as diagonal.
pub const DIAGONAL_TOL: f64 = 1e-10;

/// Floor added to the denominator of [`third_deriv_ratio`].
pub const RATIO_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymError {
    #[error("minors are taken with one or two excluded indices, got {0}")]
    BadExclusionCount(usize),
    #[error("excluded index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("excluded index {0} repeated")]
    RepeatedIndex(usize),
    #[error("second-derivative formulas need eigenbasis input (off-diagonal mass {0:e})")]
    NotDiagonal(f64),
    #[error("rank parameter l = {l} outside [0, {max}]")]
    InvalidRank { l: usize, max: usize },
    #[error("regularization must be nonnegative, got {0}")]
    NegativeEpsilon(f64),
    #[error("degenerate quotient: sigma_(l+1) = {denominator:e}, sigma_(l+2) = {numerator:e}")]
    DegenerateQuotient { numerator: f64, denominator: f64 },
    #[error("good set has {good} indices but l = {l}")]
    SplitMismatch { good: usize, l: usize },
}

/// `σ_k(λ)`. Zero for `k < 0` or `k > n`, one for `k = 0`.
///
/// Uses the product recurrence for the coefficients of `Π(1 + λ_i t)`.
pub fn elem_sym(k: i64, values: &[f64]) -> f64 {
    let n = values.len() as i64;
    if k < 0 || k > n {
        return 0.0;
    }
    if k == 0 {
        return 1.0;
    }
    let k = k as usize;
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (seen, &lam) in values.iter().enumerate() {
        let top = k.min(seen + 1);
        for j in (1..=top).rev() {
            e[j] += lam * e[j - 1];
        }
    }
    e[k]
}

/// All of `σ_0 .. σ_n`.
pub fn elem_sym_all(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (seen, &lam) in values.iter().enumerate() {
        for j in (1..=seen + 1).rev() {
            e[j] += lam * e[j - 1];
        }
    }
    e
}

fn without(values: &[f64], excluded: &[usize]) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded.contains(i))
        .map(|(_, &v)| v)
        .collect()
}

// unchecked minor used internally where indices are known valid
fn sig(k: i64, values: &[f64], excluded: &[usize]) -> f64 {
    if excluded.is_empty() {
        elem_sym(k, values)
    } else {
        elem_sym(k, &without(values, excluded))
    }
}

/// `σ_k` of the eigenvalues with one or two indices removed, i.e. `σ_k(W|i)`
/// or `σ_k(W|ij)` for diagonal `W`.
pub fn elem_sym_minor(k: i64, values: &[f64], excluded: &[usize]) -> Result<f64, SymError> {
    if excluded.is_empty() || excluded.len() > 2 {
        return Err(SymError::BadExclusionCount(excluded.len()));
    }
    for &i in excluded {
        if i >= values.len() {
            return Err(SymError::IndexOutOfRange { index: i, n: values.len() });
        }
    }
    if excluded.len() == 2 && excluded[0] == excluded[1] {
        return Err(SymError::RepeatedIndex(excluded[0]));
    }
    Ok(sig(k, values, excluded))
}

/// Second derivatives of a spectral function at a diagonal matrix.
///
/// `pair[(i, k)]` holds `f^{ii,kk}` (including `i = k`), `swap[(i, j)]`
/// holds `f^{ij,ji}` for `i ≠ j`. Every other entry is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagHessian {
    pub pair: DMatrix<f64>,
    pub swap: DMatrix<f64>,
}

impl DiagHessian {
    pub fn zeros(n: usize) -> Self {
        DiagHessian {
            pair: DMatrix::zeros(n, n),
            swap: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.pair.nrows()
    }

    /// Entry `f^{ij,km}`.
    pub fn get(&self, i: usize, j: usize, k: usize, m: usize) -> f64 {
        if i == j && k == m {
            self.pair[(i, k)]
        } else if i == m && j == k && i != j {
            self.swap[(i, j)]
        } else {
            0.0
        }
    }

    /// `Σ f^{ij,km} X_ij Y_km`.
    pub fn contract(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..n {
                acc += self.pair[(i, k)] * x[(i, i)] * y[(k, k)];
                if i != k {
                    acc += self.swap[(i, k)] * x[(i, k)] * y[(k, i)];
                }
            }
        }
        acc
    }

    /// Dense `n⁴` array, index `((i·n + j)·n + k)·n + m`.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for m in 0..n {
                        out[((i * n + j) * n + k) * n + m] = self.get(i, j, k, m);
                    }
                }
            }
        }
        out
    }
}

/// `∂σ_k/∂W`. In the eigenbasis this is `diag(σ_{k-1}(W|i))`.
pub fn sigma_grad(k: i64, w: &SpectralMatrix) -> DMatrix<f64> {
    let lam = w.eigenvalues();
    let d: Vec<f64> = (0..lam.len()).map(|i| sig(k - 1, lam, &[i])).collect();
    w.rotate_diag(&d)
}

fn require_diagonal(w: &SpectralMatrix) -> Result<Vec<f64>, SymError> {
    let mass = w.off_diagonal_mass();
    if mass > DIAGONAL_TOL {
        return Err(SymError::NotDiagonal(mass));
    }
    Ok(w.diag())
}

/// `∂²σ_k/∂W_ij∂W_km` at a diagonal matrix.
pub fn sigma_hess(k: i64, w: &SpectralMatrix) -> Result<DiagHessian, SymError> {
    let v = require_diagonal(w)?;
    let n = v.len();
    let mut h = DiagHessian::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let s = sig(k - 2, &v, &[i, j]);
                h.pair[(i, j)] = s;
                h.swap[(i, j)] = -s;
            }
        }
    }
    Ok(h)
}

fn check_rank(n: usize, l: usize, epsilon: f64) -> Result<(), SymError> {
    if n == 0 || l > n - 1 {
        return Err(SymError::InvalidRank { l, max: n.saturating_sub(1) });
    }
    if epsilon < 0.0 || epsilon.is_nan() {
        return Err(SymError::NegativeEpsilon(epsilon));
    }
    Ok(())
}

/// Tolerance below which `σ_k` of `n` values of magnitude at most `norm`
/// counts as zero: `1e-13·C(n,k)·norm^k`, homogeneous of degree `k`.
pub fn degenerate_tol(norm: f64, n: usize, k: usize) -> f64 {
    1e-13 * binomial(n, k) * norm.powi(k as i32)
}

fn shifted(values: &[f64], epsilon: f64) -> Vec<f64> {
    values.iter().map(|v| v + epsilon).collect()
}

/// `q_ε(W) = σ_{l+2}(W + εI)/σ_{l+1}(W + εI)`, extended by zero where both
/// vanish.
pub fn q_value(w: &SpectralMatrix, l: usize, epsilon: f64) -> Result<f64, SymError> {
    check_rank(w.n(), l, epsilon)?;
    let lam = shifted(w.eigenvalues(), epsilon);
    quotient(&lam, l)
}

fn quotient(lam: &[f64], l: usize) -> Result<f64, SymError> {
    let n = lam.len();
    let norm = lam.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let den = elem_sym(l as i64 + 1, lam);
    let num = elem_sym(l as i64 + 2, lam);
    if den.abs() <= degenerate_tol(norm, n, l + 1) {
        if num.abs() <= degenerate_tol(norm, n, l + 2) {
            Ok(0.0)
        } else {
            Err(SymError::DegenerateQuotient { numerator: num, denominator: den })
        }
    } else {
        Ok(num / den)
    }
}

/// `φ_ε = σ_{l+1}(W + εI) + q_ε(W)`.
pub fn phi_value(w: &SpectralMatrix, l: usize, epsilon: f64) -> Result<f64, SymError> {
    check_rank(w.n(), l, epsilon)?;
    let lam = shifted(w.eigenvalues(), epsilon);
    Ok(elem_sym(l as i64 + 1, &lam) + quotient(&lam, l)?)
}

fn positive_denominator(lam: &[f64], l: usize) -> Result<(f64, f64), SymError> {
    let norm = lam.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let s1 = elem_sym(l as i64 + 1, lam);
    let s2 = elem_sym(l as i64 + 2, lam);
    if s1 <= degenerate_tol(norm, lam.len(), l + 1) {
        return Err(SymError::DegenerateQuotient { numerator: s2, denominator: s1 });
    }
    Ok((s1, s2))
}

/// `∂q_ε/∂W`. Diagonal in the eigenbasis with entries
/// `(σ_{l+1}σ_{l+1}(W|i) − σ_{l+2}σ_l(W|i))/σ²_{l+1}`.
pub fn q_grad(w: &SpectralMatrix, l: usize, epsilon: f64) -> Result<DMatrix<f64>, SymError> {
    check_rank(w.n(), l, epsilon)?;
    let lam = shifted(w.eigenvalues(), epsilon);
    let (s1, s2) = positive_denominator(&lam, l)?;
    let l = l as i64;
    let d: Vec<f64> = (0..lam.len())
        .map(|i| (s1 * sig(l + 1, &lam, &[i]) - s2 * sig(l, &lam, &[i])) / (s1 * s1))
        .collect();
    Ok(w.rotate_diag(&d))
}

/// `∂²q_ε/∂W_ij∂W_km` at a diagonal matrix.
pub fn q_hess(w: &SpectralMatrix, l: usize, epsilon: f64) -> Result<DiagHessian, SymError> {
    q_hess_impl(w, l, epsilon, false)
}

// `flip_pure_diagonal` negates the i=j=k=m case; used only by the lemma
// suite's mutation mode.
pub(crate) fn q_hess_impl(
    w: &SpectralMatrix,
    l: usize,
    epsilon: f64,
    flip_pure_diagonal: bool,
) -> Result<DiagHessian, SymError> {
    check_rank(w.n(), l, epsilon)?;
    let v = shifted(&require_diagonal(w)?, epsilon);
    let (s1, s2) = positive_denominator(&v, l)?;
    let l = l as i64;
    let n = v.len();
    let (s1_2, s1_3) = (s1 * s1, s1 * s1 * s1);
    let mut h = DiagHessian::zeros(n);
    for i in 0..n {
        let li = sig(l, &v, &[i]);
        let l1i = sig(l + 1, &v, &[i]);
        let mut b = -2.0 * li / s1_3 * (s1 * l1i - s2 * li);
        if flip_pure_diagonal {
            b = -b;
        }
        h.pair[(i, i)] = b;
        for k in 0..n {
            if k == i {
                continue;
            }
            let lk = sig(l, &v, &[k]);
            let l1k = sig(l + 1, &v, &[k]);
            let l_ik = sig(l, &v, &[i, k]);
            let lm1_ik = sig(l - 1, &v, &[i, k]);
            h.pair[(i, k)] = l_ik / s1 - l1i * lk / s1_2 - l1k * li / s1_2 - s2 * lm1_ik / s1_2
                + 2.0 * s2 * li * lk / s1_3;
            h.swap[(i, k)] = -l_ik / s1 + s2 * lm1_ik / s1_2;
        }
    }
    Ok(h)
}

/// Value, gradient and (for eigenbasis input) second derivatives of `q_ε`.
#[derive(Clone, Debug)]
pub struct QuotientEval {
    pub l: usize,
    pub epsilon: f64,
    pub value: f64,
    pub grad: DMatrix<f64>,
    pub hess: Option<DiagHessian>,
}

pub fn quotient_eval(w: &SpectralMatrix, l: usize, epsilon: f64) -> Result<QuotientEval, SymError> {
    let value = q_value(w, l, epsilon)?;
    let grad = q_grad(w, l, epsilon)?;
    let hess = if w.is_diagonal(DIAGONAL_TOL) {
        Some(q_hess(w, l, epsilon)?)
    } else {
        None
    };
    Ok(QuotientEval { l, epsilon, value, grad, hess })
}

/// Partition of eigenvalue indices into those at or above a threshold
/// ("good") and those below ("bad").
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodBadSplit {
    pub good: Vec<usize>,
    pub bad: Vec<usize>,
    pub threshold: f64,
    pub l: usize,
}

pub fn split_good_bad(values: &[f64], threshold: f64) -> GoodBadSplit {
    let (good, bad): (Vec<usize>, Vec<usize>) = (0..values.len()).partition(|&i| values[i] >= threshold);
    GoodBadSplit { l: good.len(), good, bad, threshold }
}

fn pick(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

/// `Σ_k σ_k(G)σ_{γ−k}(B)`; equals `σ_γ` of all values.
pub fn split_sigma(gamma: i64, split: &GoodBadSplit, values: &[f64]) -> f64 {
    let g = elem_sym_all(&pick(values, &split.good));
    let b = pick(values, &split.bad);
    g.iter()
        .enumerate()
        .map(|(k, gk)| gk * elem_sym(gamma - k as i64, &b))
        .sum()
}

/// Size of the remainder between an exact derivative and its leading form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemainderOrder {
    /// Bounded by a multiple of `φ`.
    Phi,
    /// Bounded.
    One,
}

/// Leading-order behaviour of `q^{ij}` and `q^{ij,km}` near a minimal-rank
/// point, in terms of the bad eigenvalues only.
#[derive(Clone, Debug)]
pub struct LeadingForms {
    pub split: GoodBadSplit,
    /// `q^{ii}` leading term: `(σ₁²(B|i) − σ₂(B|i))/σ₁²(B)` on bad indices,
    /// zero on good ones.
    pub grad: Vec<f64>,
    pub hess: DiagHessian,
    pub sigma1_bad: f64,
}

impl LeadingForms {
    pub fn is_bad(&self, i: usize) -> bool {
        self.split.bad.contains(&i)
    }

    /// Order of `exact − leading` for the entry `q^{ij,km}`.
    pub fn hess_order(&self, i: usize, j: usize, k: usize, m: usize) -> RemainderOrder {
        let bad = |x| self.is_bad(x);
        if i == j && k == m {
            if !bad(i) && !bad(k) {
                RemainderOrder::Phi
            } else {
                RemainderOrder::One
            }
        } else if i == m && j == k && i != j {
            if bad(i) && bad(j) {
                RemainderOrder::One
            } else {
                RemainderOrder::Phi
            }
        } else {
            RemainderOrder::Phi
        }
    }

    pub fn grad_order(&self) -> RemainderOrder {
        RemainderOrder::Phi
    }
}

pub fn leading_forms(w: &SpectralMatrix, split: &GoodBadSplit, l: usize) -> Result<LeadingForms, SymError> {
    check_rank(w.n(), l, 0.0)?;
    if split.good.len() != l {
        return Err(SymError::SplitMismatch { good: split.good.len(), l });
    }
    let v = require_diagonal(w)?;
    positive_denominator(&v, l)?;
    let n = v.len();
    let bad_vals = pick(&v, &split.bad);
    let pos = |i: usize| split.bad.iter().position(|&b| b == i);
    let s1b = elem_sym(1, &bad_vals);
    let s2b = elem_sym(2, &bad_vals);
    // σ₁²(B|i) − σ₂(B|i) over σ₁²(B)
    let ratio = |bi: usize| {
        let m1 = sig(1, &bad_vals, &[bi]);
        let m2 = sig(2, &bad_vals, &[bi]);
        (m1 * m1 - m2) / (s1b * s1b)
    };
    let mut grad = vec![0.0; n];
    let mut hess = DiagHessian::zeros(n);
    for i in 0..n {
        if let Some(bi) = pos(i) {
            grad[i] = ratio(bi);
            let m1 = sig(1, &bad_vals, &[bi]);
            let m2 = sig(2, &bad_vals, &[bi]);
            hess.pair[(i, i)] = -2.0 / s1b.powi(3) * (s1b * m1 - m2);
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            match (pos(i), pos(j)) {
                (Some(_), Some(_)) => {
                    hess.swap[(i, j)] = -1.0 / s1b;
                    hess.pair[(i, j)] = (2.0 * s2b - s1b * s1b + (v[i] + v[j]) * s1b) / s1b.powi(3);
                }
                (Some(bi), None) => hess.swap[(i, j)] = -ratio(bi) / v[j],
                (None, Some(bj)) => hess.swap[(i, j)] = -ratio(bj) / v[i],
                (None, None) => {}
            }
        }
    }
    Ok(LeadingForms { split: split.clone(), grad, hess, sigma1_bad: s1b })
}

/// Both sides of the regrouping identity for quadratic forms in third
/// derivatives. `data[i] = (v_ii, v_iiα, v_iiβ)` over an index set `A`.
pub fn identity_id1(data: &[(f64, f64, f64)]) -> (f64, f64) {
    let v: Vec<f64> = data.iter().map(|d| d.0).collect();
    let s1 = elem_sym(1, &v);
    let s2 = elem_sym(2, &v);
    let sum_a: f64 = data.iter().map(|d| d.1).sum();
    let sum_b: f64 = data.iter().map(|d| d.2).sum();
    let mut lhs = 0.0;
    for (i, di) in data.iter().enumerate() {
        for (j, dj) in data.iter().enumerate() {
            if i != j {
                lhs += (2.0 * s2 - s1 * s1 + (di.0 + dj.0) * s1) * di.1 * dj.2;
            }
        }
        let m1 = sig(1, &v, &[i]);
        let m2 = sig(2, &v, &[i]);
        lhs -= 2.0 * (s1 * m1 - m2) * di.1 * di.2;
    }
    let mut rhs = 0.0;
    for (i, di) in data.iter().enumerate() {
        let m1 = sig(1, &v, &[i]);
        rhs -= (s1 * di.1 - di.0 * sum_a) * (s1 * di.2 - di.0 * sum_b);
        rhs -= 2.0 * di.0 * m1 * di.1 * di.2;
    }
    (lhs, rhs)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `(σ_k/C(n,k))² − (σ_{k−1}/C(n,k−1))(σ_{k+1}/C(n,k+1))`, nonnegative for
/// nonnegative spectra.
pub fn newton_maclaurin_gap(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    let e = |j: usize| elem_sym(j as i64, values) / binomial(n, j);
    let ek = e(k);
    ek * ek - e(k - 1) * e(k + 1)
}

/// `|v_ijα| / (√v_ii + √v_jj + η)` with `η = 1e-14`; negative diagonal
/// entries (round-off on convex data) are clamped to zero.
pub fn third_deriv_ratio(v_ija: f64, v_ii: f64, v_jj: f64) -> f64 {
    v_ija.abs() / (v_ii.max(0.0).sqrt() + v_jj.max(0.0).sqrt() + RATIO_FLOOR)
}
