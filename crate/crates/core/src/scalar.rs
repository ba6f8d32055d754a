//! Scalars that operator expressions are evaluated over: plain `f64`, and a
//! second-order forward-mode dual number carrying the first and second
//! derivatives along one straight-line direction.

use crate::linalg::SpectralMatrix;
use crate::symcalc::elem_sym;
use nalgebra::DMatrix;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn pow(self, e: Self) -> Self;
    /// `σ_k` of the eigenvalues of the symmetric `n×n` matrix stored
    /// row-major in `r`.
    fn elem_sym_matrix(k: usize, r: &[Self], n: usize) -> Self;
}

fn sym_from(r: &[f64], n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(n, n, r);
    (&m + m.transpose()) * 0.5
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn val(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn pow(self, e: Self) -> Self {
        int_pow(self, e).unwrap_or_else(|| self.powf(e))
    }
    fn elem_sym_matrix(k: usize, r: &[f64], n: usize) -> f64 {
        match k {
            0 => 1.0,
            1 => (0..n).map(|i| r[i * n + i]).sum(),
            _ if k > n => 0.0,
            _ => elem_sym(k as i64, SpectralMatrix::new(sym_from(r, n)).eigenvalues()),
        }
    }
}

fn int_pow(a: f64, e: f64) -> Option<f64> {
    (e.fract() == 0.0 && e.abs() <= 64.0).then(|| a.powi(e as i32))
}

/// `v + d·t + dd·t²/2 + O(t³)`: value, first and second derivative of a
/// quantity along a path `t ↦ x₀ + t·h`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dual2 {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Dual2 {
    pub fn new(v: f64, d: f64, dd: f64) -> Self {
        Dual2 { v, d, dd }
    }

    /// A variable with value `v` moving with unit speed times `h`.
    pub fn var(v: f64, h: f64) -> Self {
        Dual2 { v, d: h, dd: 0.0 }
    }

    // g(self) from g, g', g'' at self.v
    fn chain(self, g0: f64, g1: f64, g2: f64) -> Self {
        Dual2 {
            v: g0,
            d: g1 * self.d,
            dd: g2 * self.d * self.d + g1 * self.dd,
        }
    }
}

impl Add for Dual2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual2::new(self.v + o.v, self.d + o.d, self.dd + o.dd)
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual2::new(self.v - o.v, self.d - o.d, self.dd - o.dd)
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual2::new(
            self.v * o.v,
            self.d * o.v + self.v * o.d,
            self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        )
    }
}

impl Div for Dual2 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = o.v.recip();
        self * o.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        Dual2::new(-self.v, -self.d, -self.dd)
    }
}

impl Scalar for Dual2 {
    fn cst(v: f64) -> Self {
        Dual2::new(v, 0.0, 0.0)
    }
    fn val(self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let inv = self.v.recip();
        self.chain(self.v.ln(), inv, -inv * inv)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn pow(self, e: Self) -> Self {
        if e.d == 0.0 && e.dd == 0.0 {
            let c = e.v;
            let p = |a: f64, m: f64| int_pow(a, m).unwrap_or_else(|| a.powf(m));
            let g1 = if c == 0.0 { 0.0 } else { c * p(self.v, c - 1.0) };
            let g2 = if c == 0.0 || c == 1.0 { 0.0 } else { c * (c - 1.0) * p(self.v, c - 2.0) };
            self.chain(p(self.v, c), g1, g2)
        } else {
            (e * self.ln()).exp()
        }
    }
    fn elem_sym_matrix(k: usize, r: &[Dual2], n: usize) -> Dual2 {
        if k == 0 {
            return Dual2::cst(1.0);
        }
        if k > n {
            return Dual2::cst(0.0);
        }
        if k == 1 {
            return (0..n).fold(Dual2::cst(0.0), |acc, i| acc + r[i * n + i]);
        }
        let pick = |f: fn(&Dual2) -> f64| r.iter().map(f).collect::<Vec<f64>>();
        let base = SpectralMatrix::new(sym_from(&pick(|z| z.v), n));
        let q = base.eigenvectors();
        let h1 = q.transpose() * sym_from(&pick(|z| z.d), n) * q;
        let h2 = q.transpose() * sym_from(&pick(|z| z.dd), n) * q;
        let lam = base.eigenvalues();
        let k = k as i64;
        let minor = |j: i64, ex: &[usize]| {
            let rest: Vec<f64> = lam
                .iter()
                .enumerate()
                .filter(|(i, _)| !ex.contains(i))
                .map(|(_, &v)| v)
                .collect();
            elem_sym(j, &rest)
        };
        let mut d = 0.0;
        let mut dd = 0.0;
        for i in 0..n {
            let m1 = minor(k - 1, &[i]);
            d += m1 * h1[(i, i)];
            dd += m1 * h2[(i, i)];
            for j in 0..n {
                if j != i {
                    dd += minor(k - 2, &[i, j]) * (h1[(i, i)] * h1[(j, j)] - h1[(i, j)] * h1[(j, i)]);
                }
            }
        }
        Dual2::new(elem_sym(k, lam), d, dd)
    }
}
