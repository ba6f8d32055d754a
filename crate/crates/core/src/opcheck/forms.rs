use super::operator::{OperatorSpec, Point, Tangent};
use super::OpError;
use crate::linalg::{frob, SpectralMatrix};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Test direction `(X, Y, Z)` with `X` symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct TestDirection {
    pub x: DMatrix<f64>,
    pub y: f64,
    pub z: DVector<f64>,
}

impl TestDirection {
    pub fn zeros(n: usize) -> Self {
        TestDirection {
            x: DMatrix::zeros(n, n),
            y: 0.0,
            z: DVector::zeros(n),
        }
    }

    pub fn dot(&self, o: &TestDirection) -> f64 {
        frob(&self.x, &o.x) + self.y * o.y + self.z.dot(&o.z)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> TestDirection {
        TestDirection {
            x: &self.x * s,
            y: self.y * s,
            z: &self.z * s,
        }
    }

    pub fn axpy(&self, s: f64, o: &TestDirection) -> TestDirection {
        TestDirection {
            x: &self.x + &o.x * s,
            y: self.y + s * o.y,
            z: &self.z + &o.z * s,
        }
    }

    // the forms pair Y and Z with the opposite sign of u and x
    fn tangent(&self) -> Tangent {
        Tangent {
            r: self.x.clone(),
            u: -self.y,
            x: -&self.z,
        }
    }
}

/// `Q` together with a positive definite `(n−1)×(n−1)` block `B`; the
/// degenerate matrix is `Q·diag(0, B)·Qᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockFrame {
    /// Row-major `n×n`.
    pub q: Vec<f64>,
    /// Row-major `(n−1)×(n−1)`.
    pub b: Vec<f64>,
    pub n: usize,
}

impl BlockFrame {
    pub fn new(q: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self, OpError> {
        let n = q.nrows();
        if b.nrows() + 1 != n || !b.is_square() || !q.is_square() {
            return Err(OpError::DimensionMismatch { expected: n.saturating_sub(1), found: b.nrows() });
        }
        let min = SpectralMatrix::new(b.clone()).spectrum().min();
        if min <= 0.0 {
            return Err(OpError::NotPositiveDefinite(min));
        }
        Ok(BlockFrame {
            q: super::operator::row_major(q),
            b: super::operator::row_major(b),
            n,
        })
    }

    pub fn q(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.q)
    }

    pub fn b(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n - 1, self.n - 1, &self.b)
    }

    fn embed(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut full = DMatrix::zeros(n, n);
        full.view_mut((1, 1), (n - 1, n - 1)).copy_from(m);
        let q = self.q();
        &q * full * q.transpose()
    }

    /// `Q·diag(0, B)·Qᵀ`.
    pub fn base(&self) -> DMatrix<f64> {
        self.embed(&self.b())
    }

    /// `Q·diag(0, B⁻¹)·Qᵀ`.
    pub fn a_tilde(&self) -> DMatrix<f64> {
        let sm = SpectralMatrix::new(self.b());
        let inv: Vec<f64> = sm.eigenvalues().iter().map(|v| v.recip()).collect();
        self.embed(&sm.rotate_diag(&inv))
    }

    /// Orthogonal projection of a symmetric matrix onto `S_{n−1}(Q)`.
    pub fn project(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let q = self.q();
        let local = q.transpose() * m * &q;
        self.embed(&local.view((1, 1), (n - 1, n - 1)).clone_owned())
    }

    /// `Q·diag(0, M)·Qᵀ` for a symmetric `(n−1)×(n−1)` block `M`.
    pub fn lift(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.embed(m)
    }
}

/// A form value with the magnitude of its parts, for relative verdicts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormValue {
    pub value: f64,
    /// `1 + |F| + Σ|terms|`.
    pub scale: f64,
}

fn form_at(op: &OperatorSpec, pt: &Point, dir: &TestDirection, inv: &DMatrix<f64>) -> FormValue {
    let second = op.directional(pt, &dir.tangent());
    let m = &dir.x * inv * &dir.x;
    let cross = 2.0 * op.directional(pt, &Tangent::matrix(m)).d;
    FormValue {
        value: second.dd + cross,
        scale: 1.0 + second.v.abs() + second.dd.abs() + cross.abs(),
    }
}

fn point(r: DMatrix<f64>, p: &DVector<f64>, u: f64, x: &DVector<f64>) -> Point {
    Point {
        r,
        p: p.clone(),
        u,
        x: x.clone(),
        t: 0.0,
    }
}

/// The inverse-convexity quadratic form at a positive definite `A`:
/// `F^{ij,kl}X_ijX_kl + 2F^{ij}A^{kl}X_ikX_jl + F^{uu}Y² − 2F^{ij,u}X_ijY
///  − 2F^{ij,x_k}X_ijZ_k + 2F^{u,x_i}YZ_i + F^{x_i,x_j}Z_iZ_j`,
/// `A^{kl}` the entries of `A⁻¹`.
pub fn condition_c_form(
    op: &OperatorSpec,
    a: &DMatrix<f64>,
    p: &DVector<f64>,
    u: f64,
    x: &DVector<f64>,
    dir: &TestDirection,
) -> Result<FormValue, OpError> {
    let sm = SpectralMatrix::new(a.clone());
    if sm.spectrum().min() <= 0.0 {
        return Err(OpError::NotPositiveDefinite(sm.spectrum().min()));
    }
    let inv_vals: Vec<f64> = sm.eigenvalues().iter().map(|v| v.recip()).collect();
    let inv = sm.rotate_diag(&inv_vals);
    Ok(form_at(op, &point(a.clone(), p, u, x), dir, &inv))
}

/// The degenerate-block form: the same expression with `A⁻¹` replaced by
/// `Q·diag(0, B⁻¹)·Qᵀ` and derivatives taken at `Q·diag(0, B)·Qᵀ`.
pub fn qstar_form(
    op: &OperatorSpec,
    frame: &BlockFrame,
    p: &DVector<f64>,
    u: f64,
    x: &DVector<f64>,
    dir: &TestDirection,
) -> Result<FormValue, OpError> {
    check_in_subspace(frame, &dir.x)?;
    Ok(form_at(op, &point(frame.base(), p, u, x), dir, &frame.a_tilde()))
}

/// [`qstar_form`] assembled term by term from the full derivative tensors.
pub fn qstar_form_full(
    op: &OperatorSpec,
    frame: &BlockFrame,
    p: &DVector<f64>,
    u: f64,
    x: &DVector<f64>,
    dir: &TestDirection,
) -> Result<f64, OpError> {
    check_in_subspace(frame, &dir.x)?;
    let d = op.derivatives(&point(frame.base(), p, u, x));
    let n = frame.n;
    let at = frame.a_tilde();
    let (xm, y, z) = (&dir.x, dir.y, &dir.z);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    s += d.frr_at(i, j, k, l) * xm[(i, j)] * xm[(k, l)];
                    s += 2.0 * d.fr[(i, j)] * at[(k, l)] * xm[(i, k)] * xm[(j, l)];
                }
            }
        }
    }
    s += z.dot(&(&d.fxx * z));
    s -= 2.0 * frob(&d.fru, xm) * y;
    for (k, m) in d.frx.iter().enumerate() {
        s -= 2.0 * frob(m, xm) * z[k];
    }
    s += 2.0 * y * d.fux.dot(z);
    s += d.fuu * y * y;
    Ok(s)
}

fn check_in_subspace(frame: &BlockFrame, x: &DMatrix<f64>) -> Result<(), OpError> {
    let resid = (frame.project(x) - x).amax();
    if resid > 1e-9 * (1.0 + x.amax()) {
        return Err(OpError::NotInSubspace(resid));
    }
    Ok(())
}

/// Removes from `dir` its component along the operator's normal
/// `X*_F = (F^{αβ}, −F^u, −F^x)`, staying inside `S_{n−1}(Q) × R × Rⁿ`.
pub fn project_gamma_perp(
    op: &OperatorSpec,
    pt: &Point,
    frame: &BlockFrame,
    dir: &TestDirection,
) -> Result<TestDirection, OpError> {
    let g = op.gradient(pt);
    let normal = TestDirection {
        x: g.r.clone(),
        y: -g.u,
        z: -&g.x,
    };
    let full_norm = normal.norm();
    if full_norm.is_nan() || full_norm < 1e-12 {
        return Err(OpError::DegenerateNormal(full_norm));
    }
    // restricted to the subspace, ⟨X, F^{αβ}⟩ only sees the projected block
    let restricted = TestDirection {
        x: frame.project(&normal.x),
        ..normal
    };
    let nn = restricted.dot(&restricted);
    if nn < 1e-24 {
        return Ok(dir.clone());
    }
    Ok(dir.axpy(-dir.dot(&restricted) / nn, &restricted))
}
