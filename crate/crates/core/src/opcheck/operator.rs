use super::OpError;
use crate::expr::{Ctx, Expr};
use crate::scalar::{Dual2, Scalar};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

/// An argument `(r, p, u, x, t)` of an operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub r: DMatrix<f64>,
    pub p: DVector<f64>,
    pub u: f64,
    pub x: DVector<f64>,
    pub t: f64,
}

impl Point {
    /// `(r, 0, 0, 0, 0)`.
    pub fn at(r: DMatrix<f64>) -> Self {
        let n = r.nrows();
        Point {
            r,
            p: DVector::zeros(n),
            u: 0.0,
            x: DVector::zeros(n),
            t: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    fn norm(&self) -> f64 {
        (self.r.norm_squared() + self.u * self.u + self.x.norm_squared()).sqrt()
    }

    fn shifted(&self, dir: &Tangent, s: f64) -> Point {
        Point {
            r: &self.r + &dir.r * s,
            p: self.p.clone(),
            u: self.u + dir.u * s,
            x: &self.x + &dir.x * s,
            t: self.t,
        }
    }
}

/// A direction in `(r, u, x)`; `p` and `t` stay fixed in every condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub r: DMatrix<f64>,
    pub u: f64,
    pub x: DVector<f64>,
}

impl Tangent {
    pub fn zeros(n: usize) -> Self {
        Tangent {
            r: DMatrix::zeros(n, n),
            u: 0.0,
            x: DVector::zeros(n),
        }
    }

    pub fn matrix(r: DMatrix<f64>) -> Self {
        let n = r.nrows();
        Tangent { r, ..Tangent::zeros(n) }
    }

    fn add(&self, o: &Tangent) -> Tangent {
        Tangent {
            r: &self.r + &o.r,
            u: self.u + o.u,
            x: &self.x + &o.x,
        }
    }
}

/// Which arguments the operator reads besides `r`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Arity {
    pub p: bool,
    pub u: bool,
    pub x: bool,
    pub t: bool,
}

type CustomFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Body {
    Expr(Expr),
    Custom(CustomFn),
}

/// A nonlinear operator `F(r, p, u, x, t)` on symmetric `n×n` matrices.
///
/// Derivatives in `r` are those of the symmetrized function: `F^{ij}` is
/// half the derivative along `E_ij + E_ji` off the diagonal, so the
/// tensors are symmetric in their matrix indices.
#[derive(Clone)]
pub struct OperatorSpec {
    pub name: String,
    pub n: usize,
    pub arity: Arity,
    body: Body,
}

impl fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("arity", &self.arity)
            .finish_non_exhaustive()
    }
}

/// `F` and its first derivatives.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub f: f64,
    pub r: DMatrix<f64>,
    pub u: f64,
    pub x: DVector<f64>,
}

/// `F` with all first and second derivatives in `(r, u, x)`.
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub n: usize,
    pub f: f64,
    pub fr: DMatrix<f64>,
    pub fu: f64,
    pub fx: DVector<f64>,
    /// `F^{ij,kl}` at index `((i·n + j)·n + k)·n + l`.
    pub frr: Vec<f64>,
    pub fru: DMatrix<f64>,
    /// `frx[k]` is the matrix `F^{ij,x_k}`.
    pub frx: Vec<DMatrix<f64>>,
    pub fuu: f64,
    pub fux: DVector<f64>,
    pub fxx: DMatrix<f64>,
}

impl Derivatives {
    pub fn frr_at(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.frr[((i * n + j) * n + k) * n + l]
    }

    /// Largest entry of every tensor, for relative comparisons.
    pub fn scale(&self) -> f64 {
        self.flat().iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = vec![self.f, self.fu, self.fuu];
        v.extend(self.fr.iter());
        v.extend(self.fx.iter());
        v.extend(self.frr.iter());
        v.extend(self.fru.iter());
        for m in &self.frx {
            v.extend(m.iter());
        }
        v.extend(self.fux.iter());
        v.extend(self.fxx.iter());
        v
    }

    /// Largest entrywise difference relative to `1 + max(scale)`.
    pub fn relative_diff(&self, other: &Derivatives) -> f64 {
        let a = self.flat();
        let b = other.flat();
        let worst = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        worst / (1.0 + self.scale().max(other.scale()))
    }
}

impl OperatorSpec {
    pub fn from_expr(name: impl Into<String>, n: usize, expr: Expr) -> Result<Self, OpError> {
        let usage = expr.usage();
        if usage.dim > n {
            return Err(OpError::DimensionMismatch { expected: n, found: usage.dim });
        }
        if usage.args > 0 {
            return Err(OpError::BadParams("unbound composition argument a_i".into()));
        }
        Ok(OperatorSpec {
            name: name.into(),
            n,
            arity: Arity { p: usage.p, u: usage.u, x: usage.x, t: usage.t },
            body: Body::Expr(expr),
        })
    }

    pub fn parse(name: impl Into<String>, n: usize, src: &str) -> Result<Self, OpError> {
        Self::from_expr(name, n, Expr::parse(src)?)
    }

    /// An operator given only by its values; derivatives come from central
    /// differences.
    pub fn custom(
        name: impl Into<String>,
        n: usize,
        arity: Arity,
        f: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        OperatorSpec {
            name: name.into(),
            n,
            arity,
            body: Body::Custom(Arc::new(f)),
        }
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.body {
            Body::Expr(e) => Some(e),
            Body::Custom(_) => None,
        }
    }

    pub fn value(&self, pt: &Point) -> f64 {
        match &self.body {
            Body::Expr(e) => {
                let r: Vec<f64> = row_major(&pt.r);
                e.eval(&Ctx {
                    n: self.n,
                    r: &r,
                    p: pt.p.as_slice(),
                    u: pt.u,
                    x: pt.x.as_slice(),
                    t: pt.t,
                    args: &[],
                })
            }
            Body::Custom(f) => f(pt),
        }
    }

    /// `F`, `DF[dir]` and `D²F[dir, dir]` at `pt`.
    pub fn directional(&self, pt: &Point, dir: &Tangent) -> Dual2 {
        match &self.body {
            Body::Expr(e) => {
                let n = self.n;
                let r: Vec<Dual2> = (0..n * n)
                    .map(|k| Dual2::var(pt.r[(k / n, k % n)], dir.r[(k / n, k % n)]))
                    .collect();
                let p: Vec<Dual2> = pt.p.iter().map(|&v| Dual2::cst(v)).collect();
                let x: Vec<Dual2> = pt.x.iter().zip(dir.x.iter()).map(|(&v, &h)| Dual2::var(v, h)).collect();
                e.eval(&Ctx {
                    n,
                    r: &r,
                    p: &p,
                    u: Dual2::var(pt.u, dir.u),
                    x: &x,
                    t: Dual2::cst(pt.t),
                    args: &[],
                })
            }
            Body::Custom(f) => {
                let h = 1e-4 * (1.0 + pt.norm());
                let f0 = f(pt);
                let fp = f(&pt.shifted(dir, h));
                let fm = f(&pt.shifted(dir, -h));
                Dual2::new(f0, (fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
            }
        }
    }

    /// First derivatives only.
    pub fn gradient(&self, pt: &Point) -> Gradient {
        let basis = Basis::new(self.n);
        let g: Vec<f64> = basis.dirs.iter().map(|d| self.first(pt, d)).collect();
        let f = self.value(pt);
        basis.gradient(f, &g)
    }

    /// `F^{ij}` only.
    pub fn gradient_r(&self, pt: &Point) -> DMatrix<f64> {
        let n = self.n;
        let mut r = DMatrix::zeros(n, n);
        let mut dir = Tangent::zeros(n);
        for i in 0..n {
            for j in i..n {
                dir.r[(i, j)] = 1.0;
                dir.r[(j, i)] = 1.0;
                let c = if i == j { 1.0 } else { 2.0 };
                let g = self.first(pt, &dir) / c;
                r[(i, j)] = g;
                r[(j, i)] = g;
                dir.r[(i, j)] = 0.0;
                dir.r[(j, i)] = 0.0;
            }
        }
        r
    }

    fn first(&self, pt: &Point, dir: &Tangent) -> f64 {
        match &self.body {
            Body::Expr(_) => self.directional(pt, dir).d,
            Body::Custom(f) => {
                let h = fd_step(pt);
                (f(&pt.shifted(dir, h)) - f(&pt.shifted(dir, -h))) / (2.0 * h)
            }
        }
    }

    /// All derivatives, by polarization of exact second directional
    /// derivatives (finite differences for custom operators).
    pub fn derivatives(&self, pt: &Point) -> Derivatives {
        match &self.body {
            Body::Expr(_) => {
                let basis = Basis::new(self.n);
                let dirs = &basis.dirs;
                let m = dirs.len();
                let single: Vec<Dual2> = dirs.iter().map(|d| self.directional(pt, d)).collect();
                let g: Vec<f64> = single.iter().map(|s| s.d).collect();
                let mut h = DMatrix::zeros(m, m);
                for a in 0..m {
                    h[(a, a)] = single[a].dd;
                    for b in a + 1..m {
                        let both = self.directional(pt, &dirs[a].add(&dirs[b])).dd;
                        let v = 0.5 * (both - single[a].dd - single[b].dd);
                        h[(a, b)] = v;
                        h[(b, a)] = v;
                    }
                }
                basis.assemble(self.value(pt), &g, &h)
            }
            Body::Custom(_) => self.fd_derivatives(pt),
        }
    }

    /// Central finite differences of `value` with step `1e-5·(1 + ‖pt‖)`.
    pub fn fd_derivatives(&self, pt: &Point) -> Derivatives {
        let basis = Basis::new(self.n);
        let dirs = &basis.dirs;
        let m = dirs.len();
        let h = fd_step(pt);
        let f0 = self.value(pt);
        let at = |d: &Tangent, s: f64| self.value(&pt.shifted(d, s));
        let plus: Vec<f64> = dirs.iter().map(|d| at(d, h)).collect();
        let minus: Vec<f64> = dirs.iter().map(|d| at(d, -h)).collect();
        let g: Vec<f64> = (0..m).map(|a| (plus[a] - minus[a]) / (2.0 * h)).collect();
        let mut hm = DMatrix::zeros(m, m);
        for a in 0..m {
            hm[(a, a)] = (plus[a] - 2.0 * f0 + minus[a]) / (h * h);
            for b in a + 1..m {
                let pp = dirs[a].add(&dirs[b]);
                let pm = dirs[a].add(&scaled(&dirs[b], -1.0));
                let v = (at(&pp, h) - at(&pm, h) - at(&pm, -h) + at(&pp, -h)) / (4.0 * h * h);
                hm[(a, b)] = v;
                hm[(b, a)] = v;
            }
        }
        basis.assemble(f0, &g, &hm)
    }
}

fn fd_step(pt: &Point) -> f64 {
    1e-5 * (1.0 + pt.r.norm())
}

fn scaled(t: &Tangent, s: f64) -> Tangent {
    Tangent {
        r: &t.r * s,
        u: t.u * s,
        x: &t.x * s,
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    (0..rows * cols).map(|k| m[(k / cols, k % cols)]).collect()
}

// Coordinates on symmetric matrices × R × Rⁿ: E_ii, E_ij + E_ji (i<j), u,
// x_1..x_n.
struct Basis {
    n: usize,
    dirs: Vec<Tangent>,
    // (i, j, weight) for matrix coordinates
    rvars: Vec<(usize, usize, f64)>,
}

impl Basis {
    fn new(n: usize) -> Self {
        let mut dirs = Vec::new();
        let mut rvars = Vec::new();
        for i in 0..n {
            for j in i..n {
                let mut r = DMatrix::zeros(n, n);
                r[(i, j)] = 1.0;
                r[(j, i)] = 1.0;
                dirs.push(Tangent::matrix(r));
                rvars.push((i, j, if i == j { 1.0 } else { 2.0 }));
            }
        }
        dirs.push(Tangent { u: 1.0, ..Tangent::zeros(n) });
        for k in 0..n {
            let mut t = Tangent::zeros(n);
            t.x[k] = 1.0;
            dirs.push(t);
        }
        Basis { n, dirs, rvars }
    }

    fn gradient(&self, f: f64, g: &[f64]) -> Gradient {
        let n = self.n;
        let nr = self.rvars.len();
        let mut r = DMatrix::zeros(n, n);
        for (a, &(i, j, c)) in self.rvars.iter().enumerate() {
            r[(i, j)] = g[a] / c;
            r[(j, i)] = g[a] / c;
        }
        Gradient {
            f,
            r,
            u: g[nr],
            x: DVector::from_iterator(n, (0..n).map(|k| g[nr + 1 + k])),
        }
    }

    fn assemble(&self, f: f64, g: &[f64], h: &DMatrix<f64>) -> Derivatives {
        let n = self.n;
        let nr = self.rvars.len();
        let iu = nr;
        let ix = |k: usize| nr + 1 + k;
        let grad = self.gradient(f, g);
        let mut frr = vec![0.0; n * n * n * n];
        let mut fru = DMatrix::zeros(n, n);
        let mut frx = vec![DMatrix::zeros(n, n); n];
        for (a, &(i, j, ca)) in self.rvars.iter().enumerate() {
            for (b, &(k, l, cb)) in self.rvars.iter().enumerate() {
                let v = h[(a, b)] / (ca * cb);
                for (p, q) in [(i, j), (j, i)] {
                    for (s, t) in [(k, l), (l, k)] {
                        frr[((p * n + q) * n + s) * n + t] = v;
                    }
                }
            }
            fru[(i, j)] = h[(a, iu)] / ca;
            fru[(j, i)] = h[(a, iu)] / ca;
            for (k, m) in frx.iter_mut().enumerate() {
                m[(i, j)] = h[(a, ix(k))] / ca;
                m[(j, i)] = h[(a, ix(k))] / ca;
            }
        }
        Derivatives {
            n,
            f,
            fr: grad.r,
            fu: grad.u,
            fx: grad.x,
            frr,
            fru,
            frx,
            fuu: h[(iu, iu)],
            fux: DVector::from_iterator(n, (0..n).map(|k| h[(iu, ix(k))])),
            fxx: DMatrix::from_fn(n, n, |a, b| h[(ix(a), ix(b))]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt3() -> Point {
        let r = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        Point {
            r,
            p: DVector::from_vec(vec![0.1, -0.3, 0.2]),
            u: 0.4,
            x: DVector::from_vec(vec![0.5, -0.2, 0.7]),
            t: 0.0,
        }
    }

    #[test]
    fn ad_matches_finite_differences() {
        let srcs = [
            "sigma(2)/sigma(1)",
            "sigma(1) - 12*(x_1^2 + x_2^2 + x_3^2)",
            "exp(u) * sigma(3) + x_1 * r_12 - u * x_2^2",
            "-1/(r_11 + r_22 + r_33) + 1/(1 + u^2 + x_1^2)",
        ];
        for s in srcs {
            let op = OperatorSpec::parse(s, 3, s).unwrap();
            let p = pt3();
            let exact = op.derivatives(&p);
            let fd = op.fd_derivatives(&p);
            assert!(exact.relative_diff(&fd) < 1e-4, "{s}: {}", exact.relative_diff(&fd));
        }
    }

    #[test]
    fn sigma_two_first_derivatives() {
        let op = OperatorSpec::parse("s2", 3, "sigma(2)").unwrap();
        let g = op.gradient(&Point::at(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]))));
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 4.0, 3.0]));
        assert!((g.r - expect).amax() < 1e-12);
    }

    #[test]
    fn tensors_are_symmetric() {
        let op = OperatorSpec::parse("q", 3, "sigma(3)/sigma(2) + r_12 * r_13").unwrap();
        let d = op.derivatives(&pt3());
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let v = d.frr_at(i, j, k, l);
                        assert_eq!(v, d.frr_at(j, i, k, l));
                        assert_eq!(v, d.frr_at(k, l, i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn custom_uses_differences() {
        let op = OperatorSpec::custom("trace", 2, Arity::default(), |p| p.r.trace() + p.u * p.u);
        let d = op.derivatives(&Point::at(DMatrix::identity(2, 2)));
        assert!((d.fr - DMatrix::identity(2, 2)).amax() < 1e-8);
        assert!((d.fuu - 2.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_out_of_range_indices() {
        assert!(matches!(
            OperatorSpec::parse("bad", 2, "x_3"),
            Err(OpError::DimensionMismatch { .. })
        ));
    }
}
