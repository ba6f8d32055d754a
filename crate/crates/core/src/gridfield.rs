//! Scalar fields on rectangular grids and their derivative jets.
//!
//! Interior derivatives use central five-point stencils (fourth order for
//! first and second derivatives, second order for third). Near a
//! non-periodic boundary the window slides inward and becomes one-sided,
//! keeping at least the same order. Mixed partials are tensor products of
//! one-dimensional stencils. Weights come from Fornberg's recursion.
//!
//! Binary layout (`.mclb`, little-endian): magic `MCLB`, `u32` rank, `rank`
//! × `u64` dims, `rank` × `f64` spacing, `rank` × `f64` origin, then the
//! values as `f64` in row-major order (last axis fastest). Periodicity is
//! not stored; read fields are non-periodic.

use crate::expr::Expr;
use crate::par::Exec;
use nalgebra::{DMatrix, DVector};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("axis {axis} has {size} points, stencils need at least {need}")]
    GridTooSmall { axis: usize, size: usize, need: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("jet order must be 1, 2 or 3, got {0}")]
    BadOrder(usize),
    #[error("{0} values for a grid of {1} points")]
    LengthMismatch(usize, usize),
    #[error("non-finite value at point {0}")]
    NonFinite(usize),
    #[error("malformed field data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub periodic: Vec<bool>,
}

impl Grid {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>, periodic: Vec<bool>) -> Result<Self, GridError> {
        let n = dims.len();
        if n == 0 || spacing.len() != n || origin.len() != n || periodic.len() != n {
            return Err(GridError::InvalidGrid("axis arrays must have equal nonzero length".into()));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(GridError::InvalidGrid("spacing must be positive".into()));
        }
        for (axis, &size) in dims.iter().enumerate() {
            if size < 5 {
                return Err(GridError::GridTooSmall { axis, size, need: 5 });
            }
        }
        Ok(Grid { dims, spacing, origin, periodic })
    }

    /// `[lo, hi]^dim` with both ends included; the spacing is adjusted so
    /// that it divides the interval.
    pub fn cube(lo: f64, hi: f64, h: f64, dim: usize) -> Result<Self, GridError> {
        let cells = ((hi - lo) / h).round().max(1.0) as usize;
        let h = (hi - lo) / cells as f64;
        Grid::new(vec![cells + 1; dim], vec![h; dim], vec![lo; dim], vec![false; dim])
    }

    /// `size` points per axis on the periodic box `[lo, hi)^dim`.
    pub fn periodic_cube(lo: f64, hi: f64, size: usize, dim: usize) -> Result<Self, GridError> {
        let h = (hi - lo) / size as f64;
        Grid::new(vec![size; dim], vec![h; dim], vec![lo; dim], vec![true; dim])
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_min(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.rank()];
        for a in (0..self.rank().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.dims[a + 1];
        }
        s
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut m = vec![0; self.rank()];
        for a in (0..self.rank()).rev() {
            m[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
        m
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + i as f64 * self.spacing[a])
            .collect()
    }

    /// True when the point is at least `margin` cells from every
    /// non-periodic boundary.
    pub fn is_interior(&self, flat: usize, margin: usize) -> bool {
        self.multi(flat)
            .iter()
            .enumerate()
            .all(|(a, &i)| self.periodic[a] || (i >= margin && i + margin < self.dims[a]))
    }

    /// True on the outermost layer of a non-periodic axis.
    pub fn is_boundary(&self, flat: usize) -> bool {
        !self.is_interior(flat, 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch(values.len(), grid.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64 + Sync + Send) -> Self {
        let values = Exec::default().map_range(grid.len(), |i| f(&grid.coords(i)));
        ScalarField { grid, values }
    }

    /// Evaluates an expression in `x_1..x_n` (aliases `x, y, z`) and `t`.
    pub fn from_expr(grid: Grid, expr: &Expr, t: f64) -> Result<Self, GridError> {
        let usage = expr.usage();
        if usage.r || usage.p || usage.u || usage.args > 0 {
            return Err(GridError::Format("field expressions may use only x_i and t".into()));
        }
        if usage.dim > grid.rank() {
            return Err(GridError::Format(format!("expression uses x_{} on a rank-{} grid", usage.dim, grid.rank())));
        }
        let values = Exec::default().map_range(grid.len(), |i| expr.eval_at(&grid.coords(i), t));
        ScalarField::new(grid, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// `u + (ε/2)|x|²`.
    pub fn add_epsilon_quadratic(&self, eps: f64) -> ScalarField {
        if eps == 0.0 {
            return self.clone();
        }
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.5 * eps * self.grid.coords(i).iter().map(|c| c * c).sum::<f64>())
            .collect();
        ScalarField { grid: self.grid.clone(), values }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), GridError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.grid.rank()).map(|a| format!("x{a}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.grid.coords(i).iter().map(|c| c.to_string()).collect();
            row.push(v.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`Self::write_csv`]: the points must form a
    /// complete row-major grid.
    pub fn read_csv(path: &Path) -> Result<Self, GridError> {
        let mut r = csv::Reader::from_path(path)?;
        let rank = r.headers()?.len().checked_sub(1).filter(|&k| k > 0).ok_or_else(|| GridError::Format("need coordinate columns".into()))?;
        let mut coords: Vec<Vec<f64>> = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| GridError::Format(e.to_string()))?;
            if row.len() != rank + 1 {
                return Err(GridError::Format("ragged row".into()));
            }
            values.push(row[rank]);
            coords.push(row[..rank].to_vec());
        }
        let mut dims = Vec::with_capacity(rank);
        let mut origin = Vec::with_capacity(rank);
        let mut spacing = Vec::with_capacity(rank);
        for a in 0..rank {
            let mut axis: Vec<f64> = coords.iter().map(|c| c[a]).collect();
            axis.sort_by(f64::total_cmp);
            axis.dedup_by(|x, y| (*x - *y).abs() <= 1e-9 * (1.0 + y.abs()));
            if axis.len() < 2 {
                return Err(GridError::Format(format!("axis {a} has a single coordinate")));
            }
            dims.push(axis.len());
            origin.push(axis[0]);
            spacing.push((axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64);
        }
        let grid = Grid::new(dims, spacing, origin, vec![false; rank])?;
        if grid.len() != values.len() {
            return Err(GridError::Format("points do not form a complete grid".into()));
        }
        for (i, c) in coords.iter().enumerate() {
            let expect = grid.coords(i);
            if c.iter().zip(&expect).any(|(a, b)| (a - b).abs() > 1e-6 * (1.0 + b.abs())) {
                return Err(GridError::Format(format!("row {i} is out of row-major order")));
            }
        }
        ScalarField::new(grid, values)
    }

    pub fn write_binary(&self, path: &Path) -> Result<(), GridError> {
        let mut out = Vec::with_capacity(8 + 24 * self.grid.rank() + 8 * self.values.len());
        out.extend_from_slice(b"MCLB");
        out.extend_from_slice(&(self.grid.rank() as u32).to_le_bytes());
        for &d in &self.grid.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in self.grid.spacing.iter().chain(&self.grid.origin).chain(&self.values) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self, GridError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut pos = 0usize;
        let mut take = |k: usize| -> Result<&[u8], GridError> {
            let s = buf.get(pos..pos + k).ok_or_else(|| GridError::Format("truncated file".into()))?;
            pos += k;
            Ok(s)
        };
        if take(4)? != b"MCLB" {
            return Err(GridError::Format("bad magic".into()));
        }
        let rank = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if rank == 0 || rank > 16 {
            return Err(GridError::Format(format!("implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        let mut f64s = |k: usize| -> Result<Vec<f64>, GridError> {
            (0..k).map(|_| Ok(f64::from_le_bytes(take(8)?.try_into().unwrap()))).collect()
        };
        let spacing = f64s(rank)?;
        let origin = f64s(rank)?;
        let grid = Grid::new(dims, spacing, origin, vec![false; rank])?;
        let values = f64s(grid.len())?;
        ScalarField::new(grid, values)
    }
}

/// Finite-difference weights for derivatives `0..=m` at `z` from nodes `x`.
pub fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Clone, Debug)]
struct Stencil {
    idx: Vec<usize>,
    w: Vec<f64>,
}

// stencils[d-1][i]: derivative d at position i along one axis
#[derive(Clone, Debug)]
struct AxisStencils {
    by_order: Vec<Vec<Stencil>>,
}

fn window_len(d: usize) -> usize {
    if d == 1 {
        5
    } else {
        6
    }
}

impl AxisStencils {
    fn new(size: usize, h: f64, periodic: bool, max_order: usize) -> Self {
        let by_order = (1..=max_order)
            .map(|d| {
                (0..size)
                    .map(|i| {
                        let (idx, nodes): (Vec<usize>, Vec<f64>) = if periodic {
                            (-2i64..=2)
                                .map(|o| ((i as i64 + o).rem_euclid(size as i64) as usize, o as f64))
                                .unzip()
                        } else if i >= 2 && i + 2 < size {
                            (i - 2..=i + 2).map(|j| (j, j as f64 - i as f64)).unzip()
                        } else {
                            let len = window_len(d).min(size);
                            let start = (i as i64 - 2).clamp(0, (size - len) as i64) as usize;
                            (start..start + len).map(|j| (j, j as f64 - i as f64)).unzip()
                        };
                        let scale = h.powi(d as i32);
                        let w = fornberg(0.0, &nodes, d)[d].iter().map(|c| c / scale).collect();
                        Stencil { idx, w }
                    })
                    .collect()
            })
            .collect();
        AxisStencils { by_order }
    }
}

/// Gradient, Hessian and (for order 3) third derivatives at every point.
#[derive(Clone, Debug)]
pub struct JetField {
    pub grid: Grid,
    pub order: usize,
    pub values: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    third: Vec<f64>,
}

impl JetField {
    pub fn n(&self) -> usize {
        self.grid.rank()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grad(&self, i: usize) -> DVector<f64> {
        let n = self.n();
        DVector::from_row_slice(&self.grad[i * n..(i + 1) * n])
    }

    pub fn hess(&self, i: usize) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_row_slice(n, n, &self.hess[i * n * n..(i + 1) * n * n])
    }

    /// `∂_a∂_b∂_c u` at point `i`; zero unless the jet has order 3.
    pub fn third(&self, i: usize, a: usize, b: usize, c: usize) -> f64 {
        if self.order < 3 {
            return 0.0;
        }
        let n = self.n();
        self.third[i * n * n * n + (a * n + b) * n + c]
    }

    pub fn hessians(&self) -> Vec<DMatrix<f64>> {
        (0..self.len()).map(|i| self.hess(i)).collect()
    }
}

struct PointJet {
    grad: Vec<f64>,
    hess: Vec<f64>,
    third: Vec<f64>,
}

fn apply(values: &[f64], strides: &[usize], base: &[usize], parts: &[(usize, &Stencil)]) -> f64 {
    fn rec(values: &[f64], strides: &[usize], pos: &mut Vec<usize>, parts: &[(usize, &Stencil)]) -> f64 {
        match parts.split_first() {
            None => values[pos.iter().zip(strides).map(|(p, s)| p * s).sum::<usize>()],
            Some((&(axis, st), rest)) => {
                let keep = pos[axis];
                let mut acc = 0.0;
                for (&j, &w) in st.idx.iter().zip(&st.w) {
                    pos[axis] = j;
                    acc += w * rec(values, strides, pos, rest);
                }
                pos[axis] = keep;
                acc
            }
        }
    }
    let mut pos = base.to_vec();
    rec(values, strides, &mut pos, parts)
}

pub fn jet(field: &ScalarField, order: usize) -> Result<JetField, GridError> {
    jet_with(field, order, Exec::default())
}

pub fn jet_with(field: &ScalarField, order: usize, exec: Exec) -> Result<JetField, GridError> {
    if !(1..=3).contains(&order) {
        return Err(GridError::BadOrder(order));
    }
    let g = &field.grid;
    let n = g.rank();
    for a in 0..n {
        let need = if g.periodic[a] { 5 } else { window_len(order.min(2)) };
        if g.dims[a] < need {
            return Err(GridError::GridTooSmall { axis: a, size: g.dims[a], need });
        }
    }
    let axes: Vec<AxisStencils> = (0..n)
        .map(|a| AxisStencils::new(g.dims[a], g.spacing[a], g.periodic[a], order.max(2)))
        .collect();
    let strides = g.strides();
    let st = |a: usize, d: usize, i: usize| &axes[a].by_order[d - 1][i];
    let per_point = exec.map_range(g.len(), |p| {
        let m = g.multi(p);
        let v = &field.values;
        let grad: Vec<f64> = (0..n).map(|a| apply(v, &strides, &m, &[(a, st(a, 1, m[a]))])).collect();
        let mut hess = vec![0.0; n * n];
        if order >= 2 {
            for a in 0..n {
                hess[a * n + a] = apply(v, &strides, &m, &[(a, st(a, 2, m[a]))]);
                for b in a + 1..n {
                    let x = apply(v, &strides, &m, &[(a, st(a, 1, m[a])), (b, st(b, 1, m[b]))]);
                    hess[a * n + b] = x;
                    hess[b * n + a] = x;
                }
            }
        }
        let mut third = Vec::new();
        if order >= 3 {
            third = vec![0.0; n * n * n];
            for a in 0..n {
                for b in a..n {
                    for c in b..n {
                        let parts: Vec<(usize, &Stencil)> = if a == c {
                            vec![(a, st(a, 3, m[a]))]
                        } else if a == b {
                            vec![(a, st(a, 2, m[a])), (c, st(c, 1, m[c]))]
                        } else if b == c {
                            vec![(a, st(a, 1, m[a])), (b, st(b, 2, m[b]))]
                        } else {
                            vec![(a, st(a, 1, m[a])), (b, st(b, 1, m[b])), (c, st(c, 1, m[c]))]
                        };
                        let x = apply(v, &strides, &m, &parts);
                        for (i, j, k) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
                            third[(i * n + j) * n + k] = x;
                        }
                    }
                }
            }
        }
        PointJet { grad, hess, third }
    });
    let mut jet = JetField {
        grid: g.clone(),
        order,
        values: field.values.clone(),
        grad: Vec::with_capacity(g.len() * n),
        hess: Vec::with_capacity(g.len() * n * n),
        third: Vec::new(),
    };
    for pj in per_point {
        jet.grad.extend(pj.grad);
        jet.hess.extend(pj.hess);
        jet.third.extend(pj.third);
    }
    Ok(jet)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_central_weights() {
        let w = fornberg(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for k in 0..5 {
            assert!((w[1][k] - d1[k]).abs() < 1e-14);
            assert!((w[2][k] - d2[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_hessian_is_exact() {
        let g = Grid::cube(-1.0, 1.0, 0.01, 1).unwrap();
        let j = jet(&ScalarField::from_fn(g, |x| x[0] * x[0]), 2).unwrap();
        for i in 0..j.len() {
            assert!((j.hess(i)[(0, 0)] - 2.0).abs() < 1e-10, "at {i}");
        }
    }

    #[test]
    fn polynomial_exactness_with_boundaries() {
        let g = Grid::cube(-1.0, 1.0, 0.1, 2).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0].powi(3) * x[1] + x[1].powi(4) - x[0] * x[1] * x[1]);
        let j = jet(&f, 3).unwrap();
        for i in 0..j.len() {
            let c = j.grid.coords(i);
            let (x, y) = (c[0], c[1]);
            assert!((j.grad(i)[0] - (3.0 * x * x * y - y * y)).abs() < 1e-10);
            assert!((j.hess(i)[(1, 1)] - (12.0 * y * y - 2.0 * x)).abs() < 1e-10);
            assert!((j.hess(i)[(0, 1)] - (3.0 * x * x - 2.0 * y)).abs() < 1e-10);
            assert!((j.third(i, 0, 0, 1) - 6.0 * x).abs() < 1e-9);
            assert!((j.third(i, 0, 1, 1) + 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fourth_order_convergence_on_sine() {
        let err = |size: usize| {
            let g = Grid::periodic_cube(0.0, std::f64::consts::TAU, size, 1).unwrap();
            let j = jet(&ScalarField::from_fn(g, |x| x[0].sin()), 1).unwrap();
            (0..j.len()).map(|i| (j.grad(i)[0] - j.grid.coords(i)[0].cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((ratio - 16.0).abs() < 3.2, "ratio {ratio}");
    }

    #[test]
    fn periodic_constant_has_zero_derivatives() {
        let g = Grid::periodic_cube(0.0, 1.0, 8, 2).unwrap();
        let j = jet(&ScalarField::from_fn(g, |_| 3.0), 3).unwrap();
        for i in 0..j.len() {
            assert_eq!(j.grad(i).amax(), 0.0);
            assert_eq!(j.hess(i).amax(), 0.0);
        }
    }

    #[test]
    fn epsilon_quadratic_shifts_hessian() {
        let g = Grid::cube(-1.0, 1.0, 0.1, 2).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0].powi(4) + x[0] * x[1]);
        assert_eq!(u.add_epsilon_quadratic(0.0), u);
        let a = jet(&u, 2).unwrap();
        let b = jet(&u.add_epsilon_quadratic(0.3), 2).unwrap();
        for i in 0..a.len() {
            let d = b.hess(i) - a.hess(i) - DMatrix::identity(2, 2) * 0.3;
            assert!(d.amax() < 1e-10);
        }
        let zero = ScalarField::from_fn(Grid::cube(-1.0, 1.0, 0.5, 2).unwrap(), |_| 0.0).add_epsilon_quadratic(2.0);
        for (i, v) in zero.values.iter().enumerate() {
            let c = zero.grid.coords(i);
            assert!((v - (c[0] * c[0] + c[1] * c[1])).abs() < 1e-15);
        }
    }

    #[test]
    fn modes_agree() {
        let g = Grid::cube(-1.0, 1.0, 0.1, 2).unwrap();
        let u = ScalarField::from_fn(g, |x| (x[0] * x[1]).sin());
        let a = jet_with(&u, 3, Exec::Sequential).unwrap();
        let b = jet_with(&u, 3, Exec::Parallel).unwrap();
        assert_eq!(a.hess, b.hess);
        assert_eq!(a.third, b.third);
    }

    #[test]
    fn rejects_small_grids_and_bad_orders() {
        assert!(matches!(Grid::cube(0.0, 1.0, 0.5, 1), Err(GridError::GridTooSmall { .. })));
        let g = Grid::cube(0.0, 1.0, 0.25, 1).unwrap();
        assert_eq!(g.dims, vec![5]);
        let f = ScalarField::from_fn(g, |x| x[0]);
        assert!(matches!(jet(&f, 2), Err(GridError::GridTooSmall { .. })));
        assert!(matches!(jet(&f, 4), Err(GridError::BadOrder(4))));
    }
}
