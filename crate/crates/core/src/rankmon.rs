//! Rank structure of Hessian fields, the rank test function `φ`, and
//! numerical checks of the inequalities that force `φ ≡ 0`.
//!
//! All verdicts ignore a margin of cells next to non-periodic boundaries
//! (default [`MARGIN`]), where one-sided stencils are less accurate.

use crate::flows::FlowTrace;
use crate::gridfield::{jet_with, GridError, JetField, ScalarField};
use crate::linalg::{max_principal_angle, SpectralMatrix};
use crate::opcheck::{OperatorSpec, Point};
use crate::par::Exec;
use crate::symcalc::{phi_value, third_deriv_ratio, SymError};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Cells excluded next to non-periodic boundaries.
pub const MARGIN: usize = 3;
/// `φ` values below this are counted as exactly null.
pub const PHI_FLOOR: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("no attainment points in the requested region")]
    EmptyRegion,
    #[error("rank is not constant (min {min}, max {max}); null directions are not comparable")]
    RankObstruction { min: usize, max: usize },
    #[error("no points with phi above the floor ({exact_null} exact-null points)")]
    NoTestablePoints { exact_null: usize },
    #[error("{0} snapshots given for {1} times")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `τ = max(rel·λ_max(point), floor·global)`, `global` the largest
/// eigenvalue magnitude over the field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub rel: f64,
    pub floor: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy { rel: 1e-8, floor: 1e-12 }
    }
}

impl ThresholdPolicy {
    pub fn threshold(&self, lambda_max: f64, global: f64) -> f64 {
        (self.rel * lambda_max).max(self.floor * global)
    }
}

#[derive(Clone, Debug)]
pub struct RankReport {
    /// Rank at every grid point (including the margin).
    pub ranks: Vec<usize>,
    /// Smallest eigenvalue at every grid point.
    pub lambda_min: Vec<f64>,
    /// Minimum rank over interior points.
    pub min_rank: usize,
    pub max_rank: usize,
    /// Interior points of minimum rank.
    pub attainment: Vec<usize>,
    /// Orthonormal near-null basis (`n × (n − l)`) at each attainment point.
    pub null_directions: Vec<DMatrix<f64>>,
    pub policy: ThresholdPolicy,
    pub global_scale: f64,
    pub margin: usize,
    pub interior: Vec<usize>,
    pub n: usize,
}

/// Serializable digest of a [`RankReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub min_rank: usize,
    pub max_rank: usize,
    pub constant: bool,
    /// `histogram[k]` = number of interior points of rank `k`.
    pub histogram: Vec<usize>,
    pub attainment_count: usize,
    pub interior_points: usize,
    pub min_lambda: f64,
    pub policy: ThresholdPolicy,
    pub global_scale: f64,
    pub margin: usize,
}

impl RankReport {
    pub fn is_constant(&self) -> bool {
        self.min_rank == self.max_rank
    }

    pub fn summary(&self) -> RankSummary {
        let mut histogram = vec![0; self.n + 1];
        for &i in &self.interior {
            histogram[self.ranks[i]] += 1;
        }
        RankSummary {
            min_rank: self.min_rank,
            max_rank: self.max_rank,
            constant: self.is_constant(),
            histogram,
            attainment_count: self.attainment.len(),
            interior_points: self.interior.len(),
            min_lambda: self.interior.iter().map(|&i| self.lambda_min[i]).fold(f64::INFINITY, f64::min),
            policy: self.policy,
            global_scale: self.global_scale,
            margin: self.margin,
        }
    }
}

/// Pointwise rank `#{λ_i ≥ τ}` of a Hessian field.
pub fn rank_field(jets: &JetField, policy: &ThresholdPolicy, margin: usize, exec: Exec) -> RankReport {
    let n = jets.n();
    let spectra: Vec<SpectralMatrix> = exec.map_range(jets.len(), |i| SpectralMatrix::new(jets.hess(i)));
    let global = spectra.iter().map(|s| s.spectral_norm()).fold(0.0, f64::max);
    let ranks: Vec<usize> = spectra
        .iter()
        .map(|s| {
            let tau = policy.threshold(s.spectrum().max(), global);
            s.eigenvalues().iter().filter(|&&v| v >= tau).count()
        })
        .collect();
    let interior: Vec<usize> = (0..jets.len()).filter(|&i| jets.grid.is_interior(i, margin)).collect();
    let min_rank = interior.iter().map(|&i| ranks[i]).min().unwrap_or(0);
    let max_rank = interior.iter().map(|&i| ranks[i]).max().unwrap_or(0);
    let attainment: Vec<usize> = interior.iter().copied().filter(|&i| ranks[i] == min_rank).collect();
    let null_directions = attainment
        .iter()
        .map(|&i| spectra[i].eigenvectors().columns(0, n - min_rank).clone_owned())
        .collect();
    RankReport {
        lambda_min: spectra.iter().map(|s| s.spectrum().min()).collect(),
        ranks,
        min_rank,
        max_rank,
        attainment,
        null_directions,
        policy: *policy,
        global_scale: global,
        margin,
        interior,
        n,
    }
}

/// `φ_ε = σ_{l+1}(∇²u + εI) + q_ε(∇²u)` at every point.
pub fn phi_field(jets: &JetField, l: usize, eps: f64, exec: Exec) -> Result<ScalarField, RankError> {
    let vals: Vec<Result<f64, SymError>> =
        exec.map_range(jets.len(), |i| phi_value(&SpectralMatrix::new(jets.hess(i)), l, eps));
    let values = vals.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ScalarField::new(jets.grid.clone(), values)?)
}

/// Largest principal angle between null spaces at pairs of attainment
/// points within `radius` of `center` (default: the first attainment
/// point).
///
/// Regions above 256 points are reduced to the 256 points farthest (in
/// angle) from the centre point before the pairwise sweep.
pub fn null_parallelism(report: &RankReport, jets: &JetField, center: Option<&[f64]>, radius: f64) -> Result<f64, RankError> {
    if !report.is_constant() {
        return Err(RankError::RankObstruction { min: report.min_rank, max: report.max_rank });
    }
    if report.attainment.is_empty() {
        return Err(RankError::EmptyRegion);
    }
    let grid = &jets.grid;
    let c = center.map(<[f64]>::to_vec).unwrap_or_else(|| grid.coords(report.attainment[0]));
    let dist = |i: usize| grid.coords(i).iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let chosen: Vec<usize> = (0..report.attainment.len()).filter(|&k| dist(report.attainment[k]) <= radius).collect();
    if chosen.is_empty() {
        return Err(RankError::EmptyRegion);
    }
    let bases = &report.null_directions;
    let reference = &bases[chosen[0]];
    let mut by_angle: Vec<(f64, usize)> = chosen.iter().map(|&k| (max_principal_angle(reference, &bases[k]), k)).collect();
    let mut worst = by_angle.iter().map(|p| p.0).fold(0.0, f64::max);
    by_angle.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut pool: Vec<usize> = by_angle.iter().take(256).map(|p| p.1).collect();
    pool.push(chosen[0]);
    for (a, &i) in pool.iter().enumerate() {
        for &j in &pool[a + 1..] {
            worst = worst.max(max_principal_angle(&bases[i], &bases[j]));
        }
    }
    Ok(worst)
}

/// Constants for `L ≤ C1·φ + C2·|∇φ|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityFit {
    pub c1: f64,
    pub c2: f64,
    pub residual: f64,
    pub points_tested: usize,
    pub exact_null: usize,
    pub margin: usize,
    pub lhs_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    // (L, φ, |∇φ|) per tested point
    #[serde(skip)]
    samples: Vec<(f64, f64, f64)>,
}

impl InequalityFit {
    /// `max_i (L_i − c1·φ_i − c2·|∇φ|_i)₊`.
    pub fn residual_at(&self, c1: f64, c2: f64) -> f64 {
        residual(&self.samples, c1, c2)
    }
}

fn residual(samples: &[(f64, f64, f64)], c1: f64, c2: f64) -> f64 {
    samples.iter().fold(0.0f64, |m, &(l, a, b)| m.max(l - c1 * a - c2 * b))
}

// Smallest C1 + C2 with C ≥ 0 and L ≤ C1·a + C2·b; a > 0, b ≥ 0.
fn fit_constants(samples: &[(f64, f64, f64)]) -> (f64, f64) {
    let active: Vec<(f64, f64, f64)> = samples.iter().copied().filter(|s| s.0 > 0.0).collect();
    if active.is_empty() {
        return (0.0, 0.0);
    }
    let lo = active.iter().filter(|s| s.2 == 0.0).map(|s| s.0 / s.1).fold(0.0, f64::max);
    let hi = active.iter().map(|s| s.0 / s.1).fold(lo, f64::max);
    let c2_for = |c1: f64| {
        active
            .iter()
            .filter(|s| s.2 > 0.0)
            .map(|s| (s.0 - c1 * s.1) / s.2)
            .fold(0.0, f64::max)
    };
    let g = |c1: f64| c1 + c2_for(c1);
    // golden-section search on the convex piecewise-linear objective
    let (mut a, mut b) = (lo, hi);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + b.abs()) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = g(x2);
        }
    }
    let candidates = [lo, hi, a, b, x1, x2];
    let mut c1 = candidates.iter().copied().min_by(|p, q| g(*p).total_cmp(&g(*q))).unwrap();
    let mut c2 = c2_for(c1);
    // round-off can leave a residual of a few ulps; inflate slightly
    for _ in 0..64 {
        if residual(&active, c1, c2) <= 0.0 {
            break;
        }
        c1 = c1 * (1.0 + 4.0 * f64::EPSILON) + f64::MIN_POSITIVE;
        c2 = c2 * (1.0 + 4.0 * f64::EPSILON) + f64::MIN_POSITIVE;
    }
    (c1, c2)
}

/// Fits the smallest `(C1, C2)` with `Σ F^{αβ}φ_{αβ} − φ_t ≤ C1·φ + C2·|∇φ|`
/// over interior points where `φ` is above [`PHI_FLOOR`].
///
/// `jets` must be of order ≥ 2; `phi_t` is the time derivative of `φ` in
/// parabolic mode.
pub fn diffineq_fit(
    op: &OperatorSpec,
    jets: &JetField,
    l: usize,
    eps: f64,
    phi_t: Option<&ScalarField>,
    t: f64,
    exec: Exec,
) -> Result<InequalityFit, RankError> {
    let phi = phi_field(jets, l, eps, exec)?;
    let pj = jet_with(&phi, 2, exec)?;
    let grid = &jets.grid;
    let candidates: Vec<usize> = (0..jets.len()).filter(|&i| grid.is_interior(i, MARGIN)).collect();
    let per_point = exec.map_slice(&candidates, |&i| {
        let pt = Point {
            r: jets.hess(i),
            p: jets.grad(i),
            u: jets.values[i],
            x: nalgebra::DVector::from_vec(grid.coords(i)),
            t,
        };
        let fr = op.gradient_r(&pt);
        let mut lhs = crate::linalg::frob(&fr, &pj.hess(i));
        if let Some(pt_field) = phi_t {
            lhs -= pt_field.values[i];
        }
        (lhs, phi.values[i], pj.grad(i).norm())
    });
    let exact_null = per_point.iter().filter(|s| s.1 < PHI_FLOOR).count();
    let samples: Vec<(f64, f64, f64)> = per_point.into_iter().filter(|s| s.1 >= PHI_FLOOR).collect();
    if samples.is_empty() {
        return Err(RankError::NoTestablePoints { exact_null });
    }
    let (c1, c2) = fit_constants(&samples);
    Ok(InequalityFit {
        c1,
        c2,
        residual: residual(&samples, c1, c2),
        points_tested: samples.len(),
        exact_null,
        margin: MARGIN,
        lhs_max: samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max),
        phi_min: samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min),
        phi_max: samples.iter().map(|s| s.1).fold(0.0, f64::max),
        samples,
    })
}

/// Sup of the third-derivative ratio over interior points and index
/// triples, with the location attaining it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThirdBound {
    pub sup: f64,
    pub at: Vec<f64>,
    pub triple: (usize, usize, usize),
    /// Third derivatives below this are rounding noise and count as zero.
    pub noise_floor: f64,
}

/// Stencil rounding noise level of third derivatives: `256·ε·max|u|/h³`.
pub fn third_noise_floor(jets: &JetField) -> f64 {
    let umax = jets.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    256.0 * f64::EPSILON * umax / jets.grid.h_min().powi(3)
}

pub fn third_bound_fit(jets: &JetField, exec: Exec) -> ThirdBound {
    let n = jets.n();
    let noise = third_noise_floor(jets);
    let grid = &jets.grid;
    let pts: Vec<usize> = (0..jets.len()).filter(|&i| grid.is_interior(i, MARGIN)).collect();
    let best = exec.map_slice(&pts, |&p| {
        let h = jets.hess(p);
        let mut best = (0.0, (0, 0, 0));
        for i in 0..n {
            for j in 0..n {
                for a in 0..n {
                    let v = jets.third(p, i, j, a);
                    if v.abs() <= noise {
                        continue;
                    }
                    let r = third_deriv_ratio(v, h[(i, i)], h[(j, j)]);
                    if r > best.0 {
                        best = (r, (i, j, a));
                    }
                }
            }
        }
        (best.0, p, best.1)
    });
    let (sup, p, triple) = best
        .into_iter()
        .fold((0.0, usize::MAX, (0, 0, 0)), |acc, b| if b.0 > acc.0 { b } else { acc });
    ThirdBound {
        sup,
        at: if p == usize::MAX { vec![] } else { grid.coords(p) },
        triple,
        noise_floor: noise,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityVerdict {
    pub pass: bool,
    /// `(t_prev, rank_prev, t, rank)` at the first decrease.
    pub violation: Option<(f64, usize, f64, usize)>,
    pub checked: usize,
}

/// Minimum rank must not decrease along snapshots with `t > 0`; the
/// initial datum is not constrained.
pub fn rank_monotonicity(trace: &FlowTrace) -> MonotonicityVerdict {
    let series: Vec<(f64, usize)> = trace
        .records
        .iter()
        .filter(|r| r.t > 0.0)
        .filter_map(|r| r.min_rank.map(|k| (r.t, k)))
        .collect();
    let violation = series
        .windows(2)
        .find(|w| w[1].1 < w[0].1)
        .map(|w| (w[0].0, w[0].1, w[1].0, w[1].1));
    MonotonicityVerdict {
        pass: violation.is_none(),
        violation,
        checked: series.len(),
    }
}

/// Writes one CSV row per grid point: coordinates, then the named columns.
pub fn dump_points(path: &Path, jets: &JetField, columns: &[(&str, &[f64])]) -> Result<(), RankError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=jets.n()).map(|a| format!("x{a}")).collect();
    header.extend(columns.iter().map(|c| c.0.to_string()));
    w.write_record(&header)?;
    for i in 0..jets.len() {
        let mut row: Vec<String> = jets.grid.coords(i).iter().map(|c| c.to_string()).collect();
        row.extend(columns.iter().map(|c| c.1[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfield::{jet, Grid};

    fn jets2(f: impl Fn(&[f64]) -> f64 + Sync + Send, h: f64, order: usize) -> JetField {
        jet(&ScalarField::from_fn(Grid::cube(-1.0, 1.0, h, 2).unwrap(), f), order).unwrap()
    }

    #[test]
    fn degenerate_quadratic_has_rank_one() {
        let j = jets2(|x| 0.5 * x[0] * x[0], 0.1, 2);
        let rep = rank_field(&j, &ThresholdPolicy::default(), MARGIN, Exec::default());
        assert!(rep.is_constant());
        assert_eq!(rep.min_rank, 1);
        let ey = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        for b in &rep.null_directions {
            assert!(max_principal_angle(b, &ey) < 1e-8);
        }
        assert!(null_parallelism(&rep, &j, None, 10.0).unwrap() < 1e-8);
        let phi = phi_field(&j, 1, 0.0, Exec::default()).unwrap();
        assert!(phi.max_abs() < 1e-10);
    }

    #[test]
    fn full_rank_and_quartic() {
        let j = jets2(|x| 0.5 * (x[0] * x[0] + x[1] * x[1]), 0.1, 2);
        assert_eq!(rank_field(&j, &ThresholdPolicy::default(), MARGIN, Exec::default()).min_rank, 2);
        let q = jets2(|x| x[0].powi(4) + x[1].powi(4), 0.1, 2);
        let rep = rank_field(&q, &ThresholdPolicy::default(), MARGIN, Exec::default());
        assert_eq!(rep.min_rank, 0);
        assert_eq!(rep.attainment.len(), 1);
        assert!(matches!(null_parallelism(&rep, &q, None, 1.0), Err(RankError::RankObstruction { .. })));
    }

    #[test]
    fn phi_on_two_dimensional_slightly_convex() {
        let d = 0.01;
        let j = jets2(|x| 0.5 * x[0] * x[0] + 0.5 * d * x[1] * x[1], 0.1, 2);
        let phi = phi_field(&j, 1, 0.0, Exec::default()).unwrap();
        assert!(phi.values.iter().all(|v| (v - d).abs() < 1e-10));
    }

    #[test]
    fn lp_fit_basics() {
        let s = vec![(1.0, 1.0, 0.0), (2.0, 0.5, 1.0), (-3.0, 1.0, 1.0)];
        let (c1, c2) = fit_constants(&s);
        assert!(residual(&s, c1, c2) <= 0.0);
        // C1 ≥ 1 from the first row, then C2 ≥ 1.5
        assert!((c1 - 1.0).abs() < 1e-9 && (c2 - 1.5).abs() < 1e-9, "{c1} {c2}");
        assert_eq!(fit_constants(&[(-1.0, 1.0, 1.0)]), (0.0, 0.0));
    }

    #[test]
    fn quartic_third_bound() {
        let j = jets2(|x| x[0].powi(4) + x[1].powi(4), 0.05, 3);
        let b = third_bound_fit(&j, Exec::default());
        assert!((b.sup - 2.0 * 3f64.sqrt()).abs() < 1e-6, "{b:?}");
        let quad = jets2(|x| x[0] * x[0] + x[0] * x[1], 0.1, 3);
        assert_eq!(third_bound_fit(&quad, Exec::default()).sup, 0.0);
    }
}
