use super::{DtPolicy, FlowError, FlowTrace, MonitorRecord, Snapshot};
use crate::expr::{Ctx, Expr};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

/// Closed counterclockwise polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneCurve {
    vertices: Vec<[f64; 2]>,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

impl PlaneCurve {
    pub const MIN_VERTICES: usize = 16;

    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self, FlowError> {
        if vertices.len() < Self::MIN_VERTICES {
            return Err(FlowError::InvalidCurve(format!("{} vertices, need at least {}", vertices.len(), Self::MIN_VERTICES)));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidCurve("non-finite vertex".into()));
        }
        let c = PlaneCurve { vertices };
        if c.area() <= 0.0 {
            return Err(FlowError::InvalidCurve("vertices must be ordered counterclockwise".into()));
        }
        if !c.is_simple() {
            return Err(FlowError::InvalidCurve("curve self-intersects".into()));
        }
        Ok(c)
    }

    pub fn circle(center: [f64; 2], radius: f64, m: usize) -> Result<Self, FlowError> {
        let v = (0..m)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / m as f64;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            })
            .collect();
        Self::new(v)
    }

    /// Ellipse with semi-axes `a`, `b`, vertices equally spaced in arc
    /// length.
    pub fn ellipse(center: [f64; 2], a: f64, b: f64, m: usize) -> Result<Self, FlowError> {
        let fine = 64 * m.max(1);
        let v: Vec<[f64; 2]> = (0..fine)
            .map(|k| {
                let s = std::f64::consts::TAU * k as f64 / fine as f64;
                [center[0] + a * s.cos(), center[1] + b * s.sin()]
            })
            .collect();
        Self::new(resample(&v, m))
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn at(&self, i: isize) -> [f64; 2] {
        let m = self.vertices.len() as isize;
        self.vertices[i.rem_euclid(m) as usize]
    }

    /// Signed shoelace area (positive for counterclockwise).
    pub fn area(&self) -> f64 {
        let m = self.vertices.len() as isize;
        0.5 * (0..m).map(|i| cross(self.at(i), self.at(i + 1))).sum::<f64>()
    }

    pub fn length(&self) -> f64 {
        self.edges().iter().sum()
    }

    /// `|X_{i+1} − X_i|`.
    pub fn edges(&self) -> Vec<f64> {
        let m = self.vertices.len() as isize;
        (0..m).map(|i| norm(sub(self.at(i + 1), self.at(i)))).collect()
    }

    /// Signed curvature of the circle through three consecutive vertices;
    /// positive where the curve turns left.
    pub fn curvature(&self) -> Vec<f64> {
        let m = self.vertices.len() as isize;
        (0..m)
            .map(|i| {
                let (p, c, n) = (self.at(i - 1), self.at(i), self.at(i + 1));
                let (a, b) = (sub(c, p), sub(n, c));
                2.0 * cross(a, b) / (norm(a) * norm(b) * norm(sub(n, p)))
            })
            .collect()
    }

    /// Outward unit normals, perpendicular to the chord `X_{i+1} − X_{i−1}`.
    pub fn normals(&self) -> Vec<[f64; 2]> {
        let m = self.vertices.len() as isize;
        (0..m)
            .map(|i| {
                let c = sub(self.at(i + 1), self.at(i - 1));
                let l = norm(c);
                [c[1] / l, -c[0] / l]
            })
            .collect()
    }

    /// Mean distance of the vertices from their centroid.
    pub fn mean_radius(&self) -> f64 {
        let m = self.vertices.len() as f64;
        let cx = self.vertices.iter().map(|v| v[0]).sum::<f64>() / m;
        let cy = self.vertices.iter().map(|v| v[1]).sum::<f64>() / m;
        self.vertices.iter().map(|v| norm(sub(*v, [cx, cy]))).sum::<f64>() / m
    }

    /// No two non-adjacent edges intersect (sweep over edges sorted by
    /// their left end).
    pub fn is_simple(&self) -> bool {
        let m = self.vertices.len();
        let seg = |i: usize| (self.vertices[i], self.vertices[(i + 1) % m]);
        let mut order: Vec<(f64, f64, usize)> = (0..m)
            .map(|i| {
                let (a, b) = seg(i);
                (a[0].min(b[0]), a[0].max(b[0]), i)
            })
            .collect();
        order.sort_by(|p, q| p.0.total_cmp(&q.0));
        for (k, &(_, hi, i)) in order.iter().enumerate() {
            for &(lo2, _, j) in &order[k + 1..] {
                if lo2 > hi {
                    break;
                }
                let adjacent = (i + 1) % m == j || (j + 1) % m == i;
                if !adjacent && segments_cross(seg(i), seg(j)) {
                    return false;
                }
            }
        }
        true
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), FlowError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y"])?;
        for v in &self.vertices {
            w.write_record([v[0].to_string(), v[1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `x,y` format written by [`PlaneCurve::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self, FlowError> {
        let mut r = csv::Reader::from_path(path)?;
        let mut v = Vec::new();
        for rec in r.deserialize() {
            let (x, y): (f64, f64) = rec?;
            v.push([x, y]);
        }
        PlaneCurve::new(v)
    }
}

fn segments_cross(s: ([f64; 2], [f64; 2]), r: ([f64; 2], [f64; 2])) -> bool {
    let o = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| cross(sub(b, a), sub(c, a));
    let (d1, d2) = (o(r.0, r.1, s.0), o(r.0, r.1, s.1));
    let (d3, d4) = (o(s.0, s.1, r.0), o(s.0, s.1, r.1));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    (d1 == 0.0 && on(r.0, r.1, s.0))
        || (d2 == 0.0 && on(r.0, r.1, s.1))
        || (d3 == 0.0 && on(s.0, s.1, r.0))
        || (d4 == 0.0 && on(s.0, s.1, r.1))
}

// m points equally spaced in arc length along the closed polygon, starting
// at its first vertex.
fn resample(v: &[[f64; 2]], m: usize) -> Vec<[f64; 2]> {
    let k = v.len();
    let mut cum = Vec::with_capacity(k + 1);
    cum.push(0.0);
    for i in 0..k {
        let l = norm(sub(v[(i + 1) % k], v[i]));
        cum.push(cum[i] + l);
    }
    let total = cum[k];
    let mut out = Vec::with_capacity(m);
    let mut seg = 0;
    for j in 0..m {
        let s = total * j as f64 / m as f64;
        while seg + 1 < k && cum[seg + 1] <= s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let w = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let (a, b) = (v[seg], v[(seg + 1) % k]);
        out.push([a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]);
    }
    out
}

type SpeedFn = dyn Fn(f64, [f64; 2], [f64; 2], f64) -> f64 + Send + Sync;

/// Normal speed `F(κ, X, n, t)`.
#[derive(Clone)]
pub struct CurveSpeed {
    pub name: String,
    f: Arc<SpeedFn>,
}

impl fmt::Debug for CurveSpeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurveSpeed").field("name", &self.name).finish_non_exhaustive()
    }
}

impl CurveSpeed {
    pub fn new(name: impl Into<String>, f: impl Fn(f64, [f64; 2], [f64; 2], f64) -> f64 + Send + Sync + 'static) -> Self {
        CurveSpeed { name: name.into(), f: Arc::new(f) }
    }

    /// `F = κ` (curve shortening).
    pub fn curvature() -> Self {
        Self::new("kappa", |k, _, _, _| k)
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _, _, _| 0.0)
    }

    /// Expression with the curvature as `r_11` (the one-dimensional
    /// Hessian), position as `x_1, x_2`, outward normal as `p_1, p_2`.
    pub fn from_expr(expr: Expr) -> Self {
        let name = expr.to_string();
        Self::new(name, move |k, x, n, t| {
            expr.eval(&Ctx { n: 1, r: &[k], p: &n, u: 0.0, x: &x, t, args: &[] })
        })
    }

    pub fn eval(&self, kappa: f64, x: [f64; 2], n: [f64; 2], t: f64) -> f64 {
        (self.f)(kappa, x, n, t)
    }

    /// `∂F/∂κ` by central differences.
    pub fn d_kappa(&self, kappa: f64, x: [f64; 2], n: [f64; 2], t: f64) -> f64 {
        let h = 1e-6 * (1.0 + kappa.abs());
        (self.eval(kappa + h, x, n, t) - self.eval(kappa - h, x, n, t)) / (2.0 * h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveOptions {
    /// `c` in `dt ≤ c·(min edge)²/max |∂F/∂κ|`.
    pub cfl: f64,
    pub redistribute: bool,
    /// Collapse is declared below this enclosed area.
    pub area_floor: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions { cfl: 0.25, redistribute: true, area_floor: 1e-6 }
    }
}

impl CurveOptions {
    /// Stability limit for `curve` under `speed` at time `t`.
    pub fn limit(&self, curve: &PlaneCurve, speed: &CurveSpeed, t: f64) -> f64 {
        let (k, n) = (curve.curvature(), curve.normals());
        let d = curve
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &x)| speed.d_kappa(k[i], x, n[i], t).abs())
            .fold(0.0, f64::max);
        let e = curve.edges().into_iter().fold(f64::INFINITY, f64::min);
        if d > 0.0 {
            self.cfl * e * e / d
        } else {
            f64::INFINITY
        }
    }
}

/// Moves every vertex by `−F·n·dt`, then redistributes vertices evenly in
/// arc length (skipped when nothing moved).
pub fn step_curve(curve: &PlaneCurve, speed: &CurveSpeed, t: f64, dt: f64, opts: &CurveOptions) -> Result<PlaneCurve, FlowError> {
    if dt == 0.0 {
        return Ok(curve.clone());
    }
    let limit = opts.limit(curve, speed, t);
    if dt > limit * (1.0 + 1e-12) {
        return Err(FlowError::StabilityViolation { t, dt, limit });
    }
    let (k, n) = (curve.curvature(), curve.normals());
    let mut moved = false;
    let mut v: Vec<[f64; 2]> = curve
        .vertices
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = speed.eval(k[i], x, n[i], t);
            moved |= f != 0.0;
            [x[0] - dt * f * n[i][0], x[1] - dt * f * n[i][1]]
        })
        .collect();
    if opts.redistribute && moved {
        v = resample(&v, v.len());
    }
    if v.iter().flatten().any(|c| !c.is_finite()) {
        return Err(FlowError::BlowUp { t: t + dt, max: f64::INFINITY });
    }
    let next = PlaneCurve { vertices: v };
    let area = next.area();
    if area < opts.area_floor {
        return Err(FlowError::CollapseDetected { t: t + dt, area });
    }
    if !next.is_simple() {
        return Err(FlowError::SelfIntersection { t: t + dt });
    }
    Ok(next)
}

#[derive(Clone, Debug)]
pub struct CurveFlowProblem {
    pub initial: PlaneCurve,
    pub speed: CurveSpeed,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub dt: DtPolicy,
    pub options: CurveOptions,
}

fn curve_record(c: &PlaneCurve, t: f64, steps: usize) -> MonitorRecord {
    let k = c.curvature();
    MonitorRecord {
        t,
        steps,
        min_kappa: Some(k.iter().copied().fold(f64::INFINITY, f64::min)),
        max_kappa: Some(k.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        area: Some(c.area()),
        length: Some(c.length()),
        radius: Some(c.mean_radius()),
        ..Default::default()
    }
}

/// Integrates to `t_end` or until the collapse floor, which ends the run
/// normally with `collapsed_at` set.
pub fn run_curve(problem: &CurveFlowProblem) -> Result<FlowTrace, FlowError> {
    problem.dt.validate()?;
    let mut targets: Vec<f64> = problem.snapshots.iter().copied().filter(|&s| s > 0.0 && s < problem.t_end).collect();
    targets.push(problem.t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    targets.retain(|&s| s > 0.0);

    let mut trace = FlowTrace::new();
    let mut c = problem.initial.clone();
    let mut t = 0.0;
    trace.push(Snapshot::Curve(c.clone()), curve_record(&c, 0.0, 0));
    'outer: for &target in &targets {
        while t < target {
            let limit = problem.options.limit(&c, &problem.speed, t);
            let mut dt = problem.dt.step(t, limit)?.min(target - t);
            if target - (t + dt) <= 1e-12 * target {
                dt = target - t;
            }
            match step_curve(&c, &problem.speed, t, dt, &problem.options) {
                Ok(next) => c = next,
                Err(FlowError::CollapseDetected { t: tc, .. }) => {
                    trace.collapsed_at = Some(tc);
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
            t = if dt == target - t { target } else { t + dt };
            let kmin = c.curvature().into_iter().fold(f64::INFINITY, f64::min);
            trace.stats.record(dt, Some(kmin));
        }
        trace.push(Snapshot::Curve(c.clone()), curve_record(&c, t, trace.stats.steps));
    }
    if trace.collapsed_at.is_some() && t > *trace.times.last().unwrap() {
        trace.push(Snapshot::Curve(c.clone()), curve_record(&c, t, trace.stats.steps));
    }
    Ok(trace)
}
