use super::{DtPolicy, FlowError, FlowTrace, MonitorRecord, Snapshot};
use crate::expr::Expr;
use crate::gridfield::{jet_with, JetField, ScalarField};
use crate::linalg::sym;
use crate::opcheck::{OperatorSpec, Point};
use crate::par::Exec;
use crate::rankmon::{diffineq_fit, phi_field, rank_field, RankError, ThresholdPolicy, MARGIN};
use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Values on the outer layer of non-periodic axes.
#[derive(Clone, Debug, PartialEq)]
pub enum Boundary {
    /// Every axis periodic; no boundary points.
    Periodic,
    /// Boundary values of the initial field are held fixed.
    Dirichlet,
    /// Boundary values from an expression in `x_i` and `t`.
    DirichletExpr(Expr),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiMonitor {
    pub l: usize,
    #[serde(default)]
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub rank: bool,
    pub convexity: bool,
    /// `λ_min ≥ −convexity_tol` counts as convex.
    pub convexity_tol: f64,
    pub phi: Option<PhiMonitor>,
    /// Parabolic inequality fit at interior snapshots (needs `phi`).
    pub diffineq: bool,
    pub policy: ThresholdPolicy,
    pub margin: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            rank: true,
            convexity: true,
            convexity_tol: 1e-6,
            phi: None,
            diffineq: false,
            policy: ThresholdPolicy::default(),
            margin: MARGIN,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GraphFlowProblem {
    pub op: OperatorSpec,
    pub initial: ScalarField,
    pub t_end: f64,
    /// Snapshot times in `(0, t_end]`; `0` and `t_end` are always recorded.
    pub snapshots: Vec<f64>,
    pub dt: DtPolicy,
    /// Stability constant `c` in `dt ≤ c·h²/(n·λ_max(F^{αβ}))`.
    pub cfl: f64,
    pub boundary: Boundary,
    /// `max |u|` above this aborts the run.
    pub blow_up: f64,
    pub monitors: MonitorConfig,
    pub exec: Exec,
}

impl GraphFlowProblem {
    pub fn new(op: OperatorSpec, initial: ScalarField, t_end: f64, boundary: Boundary) -> Self {
        GraphFlowProblem {
            op,
            initial,
            t_end,
            snapshots: vec![],
            dt: DtPolicy::default(),
            cfl: 0.2,
            boundary,
            blow_up: 1e8,
            monitors: MonitorConfig::default(),
            exec: Exec::default(),
        }
    }

    fn validate(&self) -> Result<(), FlowError> {
        self.dt.validate()?;
        let grid = &self.initial.grid;
        if grid.rank() != self.op.n {
            return Err(FlowError::InvalidProblem(format!(
                "operator dimension {} on a rank-{} grid",
                self.op.n,
                grid.rank()
            )));
        }
        if matches!(self.boundary, Boundary::Periodic) && grid.periodic.iter().any(|p| !p) {
            return Err(FlowError::InvalidProblem("periodic boundary needs a fully periodic grid".into()));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) || self.cfl.is_nan() || self.cfl <= 0.0 {
            return Err(FlowError::InvalidProblem("t_end must be finite and nonnegative, cfl positive".into()));
        }
        if let Boundary::DirichletExpr(e) = &self.boundary {
            let u = e.usage();
            if u.r || u.p || u.u || u.args > 0 || u.dim > grid.rank() {
                return Err(FlowError::InvalidProblem("boundary expression may use only x_i and t".into()));
            }
        }
        Ok(())
    }
}

struct Engine<'a> {
    op: &'a OperatorSpec,
    initial: &'a ScalarField,
    boundary: &'a Boundary,
    bpoints: Vec<usize>,
    cfl: f64,
    blow_up: f64,
    exec: Exec,
}

impl<'a> Engine<'a> {
    fn new(op: &'a OperatorSpec, initial: &'a ScalarField, boundary: &'a Boundary, cfl: f64, blow_up: f64, exec: Exec) -> Self {
        let g = &initial.grid;
        let bpoints = (0..g.len()).filter(|&i| g.is_boundary(i)).collect();
        Engine { op, initial, boundary, bpoints, cfl, blow_up, exec }
    }

    fn field(&self, values: Vec<f64>, t: f64) -> Result<ScalarField, FlowError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FlowError::BlowUp { t, max: values[i].abs() });
        }
        let f = ScalarField { grid: self.initial.grid.clone(), values };
        let max = f.max_abs();
        if max > self.blow_up {
            return Err(FlowError::BlowUp { t, max });
        }
        Ok(f)
    }

    fn set_boundary(&self, values: &mut [f64], t: f64) {
        for &i in &self.bpoints {
            values[i] = match self.boundary {
                Boundary::Periodic | Boundary::Dirichlet => self.initial.values[i],
                Boundary::DirichletExpr(e) => e.eval_at(&self.initial.grid.coords(i), t),
            };
        }
    }

    /// `F` at every point (zero on boundary points) and, when asked, the
    /// largest eigenvalue of `F^{αβ}` over non-boundary points.
    fn rhs(&self, u: &ScalarField, t: f64, want_lambda: bool) -> Result<(Vec<f64>, f64), FlowError> {
        let jets = jet_with(u, 2, self.exec)?;
        let grid = &u.grid;
        let out = self.exec.map_range(u.values.len(), |i| {
            if grid.is_boundary(i) {
                return (0.0, 0.0);
            }
            let pt = point(&jets, i, t);
            if want_lambda {
                let lam = SymmetricEigen::new(sym(&self.op.gradient_r(&pt))).eigenvalues.max();
                (self.op.value(&pt), lam)
            } else {
                (self.op.value(&pt), 0.0)
            }
        });
        let lam = out.iter().map(|o| o.1).fold(0.0, f64::max);
        let f: Vec<f64> = out.into_iter().map(|o| o.0).collect();
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(FlowError::BlowUp { t, max: f[i].abs() });
        }
        Ok((f, lam))
    }

    fn limit(&self, lam: f64) -> f64 {
        let h = self.initial.grid.h_min();
        if lam > 0.0 {
            self.cfl * h * h / (self.op.n as f64 * lam)
        } else {
            f64::INFINITY
        }
    }

    // Heun's method given k1 = F(u, t).
    fn rk2(&self, u: &ScalarField, k1: &[f64], t: f64, dt: f64) -> Result<ScalarField, FlowError> {
        let mut v1: Vec<f64> = u.values.iter().zip(k1).map(|(a, k)| a + dt * k).collect();
        self.set_boundary(&mut v1, t + dt);
        let u1 = self.field(v1, t + dt)?;
        let (k2, _) = self.rhs(&u1, t + dt, false)?;
        let mut v2: Vec<f64> = u
            .values
            .iter()
            .zip(k1.iter().zip(&k2))
            .map(|(a, (p, q))| a + 0.5 * dt * (p + q))
            .collect();
        self.set_boundary(&mut v2, t + dt);
        self.field(v2, t + dt)
    }
}

fn point(jets: &JetField, i: usize, t: f64) -> Point {
    Point {
        r: jets.hess(i),
        p: jets.grad(i),
        u: jets.values[i],
        x: DVector::from_vec(jets.grid.coords(i)),
        t,
    }
}

/// Current explicit stability limit `c·h²/(n·λ_max(F^{αβ}))`.
pub fn graph_stability_limit(problem: &GraphFlowProblem, state: &ScalarField, t: f64) -> Result<f64, FlowError> {
    let e = engine(problem, state);
    let (_, lam) = e.rhs(state, t, true)?;
    Ok(e.limit(lam))
}

fn engine<'a>(p: &'a GraphFlowProblem, _state: &ScalarField) -> Engine<'a> {
    Engine::new(&p.op, &p.initial, &p.boundary, p.cfl, p.blow_up, p.exec)
}

/// One RK2 step from `t` to `t + dt`.
pub fn step_graph(problem: &GraphFlowProblem, state: &ScalarField, t: f64, dt: f64) -> Result<ScalarField, FlowError> {
    problem.validate()?;
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let e = engine(problem, state);
    let (k1, lam) = e.rhs(state, t, true)?;
    let limit = e.limit(lam);
    if dt > limit * (1.0 + 1e-12) {
        return Err(FlowError::StabilityViolation { t, dt, limit });
    }
    e.rk2(state, &k1, t, dt)
}

fn monitor(p: &GraphFlowProblem, u: &ScalarField, t: f64, steps: usize) -> Result<MonitorRecord, FlowError> {
    let m = &p.monitors;
    let mut rec = MonitorRecord {
        t,
        steps,
        max_abs: Some(u.max_abs()),
        mean: Some(u.values.iter().sum::<f64>() / u.values.len() as f64),
        ..Default::default()
    };
    if !(m.rank || m.convexity || m.phi.is_some()) {
        return Ok(rec);
    }
    let jets = jet_with(u, 2, p.exec)?;
    let report = rank_field(&jets, &m.policy, m.margin, p.exec);
    let lmin = report.interior.iter().map(|&i| report.lambda_min[i]).fold(f64::INFINITY, f64::min);
    if m.rank {
        rec.min_rank = Some(report.min_rank);
        rec.max_rank = Some(report.max_rank);
    }
    if m.convexity {
        rec.lambda_min = Some(lmin);
        rec.convex = Some(lmin >= -m.convexity_tol);
    }
    if let Some(pm) = m.phi {
        let phi = phi_field(&jets, pm.l, pm.eps, p.exec).map_err(|source| FlowError::Monitor { t, source })?;
        let vals = report.interior.iter().map(|&i| phi.values[i]);
        rec.phi_min = Some(vals.clone().fold(f64::INFINITY, f64::min));
        rec.phi_max = Some(vals.fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(rec)
}

/// Integrates to `t_end`, recording monitors at `0`, each requested
/// snapshot time and `t_end`. Steps are shortened to land on snapshot
/// times exactly.
pub fn run_graph(problem: &GraphFlowProblem) -> Result<FlowTrace, FlowError> {
    problem.validate()?;
    let e = engine(problem, &problem.initial);
    let mut targets: Vec<f64> = problem
        .snapshots
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < problem.t_end)
        .collect();
    targets.push(problem.t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    targets.retain(|&s| s > 0.0);

    let mut trace = FlowTrace::new();
    let mut u = problem.initial.clone();
    let mut t = 0.0;
    trace.push(Snapshot::Field(u.clone()), monitor(problem, &u, t, 0)?);
    for &target in &targets {
        while t < target {
            let (k1, lam) = e.rhs(&u, t, true)?;
            let limit = e.limit(lam);
            let mut dt = problem.dt.step(t, limit)?.min(target - t);
            if target - (t + dt) <= 1e-12 * target {
                dt = target - t;
            }
            u = e.rk2(&u, &k1, t, dt)?;
            t = if dt == target - t { target } else { t + dt };
            trace.stats.record(dt, None);
        }
        trace.push(Snapshot::Field(u.clone()), monitor(problem, &u, t, trace.stats.steps)?);
    }
    if problem.monitors.diffineq {
        if let Some(pm) = problem.monitors.phi {
            parabolic_fits(problem, &mut trace, pm)?;
        }
    }
    Ok(trace)
}

// φ_t by central differences between neighbouring snapshots.
fn parabolic_fits(p: &GraphFlowProblem, trace: &mut FlowTrace, pm: PhiMonitor) -> Result<(), FlowError> {
    let fields: Vec<&ScalarField> = trace
        .snapshots
        .iter()
        .filter_map(|s| match s {
            Snapshot::Field(f) => Some(f),
            Snapshot::Curve(_) => None,
        })
        .collect();
    let mut phis = Vec::with_capacity(fields.len());
    let mut jets = Vec::with_capacity(fields.len());
    for (k, f) in fields.iter().enumerate() {
        let j = jet_with(f, 2, p.exec)?;
        phis.push(phi_field(&j, pm.l, pm.eps, p.exec).map_err(|source| FlowError::Monitor { t: trace.times[k], source })?);
        jets.push(j);
    }
    for k in 1..fields.len().saturating_sub(1) {
        let dt = trace.times[k + 1] - trace.times[k - 1];
        let values = phis[k + 1].values.iter().zip(&phis[k - 1].values).map(|(a, b)| (a - b) / dt).collect();
        let phi_t = ScalarField { grid: phis[k].grid.clone(), values };
        let t = trace.times[k];
        let rec = &mut trace.records[k];
        match diffineq_fit(&p.op, &jets[k], pm.l, pm.eps, Some(&phi_t), t, p.exec) {
            Ok(fit) => {
                rec.fit_c1 = Some(fit.c1);
                rec.fit_c2 = Some(fit.c2);
                rec.fit_residual = Some(fit.residual);
            }
            Err(RankError::NoTestablePoints { .. }) => {
                rec.fit_c1 = Some(0.0);
                rec.fit_c2 = Some(0.0);
                rec.fit_residual = Some(0.0);
            }
            Err(source) => return Err(FlowError::Monitor { t, source }),
        }
    }
    Ok(())
}

/// Relaxes `u_t = F` until `max |F| ≤ tol` over non-boundary points.
pub fn steady_solve(
    op: &OperatorSpec,
    initial: &ScalarField,
    boundary: &Boundary,
    tol: f64,
    max_steps: usize,
    exec: Exec,
) -> Result<ScalarField, FlowError> {
    if tol.is_infinite() {
        return Ok(initial.clone());
    }
    let mut problem = GraphFlowProblem::new(op.clone(), initial.clone(), 0.0, boundary.clone());
    problem.exec = exec;
    problem.validate()?;
    let e = engine(&problem, initial);
    let mut u = initial.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_steps {
        let (k1, lam) = e.rhs(&u, 0.0, true)?;
        residual = k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual <= tol {
            return Ok(u);
        }
        let dt = e.limit(lam);
        if !dt.is_finite() {
            return Err(FlowError::InvalidProblem("operator does not depend on the Hessian".into()));
        }
        u = e.rk2(&u, &k1, 0.0, dt)?;
    }
    let (k1, _) = e.rhs(&u, 0.0, false)?;
    residual = residual.min(k1.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    if residual <= tol {
        return Ok(u);
    }
    Err(FlowError::NonConvergence { steps: max_steps, residual })
}
