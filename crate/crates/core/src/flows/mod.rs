//! Evolution engines: explicit parabolic graph flows `u_t = F(∇²u, ∇u, u, x, t)`
//! on grids and polygonal plane-curve flows `X_t = −F(κ, X, n)·n`, each
//! recording monitor values at requested snapshot times.
//!
//! Convexity and rank are monitored, never enforced.

mod curve;
mod graph;

pub use curve::{run_curve, step_curve, CurveFlowProblem, CurveOptions, CurveSpeed, PlaneCurve};
pub use graph::{
    graph_stability_limit, run_graph, steady_solve, step_graph, Boundary, GraphFlowProblem, MonitorConfig,
    PhiMonitor,
};

use crate::gridfield::{GridError, ScalarField};
use crate::rankmon::{rank_monotonicity, MonotonicityVerdict, RankError};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("blow-up at t = {t}: max |u| = {max:e}")]
    BlowUp { t: f64, max: f64 },
    #[error("time step {dt:e} exceeds the stability limit {limit:e} at t = {t}")]
    StabilityViolation { t: f64, dt: f64, limit: f64 },
    #[error("no convergence after {steps} steps (residual {residual:e})")]
    NonConvergence { steps: usize, residual: f64 },
    #[error("curve self-intersects at t = {t}")]
    SelfIntersection { t: f64 },
    #[error("curve collapsed at t = {t} (area {area:e})")]
    CollapseDetected { t: f64, area: f64 },
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid flow problem: {0}")]
    InvalidProblem(String),
    #[error("at t = {t}: {source}")]
    Monitor { t: f64, source: RankError },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FlowError {
    /// Simulation time at which the error occurred, when known.
    pub fn time(&self) -> Option<f64> {
        match self {
            FlowError::BlowUp { t, .. }
            | FlowError::StabilityViolation { t, .. }
            | FlowError::SelfIntersection { t }
            | FlowError::CollapseDetected { t, .. }
            | FlowError::Monitor { t, .. } => Some(*t),
            _ => None,
        }
    }
}

/// `Fixed(dt)` or `Cfl(c)`: `dt = c ×` the stability limit, `0 < c ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    Fixed(f64),
    Cfl(f64),
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy::Cfl(1.0)
    }
}

impl DtPolicy {
    pub(crate) fn step(&self, t: f64, limit: f64) -> Result<f64, FlowError> {
        match *self {
            DtPolicy::Fixed(dt) if dt > limit * (1.0 + 1e-12) => Err(FlowError::StabilityViolation { t, dt, limit }),
            DtPolicy::Fixed(dt) => Ok(dt),
            DtPolicy::Cfl(c) => Ok(c.clamp(0.0, 1.0) * limit),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), FlowError> {
        match *self {
            DtPolicy::Fixed(dt) if dt > 0.0 && dt.is_finite() => Ok(()),
            DtPolicy::Cfl(c) if c > 0.0 && c <= 1.0 => Ok(()),
            p => Err(FlowError::InvalidProblem(format!("bad time step policy {p:?}"))),
        }
    }
}

/// Monitor values at one snapshot; absent entries are left empty in CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub steps: usize,
    pub min_rank: Option<usize>,
    pub max_rank: Option<usize>,
    pub lambda_min: Option<f64>,
    pub convex: Option<bool>,
    pub phi_min: Option<f64>,
    pub phi_max: Option<f64>,
    pub fit_c1: Option<f64>,
    pub fit_c2: Option<f64>,
    pub fit_residual: Option<f64>,
    pub max_abs: Option<f64>,
    pub mean: Option<f64>,
    pub min_kappa: Option<f64>,
    pub max_kappa: Option<f64>,
    pub area: Option<f64>,
    pub length: Option<f64>,
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Snapshot {
    Field(ScalarField),
    Curve(PlaneCurve),
}

/// Extremes over every time step, not only snapshots.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: usize,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub min_kappa: Option<f64>,
}

impl StepStats {
    pub(crate) fn record(&mut self, dt: f64, kappa: Option<f64>) {
        self.steps += 1;
        self.dt_min = Some(self.dt_min.map_or(dt, |d| d.min(dt)));
        self.dt_max = Some(self.dt_max.map_or(dt, |d| d.max(dt)));
        if let Some(k) = kappa {
            self.min_kappa = Some(self.min_kappa.map_or(k, |m| m.min(k)));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub records: Vec<MonitorRecord>,
    pub stats: StepStats,
    /// Set when a curve run stopped at the collapse floor.
    pub collapsed_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub snapshots: usize,
    pub t_final: f64,
    pub stats: StepStats,
    pub collapsed_at: Option<f64>,
    pub rank_monotonicity: MonotonicityVerdict,
    /// `None` when convexity was not monitored.
    pub convexity_preserved: Option<bool>,
    pub min_lambda: Option<f64>,
    pub min_kappa: Option<f64>,
}

impl FlowTrace {
    pub(crate) fn new() -> Self {
        FlowTrace { times: vec![], snapshots: vec![], records: vec![], stats: StepStats::default(), collapsed_at: None }
    }

    pub(crate) fn push(&mut self, snap: Snapshot, rec: MonitorRecord) {
        self.times.push(rec.t);
        self.snapshots.push(snap);
        self.records.push(rec);
    }

    pub fn summary(&self) -> FlowSummary {
        let convex: Vec<bool> = self.records.iter().filter_map(|r| r.convex).collect();
        let fold_min = |f: fn(&MonitorRecord) -> Option<f64>| {
            self.records.iter().filter_map(f).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
        };
        FlowSummary {
            snapshots: self.snapshots.len(),
            t_final: self.times.last().copied().unwrap_or(0.0),
            stats: self.stats.clone(),
            collapsed_at: self.collapsed_at,
            rank_monotonicity: rank_monotonicity(self),
            convexity_preserved: (!convex.is_empty()).then(|| convex.iter().all(|&c| c)),
            min_lambda: fold_min(|r| r.lambda_min),
            min_kappa: self.stats.min_kappa.or(fold_min(|r| r.min_kappa)),
        }
    }

    /// Per-snapshot files (`field_NNNN.mclb` or `curve_NNNN.csv`) and
    /// `monitors.csv`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<(), FlowError> {
        fs::create_dir_all(dir)?;
        for (k, snap) in self.snapshots.iter().enumerate() {
            match snap {
                Snapshot::Field(f) => f.write_binary(&dir.join(format!("field_{k:04}.mclb")))?,
                Snapshot::Curve(c) => c.write_csv(&dir.join(format!("curve_{k:04}.csv")))?,
            }
        }
        let mut w = csv::Writer::from_path(dir.join("monitors.csv"))?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Snapshots, `monitors.csv` and `report.json` (the [`FlowSummary`]).
    pub fn write_dir(&self, dir: &Path) -> Result<(), FlowError> {
        self.write_snapshots(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&self.summary())?)?;
        Ok(())
    }
}
