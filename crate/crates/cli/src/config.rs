//! JSON scenario files, one shape per subcommand.

use crate::CliError;
use mclab_core::expr::Expr;
use mclab_core::flows::{Boundary, CurveOptions, CurveSpeed, DtPolicy, MonitorConfig, PlaneCurve};
use mclab_core::gridfield::{Grid, ScalarField};
use mclab_core::opcheck::{catalogue_make, Neighborhood, OperatorSpec};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;
use std::path::{Path, PathBuf};

/// A parsed config file together with where it came from.
pub struct Loaded<T> {
    pub config: T,
    pub sha256: String,
    /// Directory relative paths inside the config resolve against.
    pub base: PathBuf,
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>, CliError> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let config = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Loaded {
        config,
        sha256: hex::encode(Sha256::digest(&bytes)),
        base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parse_expr(src: &str) -> Result<Expr, CliError> {
    Expr::parse(src).map_err(|e| CliError::Config(format!("expression '{src}': {e}")))
}

/// `{"kind": ..., "params": {...}}` from the catalogue, or
/// `{"expression": ..., "n": ...}`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OperatorConfig {
    Named {
        kind: String,
        #[serde(default)]
        params: Value,
    },
    Expression {
        expression: String,
        n: usize,
    },
}

impl OperatorConfig {
    pub fn build(&self) -> Result<OperatorSpec, CliError> {
        let op = match self {
            OperatorConfig::Named { kind, params } => catalogue_make(kind, params),
            OperatorConfig::Expression { expression, n } => OperatorSpec::parse(expression.clone(), *n, expression),
        };
        op.map_err(|e| CliError::Config(format!("operator: {e}")))
    }
}

/// Uniform grid on `[lo, hi]^dim`, given by spacing `h` or by `size` points
/// per axis. Periodic grids need `size`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub dim: usize,
    pub h: Option<f64>,
    pub size: Option<usize>,
    #[serde(default)]
    pub periodic: bool,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, CliError> {
        let g = match (self.periodic, self.h, self.size) {
            (true, _, Some(size)) => Grid::periodic_cube(self.lo, self.hi, size, self.dim),
            (true, _, None) => return Err(CliError::Config("periodic grid needs 'size'".into())),
            (false, Some(h), None) => Grid::cube(self.lo, self.hi, h, self.dim),
            (false, None, Some(size)) if size >= 2 => {
                Grid::cube(self.lo, self.hi, (self.hi - self.lo) / (size - 1) as f64, self.dim)
            }
            _ => return Err(CliError::Config("grid needs exactly one of 'h' or 'size' (≥ 2)".into())),
        };
        g.map_err(|e| CliError::Config(format!("grid: {e}")))
    }
}

/// Analytic expression in `x_1..x_n` sampled on a grid, or a field file
/// (`.csv`, otherwise the binary format).
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum FieldSource {
    Expression { expression: String, grid: GridSpec },
    File { file: PathBuf },
}

impl FieldSource {
    pub fn build(&self, base: &Path) -> Result<ScalarField, CliError> {
        match self {
            FieldSource::Expression { expression, grid } => {
                let e = parse_expr(expression)?;
                ScalarField::from_expr(grid.build()?, &e, 0.0).map_err(|e| CliError::Config(format!("initial field: {e}")))
            }
            FieldSource::File { file } => {
                let path = resolve(base, file);
                let is_csv = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv"));
                let r = if is_csv { ScalarField::read_csv(&path) } else { ScalarField::read_binary(&path) };
                r.map_err(|e| CliError::Io { path, msg: e.to_string() })
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub eig_min: f64,
    pub eig_max: f64,
    pub p_scale: f64,
    pub u_scale: f64,
    pub x_scale: f64,
    pub neighborhood: Option<Neighborhood>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { eig_min: 1e-3, eig_max: 1e3, p_scale: 1.0, u_scale: 1.0, x_scale: 1.0, neighborhood: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOperatorConfig {
    pub operator: OperatorConfig,
    /// Any of `ellipticity`, `wwcond`, `homog2`.
    #[serde(default = "default_conditions")]
    pub conditions: Vec<String>,
    /// Homogeneity degree for `homog2`.
    pub degree: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub seed: Option<u64>,
    #[serde(default)]
    pub sampling: SamplingConfig,
}

fn default_conditions() -> Vec<String> {
    vec!["ellipticity".into(), "wwcond".into()]
}

fn default_samples() -> usize {
    10_000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeTolerances {
    pub rank_rel: f64,
    pub rank_floor: f64,
    /// Largest principal angle between null spaces that counts as parallel.
    pub angle: f64,
}

impl Default for AnalyzeTolerances {
    fn default() -> Self {
        AnalyzeTolerances { rank_rel: 1e-8, rank_floor: 1e-12, angle: 1e-6 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelismConfig {
    pub center: Option<Vec<f64>>,
    #[serde(default = "infinite")]
    pub radius: f64,
}

impl Default for ParallelismConfig {
    fn default() -> Self {
        ParallelismConfig { center: None, radius: f64::INFINITY }
    }
}

fn infinite() -> f64 {
    f64::INFINITY
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub field: FieldSource,
    /// Rank used for `φ`; defaults to the minimum rank found.
    pub l: Option<usize>,
    #[serde(default)]
    pub epsilon: f64,
    /// Any of `rank`, `phi`, `parallelism`, `diffineq`, `third_bound`.
    #[serde(default = "default_monitors")]
    pub monitors: Vec<String>,
    /// Needed by `diffineq`.
    pub operator: Option<OperatorConfig>,
    #[serde(default)]
    pub parallelism: ParallelismConfig,
    #[serde(default)]
    pub tolerances: AnalyzeTolerances,
    pub margin: Option<usize>,
    #[serde(default = "yes")]
    pub dump_points: bool,
    pub seed: Option<u64>,
}

fn default_monitors() -> Vec<String> {
    vec!["rank".into(), "phi".into()]
}

fn yes() -> bool {
    true
}

/// `"dirichlet"`, `"periodic"`, or `{"expression": ...}` in `x_i` and `t`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum BoundaryConfig {
    Named(String),
    Expression { expression: String },
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig::Named("dirichlet".into())
    }
}

impl BoundaryConfig {
    pub fn build(&self) -> Result<Boundary, CliError> {
        match self {
            BoundaryConfig::Named(s) if s == "dirichlet" => Ok(Boundary::Dirichlet),
            BoundaryConfig::Named(s) if s == "periodic" => Ok(Boundary::Periodic),
            BoundaryConfig::Named(s) => Err(CliError::Config(format!("unknown boundary '{s}'"))),
            BoundaryConfig::Expression { expression } => Ok(Boundary::DirichletExpr(parse_expr(expression)?)),
        }
    }
}

/// Snapshot times: an explicit list, and/or every multiple of `every` up to
/// `t_end`.
fn snapshot_times(list: &[f64], every: Option<f64>, t_end: f64) -> Result<Vec<f64>, CliError> {
    let mut out = list.to_vec();
    if let Some(e) = every {
        if e.is_nan() || e <= 0.0 {
            return Err(CliError::Config("'snapshot_every' must be positive".into()));
        }
        let mut k = 1;
        while k as f64 * e <= t_end * (1.0 + 1e-12) {
            out.push((k as f64 * e).min(t_end));
            k += 1;
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFlowConfig {
    pub operator: OperatorConfig,
    pub initial: FieldSource,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    pub t_end: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    pub snapshot_every: Option<f64>,
    #[serde(default)]
    pub dt: DtPolicy,
    pub cfl: Option<f64>,
    pub blow_up: Option<f64>,
    #[serde(default)]
    pub monitors: MonitorConfig,
    pub seed: Option<u64>,
}

impl GraphFlowConfig {
    pub fn snapshot_times(&self) -> Result<Vec<f64>, CliError> {
        snapshot_times(&self.snapshots, self.snapshot_every, self.t_end)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleSpec {
    #[serde(default)]
    pub center: [f64; 2],
    pub radius: f64,
    pub vertices: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseSpec {
    #[serde(default)]
    pub center: [f64; 2],
    pub a: f64,
    pub b: f64,
    pub vertices: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSource {
    Circle(CircleSpec),
    Ellipse(EllipseSpec),
    /// `x,y` CSV, counter-clockwise.
    File(PathBuf),
}

impl CurveSource {
    pub fn build(&self, base: &Path) -> Result<PlaneCurve, CliError> {
        let c = match self {
            CurveSource::Circle(c) => PlaneCurve::circle(c.center, c.radius, c.vertices),
            CurveSource::Ellipse(e) => PlaneCurve::ellipse(e.center, e.a, e.b, e.vertices),
            CurveSource::File(p) => {
                let path = resolve(base, p);
                return PlaneCurve::read_csv(&path).map_err(|e| CliError::Io { path, msg: e.to_string() });
            }
        };
        c.map_err(|e| CliError::Config(format!("curve: {e}")))
    }
}

/// `"curvature"` (`F = κ`) or `{"expression": ...}` with `r_11 = κ`,
/// `x_i` the position and `p_i` the outward normal.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum SpeedConfig {
    Named(String),
    Expression { expression: String },
}

impl Default for SpeedConfig {
    fn default() -> Self {
        SpeedConfig::Named("curvature".into())
    }
}

impl SpeedConfig {
    pub fn build(&self) -> Result<CurveSpeed, CliError> {
        match self {
            SpeedConfig::Named(s) if s == "curvature" => Ok(CurveSpeed::curvature()),
            SpeedConfig::Named(s) => Err(CliError::Config(format!("unknown speed '{s}'"))),
            SpeedConfig::Expression { expression } => Ok(CurveSpeed::from_expr(parse_expr(expression)?)),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveFlowConfig {
    pub curve: CurveSource,
    #[serde(default)]
    pub speed: SpeedConfig,
    pub t_end: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    pub snapshot_every: Option<f64>,
    #[serde(default)]
    pub dt: DtPolicy,
    #[serde(default)]
    pub options: CurveOptions,
    pub seed: Option<u64>,
}

impl CurveFlowConfig {
    pub fn snapshot_times(&self) -> Result<Vec<f64>, CliError> {
        snapshot_times(&self.snapshots, self.snapshot_every, self.t_end)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowConfig {
    Graph(GraphFlowConfig),
    Curve(CurveFlowConfig),
}

impl FlowConfig {
    pub fn seed(&self) -> Option<u64> {
        match self {
            FlowConfig::Graph(g) => g.seed,
            FlowConfig::Curve(c) => c.seed,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Check names; all checks when absent.
    pub checks: Option<Vec<String>>,
    pub mutation: Option<String>,
    pub derivative_samples: Option<usize>,
    pub identity_samples: Option<usize>,
    pub sweeps: Option<usize>,
    pub seed: Option<u64>,
}
