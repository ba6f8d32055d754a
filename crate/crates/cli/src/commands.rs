use crate::config::{self, AnalyzeConfig, CheckOperatorConfig, FlowConfig, Loaded, VerifyConfig};
use crate::report::{self, Header, Outcome};
use crate::{Args, CliError};
use mclab_core::flows::{run_curve, run_graph, CurveFlowProblem, FlowError, FlowSummary, FlowTrace, GraphFlowProblem};
use mclab_core::gridfield::jet_with;
use mclab_core::opcheck::{self, check_ellipticity, check_wwcond, homog2_check, ConditionReport, SamplePlan, Verdict};
use mclab_core::rankmon::{
    self, diffineq_fit, null_parallelism, phi_field, rank_field, InequalityFit, RankError, RankSummary, ThirdBound,
    ThresholdPolicy,
};
use mclab_core::verify::{self, tol, Check, CheckReport, Mutation, VerifyOptions};
use mclab_core::Exec;
use serde::Serialize;
use std::fs;
use std::path::Path;

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn outcome_of(v: Verdict) -> Outcome {
    match v {
        Verdict::Pass => Outcome::Pass,
        Verdict::Inconclusive => Outcome::Inconclusive,
        Verdict::Fail => Outcome::Finding,
    }
}

#[derive(Serialize)]
struct CheckOperatorResult {
    operator: String,
    n: usize,
    verdict: Verdict,
    reports: Vec<ConditionReport>,
}

pub fn check_operator(args: &Args) -> Result<Outcome, CliError> {
    let Loaded { config, sha256, .. } = config::load::<CheckOperatorConfig>(&args.config)?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    if config.conditions.is_empty() {
        return Err(CliError::Usage("no conditions selected".into()));
    }
    let op = config.operator.build()?;
    let s = &config.sampling;
    let plan = SamplePlan {
        samples: config.samples,
        seed,
        eig_min: s.eig_min,
        eig_max: s.eig_max,
        p_scale: s.p_scale,
        u_scale: s.u_scale,
        x_scale: s.x_scale,
        neighborhood: s.neighborhood.clone(),
        ..SamplePlan::default()
    };
    let mut reports = Vec::new();
    for c in &config.conditions {
        let r = match c.as_str() {
            "ellipticity" => Ok(check_ellipticity(&op, &plan)),
            "wwcond" => check_wwcond(&op, &plan),
            "homog2" => {
                let degree = config
                    .degree
                    .ok_or_else(|| CliError::Config("'homog2' needs 'degree'".into()))?;
                homog2_check(&op, degree, &plan)
            }
            other => return Err(CliError::Config(format!("unknown condition '{other}'"))),
        };
        reports.push(r.map_err(|e| CliError::Config(format!("{c}: {e}")))?);
    }
    let verdict = reports.iter().fold(Verdict::Pass, |v, r| v.and(r.verdict));
    let outcome = outcome_of(verdict);
    let header = Header::new(
        "check-operator",
        sha256,
        seed,
        &[
            ("pass_rel", opcheck::PASS_REL),
            ("fail_rel", opcheck::FAIL_REL),
            ("elliptic_min", opcheck::ELLIPTIC_MIN),
        ],
    );
    prepare_out(&args.out)?;
    let result = CheckOperatorResult { operator: op.name.clone(), n: op.n, verdict, reports };
    report::write(&args.out.join("report.json"), &header, outcome, &result)?;
    Ok(outcome)
}

/// One requested monitor of `analyze-field`.
#[derive(Serialize)]
struct MonitorOutcome {
    name: String,
    pass: bool,
    note: Option<String>,
}

#[derive(Serialize, Default)]
struct PhiStats {
    l: usize,
    epsilon: f64,
    min: f64,
    max: f64,
    vacuous: bool,
}

#[derive(Serialize)]
struct AnalyzeResult {
    points: usize,
    monitors: Vec<MonitorOutcome>,
    rank: RankSummary,
    phi: Option<PhiStats>,
    parallelism_angle: Option<f64>,
    inequality: Option<InequalityFit>,
    third_bound: Option<ThirdBound>,
}

const MONITORS: [&str; 5] = ["rank", "phi", "parallelism", "diffineq", "third_bound"];

pub fn analyze_field(args: &Args) -> Result<Outcome, CliError> {
    let Loaded { config, sha256, base } = config::load::<AnalyzeConfig>(&args.config)?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    if config.monitors.is_empty() {
        return Err(CliError::Usage("no monitors selected".into()));
    }
    if let Some(m) = config.monitors.iter().find(|m| !MONITORS.contains(&m.as_str())) {
        return Err(CliError::Config(format!("unknown monitor '{m}'")));
    }
    let wants = |m: &str| config.monitors.iter().any(|x| x == m);
    let op = match (&config.operator, wants("diffineq")) {
        (Some(o), _) => Some(o.build()?),
        (None, true) => return Err(CliError::Config("'diffineq' needs 'operator'".into())),
        (None, false) => None,
    };
    let field = config.field.build(&base)?;
    let exec = Exec::default();
    let order = if wants("third_bound") { 3 } else { 2 };
    let jets = jet_with(&field, order, exec).map_err(|e| CliError::Config(format!("field: {e}")))?;
    let n = jets.n();

    let t = &config.tolerances;
    let policy = ThresholdPolicy { rel: t.rank_rel, floor: t.rank_floor };
    let margin = config.margin.unwrap_or(rankmon::MARGIN);
    let rank = rank_field(&jets, &policy, margin, exec);
    let l = config.l.unwrap_or(rank.min_rank);
    let runtime = |e: RankError| CliError::Runtime { t: None, msg: e.to_string() };

    prepare_out(&args.out)?;
    let mut monitors = Vec::new();
    let mut phi_stats = None;
    let mut phi_values = None;
    let mut angle = None;
    let mut inequality = None;
    let mut third = None;

    if wants("rank") {
        monitors.push(MonitorOutcome {
            name: "rank".into(),
            pass: rank.is_constant(),
            note: (!rank.is_constant()).then(|| format!("rank varies between {} and {}", rank.min_rank, rank.max_rank)),
        });
    }
    let vacuous = l >= n;
    if wants("phi") || wants("diffineq") || config.dump_points {
        if vacuous {
            phi_stats = Some(PhiStats { l, epsilon: config.epsilon, vacuous: true, ..Default::default() });
        } else {
            let phi = phi_field(&jets, l, config.epsilon, exec).map_err(runtime)?;
            let interior = &rank.interior;
            let (min, max) = interior
                .iter()
                .map(|&i| phi.values[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            phi.write_binary(&args.out.join("phi.mclb"))
                .map_err(|e| CliError::Io { path: args.out.join("phi.mclb"), msg: e.to_string() })?;
            phi_stats = Some(PhiStats { l, epsilon: config.epsilon, min, max, vacuous: false });
            phi_values = Some(phi.values);
        }
    }
    if wants("phi") {
        let finite = phi_stats.as_ref().is_some_and(|p| p.vacuous || (p.min.is_finite() && p.max.is_finite()));
        monitors.push(MonitorOutcome {
            name: "phi".into(),
            pass: finite,
            note: if vacuous {
                Some(format!("vacuous: l = {l} is the full rank"))
            } else {
                (!finite).then(|| "test function is not finite at every interior point".into())
            },
        });
    }
    if wants("parallelism") {
        let m = if !rank.is_constant() {
            MonitorOutcome { name: "parallelism".into(), pass: true, note: Some("skipped: rank is not constant".into()) }
        } else if rank.min_rank == n {
            MonitorOutcome { name: "parallelism".into(), pass: true, note: Some("vacuous: full rank".into()) }
        } else {
            let a = null_parallelism(&rank, &jets, config.parallelism.center.as_deref(), config.parallelism.radius)
                .map_err(runtime)?;
            angle = Some(a);
            MonitorOutcome {
                name: "parallelism".into(),
                pass: a <= t.angle,
                note: (a > t.angle).then(|| format!("null spaces rotate by {a:e} rad")),
            }
        };
        monitors.push(m);
    }
    if let (true, Some(op)) = (wants("diffineq"), &op) {
        let m = if vacuous {
            MonitorOutcome { name: "diffineq".into(), pass: true, note: Some(format!("vacuous: l = {l} is the full rank")) }
        } else {
            match diffineq_fit(op, &jets, l, config.epsilon, None, 0.0, exec) {
                Ok(fit) => {
                    let pass = fit.residual <= 0.0;
                    inequality = Some(fit);
                    MonitorOutcome { name: "diffineq".into(), pass, note: None }
                }
                Err(RankError::NoTestablePoints { exact_null }) => MonitorOutcome {
                    name: "diffineq".into(),
                    pass: true,
                    note: Some(format!("vacuous: the test function vanishes at all {exact_null} interior points")),
                },
                Err(e) => return Err(runtime(e)),
            }
        };
        monitors.push(m);
    }
    if wants("third_bound") {
        let b = rankmon::third_bound_fit(&jets, exec);
        let pass = b.sup.is_finite();
        third = Some(b);
        monitors.push(MonitorOutcome { name: "third_bound".into(), pass, note: None });
    }
    if config.dump_points {
        let ranks: Vec<f64> = rank.ranks.iter().map(|&r| r as f64).collect();
        let mut cols: Vec<(&str, &[f64])> = vec![("rank", &ranks), ("lambda_min", &rank.lambda_min)];
        if let Some(p) = &phi_values {
            cols.push(("phi", p));
        }
        rankmon::dump_points(&args.out.join("points.csv"), &jets, &cols)
            .map_err(|e| CliError::Io { path: args.out.join("points.csv"), msg: e.to_string() })?;
    }

    let outcome = if monitors.iter().all(|m| m.pass) { Outcome::Pass } else { Outcome::Finding };
    let header = Header::new(
        "analyze-field",
        sha256,
        seed,
        &[
            ("rank_rel", policy.rel),
            ("rank_floor", policy.floor),
            ("parallelism_angle", t.angle),
            ("margin", margin as f64),
        ],
    );
    let result = AnalyzeResult {
        points: jets.len(),
        monitors,
        rank: rank.summary(),
        phi: phi_stats,
        parallelism_angle: angle,
        inequality,
        third_bound: third,
    };
    report::write(&args.out.join("report.json"), &header, outcome, &result)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct FlowResult {
    kind: &'static str,
    summary: Option<FlowSummary>,
    /// Convexity of the initial datum carried to every later snapshot
    /// (`None` when the initial datum is not convex or not monitored).
    convexity_preserved: Option<bool>,
    error: Option<String>,
    failed_at: Option<f64>,
}

// Preservation is only meaningful when the initial datum is convex.
fn graph_convexity(trace: &FlowTrace) -> Option<bool> {
    let first = trace.records.first()?.convex?;
    first.then(|| trace.records.iter().all(|r| r.convex != Some(false)))
}

fn curve_convexity(trace: &FlowTrace) -> Option<bool> {
    let k0 = trace.records.first()?.min_kappa?;
    (k0 > 0.0).then(|| trace.stats.min_kappa.is_none_or(|k| k > 0.0) && trace.records.iter().all(|r| r.min_kappa.is_none_or(|k| k > 0.0)))
}

pub fn flow(args: &Args) -> Result<Outcome, CliError> {
    let Loaded { config, sha256, base } = config::load::<FlowConfig>(&args.config)?;
    let seed = args.seed.or(config.seed()).unwrap_or(0);
    let (kind, run, tolerances): (&'static str, Result<FlowTrace, FlowError>, Vec<(&'static str, f64)>) = match &config {
        FlowConfig::Graph(g) => {
            let mut p = GraphFlowProblem::new(g.operator.build()?, g.initial.build(&base)?, g.t_end, g.boundary.build()?);
            p.snapshots = g.snapshot_times()?;
            p.dt = g.dt;
            p.cfl = g.cfl.unwrap_or(p.cfl);
            p.blow_up = g.blow_up.unwrap_or(p.blow_up);
            p.monitors = g.monitors.clone();
            let tol = vec![
                ("cfl", p.cfl),
                ("blow_up", p.blow_up),
                ("convexity_tol", p.monitors.convexity_tol),
                ("rank_rel", p.monitors.policy.rel),
                ("rank_floor", p.monitors.policy.floor),
            ];
            ("graph", run_graph(&p), tol)
        }
        FlowConfig::Curve(c) => {
            let p = CurveFlowProblem {
                initial: c.curve.build(&base)?,
                speed: c.speed.build()?,
                t_end: c.t_end,
                snapshots: c.snapshot_times()?,
                dt: c.dt,
                options: c.options,
            };
            let tol = vec![("cfl", p.options.cfl), ("area_floor", p.options.area_floor)];
            ("curve", run_curve(&p), tol)
        }
    };
    let header = Header::new("flow", sha256, seed, &tolerances);
    prepare_out(&args.out)?;
    let path = args.out.join("report.json");
    match run {
        Ok(trace) => {
            trace
                .write_snapshots(&args.out)
                .map_err(|e| CliError::Io { path: args.out.clone(), msg: e.to_string() })?;
            let summary = trace.summary();
            let convexity = if kind == "graph" { graph_convexity(&trace) } else { curve_convexity(&trace) };
            let pass = summary.rank_monotonicity.pass && convexity != Some(false);
            let outcome = if pass { Outcome::Pass } else { Outcome::Finding };
            let result = FlowResult { kind, summary: Some(summary), convexity_preserved: convexity, error: None, failed_at: None };
            report::write(&path, &header, outcome, &result)?;
            Ok(outcome)
        }
        Err(e @ (FlowError::InvalidProblem(_) | FlowError::InvalidCurve(_))) => Err(CliError::Config(e.to_string())),
        Err(e) => {
            let result = FlowResult { kind, summary: None, convexity_preserved: None, error: Some(e.to_string()), failed_at: e.time() };
            report::write(&path, &header, Outcome::RuntimeError, &result)?;
            Err(CliError::Runtime { t: e.time(), msg: e.to_string() })
        }
    }
}

#[derive(Serialize)]
struct VerifySummary {
    mutation: Option<Mutation>,
    checks: Vec<VerifyLine>,
}

#[derive(Serialize)]
struct VerifyLine {
    check: String,
    pass: bool,
}

pub fn verify_lemmas(args: &Args) -> Result<Outcome, CliError> {
    let Loaded { config, sha256, .. } = config::load::<VerifyConfig>(&args.config)?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let checks: Vec<Check> = match &config.checks {
        None => Check::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|s| Check::from_name(s))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    if checks.is_empty() {
        return Err(CliError::Usage("empty check selection".into()));
    }
    let mutation = config
        .mutation
        .as_deref()
        .map(Mutation::from_name)
        .transpose()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let d = VerifyOptions::default();
    let opts = VerifyOptions {
        seed,
        derivative_samples: config.derivative_samples.unwrap_or(d.derivative_samples),
        identity_samples: config.identity_samples.unwrap_or(d.identity_samples),
        sweeps: config.sweeps.unwrap_or(d.sweeps),
        mutation,
    };
    let reports: Vec<CheckReport> = verify::run_suite(&checks, &opts).map_err(|e| CliError::Usage(e.to_string()))?;
    let header = Header::new(
        "verify-lemmas",
        sha256,
        seed,
        &[
            ("derivative_rel", tol::DERIVATIVE_REL),
            ("asymptotic_slope", tol::ASYMPTOTIC_SLOPE),
            ("identity_rel", tol::IDENTITY_REL),
            ("newton_maclaurin_rel", tol::NEWTON_MACLAURIN_REL),
            ("c11_slope", tol::C11_SLOPE),
            ("third_bound_rel", tol::THIRD_BOUND_REL),
        ],
    );
    prepare_out(&args.out)?;
    let verdict = |pass: bool| if pass { Outcome::Pass } else { Outcome::Finding };
    for r in &reports {
        report::write(&args.out.join(format!("{}.json", r.check)), &header, verdict(r.pass), r)?;
    }
    let all = reports.iter().all(|r| r.pass);
    let summary = VerifySummary {
        mutation,
        checks: reports.iter().map(|r| VerifyLine { check: r.check.clone(), pass: r.pass }).collect(),
    };
    report::write(&args.out.join("report.json"), &header, verdict(all), &summary)?;
    Ok(verdict(all))
}
