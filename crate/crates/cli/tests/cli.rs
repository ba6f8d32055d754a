use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::TempDir;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_mclab"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("spawn mclab");
    (o.status.code().expect("exit code"), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, body: &str) -> PathBuf {
    let p = dir.path().join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn sigma_1_passes() {
    let d = TempDir::new().unwrap();
    let (code, _) = run("check-operator", &scenario("sigma1.json"), d.path(), &[]);
    assert_eq!(code, 0);
    let r = report(d.path());
    assert_eq!(r["outcome"], "pass");
    assert_eq!(r["tool"], "mclab");
    assert_eq!(r["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["tolerances"]["pass_rel"], 1e-9);
}

#[test]
fn quadratic_perturbation_is_a_finding_with_witness() {
    let d = TempDir::new().unwrap();
    let (code, _) = run("check-operator", &scenario("sigma1_minus_quadratic.json"), d.path(), &[]);
    assert_eq!(code, 2);
    let r = report(d.path());
    let wwcond = &r["result"]["reports"][1];
    assert_eq!(wwcond["verdict"], "fail");
    assert!(wwcond["witness"]["value"].as_f64().unwrap() < 0.0);
}

#[test]
fn missing_config_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    let (code, err) = run("check-operator", &d.path().join("absent.json"), d.path(), &[]);
    assert_eq!(code, 1);
    assert!(err.contains("absent.json"));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(&d, r#"{"operator": {"kind": "no_such_kind"}}"#);
    let (code, err) = run("check-operator", &cfg, &d.path().join("out"), &[]);
    assert_eq!(code, 1);
    assert!(err.contains("no_such_kind"));
}

#[test]
fn unknown_subcommand_exits_one() {
    let o = Command::new(env!("CARGO_BIN_EXE_mclab")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_flag_overrides_config() {
    let d = TempDir::new().unwrap();
    let (code, _) = run("check-operator", &scenario("sigma1.json"), d.path(), &["--seed", "42"]);
    assert_eq!(code, 0);
    let r = report(d.path());
    assert_eq!(r["seed"], 42);
    assert_eq!(r["result"]["reports"][0]["seed"], 42);
}

#[test]
fn check_operator_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run("check-operator", &scenario("sigma1_minus_quadratic.json"), a.path(), &["--seed", "7"]);
    run("check-operator", &scenario("sigma1_minus_quadratic.json"), b.path(), &["--seed", "7"]);
    let read = |d: &TempDir| std::fs::read(d.path().join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn half_square_has_constant_rank() {
    let d = TempDir::new().unwrap();
    let (code, _) = run("analyze-field", &scenario("half_square.json"), d.path(), &[]);
    assert_eq!(code, 0);
    let r = report(d.path());
    assert_eq!(r["result"]["rank"]["min_rank"], 1);
    assert_eq!(r["result"]["rank"]["constant"], true);
    assert!(d.path().join("phi.mclb").exists());
    assert!(d.path().join("points.csv").exists());
}

#[test]
fn quartic_rank_drops_at_origin() {
    let d = TempDir::new().unwrap();
    let (code, _) = run("analyze-field", &scenario("quartic.json"), d.path(), &[]);
    assert_eq!(code, 2);
    let r = report(d.path());
    assert_eq!(r["result"]["rank"]["min_rank"], 0);
    assert_eq!(r["result"]["rank"]["max_rank"], 2);
    assert_eq!(r["outcome"], "finding");
}

#[test]
fn full_rank_field_is_vacuous() {
    let d = TempDir::new().unwrap();
    let (code, _) = run("analyze-field", &scenario("full_rank.json"), d.path(), &[]);
    assert_eq!(code, 0);
    let r = report(d.path());
    assert_eq!(r["result"]["rank"]["min_rank"], 3);
    assert_eq!(r["result"]["phi"]["vacuous"], true);
}

#[test]
fn analyze_reads_field_files() {
    use mclab_core::gridfield::{Grid, ScalarField};
    let d = TempDir::new().unwrap();
    let grid = Grid::cube(-1.0, 1.0, 0.05, 2).unwrap();
    ScalarField::from_fn(grid, |x| 0.5 * x[1] * x[1]).write_binary(&d.path().join("u.mclb")).unwrap();
    let cfg = write_config(&d, r#"{"field": {"file": "u.mclb"}, "monitors": ["rank"]}"#);
    let (code, err) = run("analyze-field", &cfg, &d.path().join("out"), &[]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(report(&d.path().join("out"))["result"]["rank"]["min_rank"], 1);
}

#[test]
fn heat_flow_passes_and_writes_trace() {
    let d = TempDir::new().unwrap();
    let (code, err) = run("flow", &scenario("heat.json"), d.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let r = report(d.path());
    assert_eq!(r["result"]["convexity_preserved"], true);
    assert_eq!(r["result"]["summary"]["snapshots"], 5);
    assert!(d.path().join("field_0004.mclb").exists());
    assert!(d.path().join("monitors.csv").exists());
}

#[test]
fn ellipse_shortening_keeps_positive_curvature() {
    let d = TempDir::new().unwrap();
    let (code, err) = run("flow", &scenario("csf_ellipse.json"), d.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(d.path().join("monitors.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "min_kappa").unwrap();
    let kappas: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert!(kappas.len() >= 2);
    assert!(kappas.iter().all(|&k| k > 0.0));
}

#[test]
fn oversized_time_step_is_a_runtime_error() {
    let d = TempDir::new().unwrap();
    let (code, err) = run("flow", &scenario("heat_dt_too_large.json"), d.path(), &[]);
    assert_eq!(code, 4);
    assert!(err.contains("t = 0"), "{err}");
    let r = report(d.path());
    assert_eq!(r["outcome"], "runtime_error");
    assert_eq!(r["result"]["failed_at"], 0.0);
}

#[test]
fn verify_default_passes() {
    let d = TempDir::new().unwrap();
    let (code, err) = run("verify-lemmas", &scenario("verify_default.json"), d.path(), &[]);
    assert_eq!(code, 0, "{err}");
    for c in ["quotient_derivatives", "leading_asymptotics", "regrouping_identity", "newton_maclaurin", "c11_probe", "third_derivative_bound"] {
        let r: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join(format!("{c}.json"))).unwrap()).unwrap();
        assert_eq!(r["result"]["pass"], true, "{c}");
    }
}

#[test]
fn verify_catches_the_mutation() {
    let d = TempDir::new().unwrap();
    let (code, _) = run("verify-lemmas", &scenario("verify_mutation.json"), d.path(), &[]);
    assert_ne!(code, 0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("quotient_derivatives.json")).unwrap()).unwrap();
    assert_eq!(r["result"]["pass"], false);
}

#[test]
fn verify_empty_selection_exits_one() {
    let d = TempDir::new().unwrap();
    let (code, _) = run("verify-lemmas", &scenario("verify_empty.json"), d.path(), &[]);
    assert_eq!(code, 1);
}
