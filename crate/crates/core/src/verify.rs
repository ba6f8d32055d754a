//! Numerical verification suite for the symmetric-function calculus:
//! derivative formulas of the quotient against finite differences,
//! leading-order asymptotics near a degenerate spectrum, the regrouping
//! identity, Newton–MacLaurin, a `C^{1,1}` probe of the quotient, and the
//! third-derivative bound on grid fields.
//!
//! Each check draws from its own ChaCha stream of the suite seed, so reports
//! are reproducible and independent of which checks are selected.

use crate::gridfield::{jet_with, Grid, ScalarField};
use crate::linalg::SpectralMatrix;
use crate::opcheck::random_orthogonal;
use crate::par::Exec;
use crate::rankmon::third_bound_fit;
use crate::symcalc::{
    identity_id1, leading_forms, newton_maclaurin_gap, q_grad, q_hess_impl, q_value, DiagHessian, GoodBadSplit,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("no checks selected")]
    EmptySelection,
    #[error("unknown check '{0}'")]
    UnknownCheck(String),
    #[error("unknown mutation '{0}'")]
    UnknownMutation(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    QuotientDerivatives,
    LeadingAsymptotics,
    RegroupingIdentity,
    NewtonMaclaurin,
    C11Probe,
    ThirdDerivativeBound,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::QuotientDerivatives,
        Check::LeadingAsymptotics,
        Check::RegroupingIdentity,
        Check::NewtonMaclaurin,
        Check::C11Probe,
        Check::ThirdDerivativeBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::QuotientDerivatives => "quotient_derivatives",
            Check::LeadingAsymptotics => "leading_asymptotics",
            Check::RegroupingIdentity => "regrouping_identity",
            Check::NewtonMaclaurin => "newton_maclaurin",
            Check::C11Probe => "c11_probe",
            Check::ThirdDerivativeBound => "third_derivative_bound",
        }
    }

    pub fn from_name(s: &str) -> Result<Check, VerifyError> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| VerifyError::UnknownCheck(s.to_string()))
    }

    fn stream(self) -> u64 {
        Check::ALL.iter().position(|&c| c == self).unwrap() as u64
    }
}

/// Deliberate faults for testing that the suite catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// Negates `∂²q/∂W_ii²`.
    QHessCaseBSign,
}

impl Mutation {
    pub fn from_name(s: &str) -> Result<Mutation, VerifyError> {
        match s {
            "q_hess_case_b_sign" => Ok(Mutation::QHessCaseBSign),
            _ => Err(VerifyError::UnknownMutation(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random matrices for the derivative check.
    pub derivative_samples: usize,
    /// Random instances for the identity and Newton–MacLaurin checks.
    pub identity_samples: usize,
    /// Random spectra per sweep check.
    pub sweeps: usize,
    pub mutation: Option<Mutation>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            derivative_samples: 1000,
            identity_samples: 10_000,
            sweeps: 20,
            mutation: None,
        }
    }
}

/// Tolerances in force; each check passes iff its headline metric is on the
/// right side of its tolerance.
pub mod tol {
    /// Relative error of `q_grad`/`q_hess` against finite differences.
    pub const DERIVATIVE_REL: f64 = 1e-6;
    /// Minimum log-log slope of leading-form remainders.
    pub const ASYMPTOTIC_SLOPE: f64 = 0.9;
    pub const IDENTITY_REL: f64 = 1e-12;
    /// Newton–MacLaurin gap, relative to `(σ_k/C(n,k))²`.
    pub const NEWTON_MACLAURIN_REL: f64 = 1e-12;
    /// Bound on `|slope|` of second divided differences vs `s`.
    pub const C11_SLOPE: f64 = 0.05;
    /// Relative distance of the fitted third-derivative bound from `2√3`.
    pub const THIRD_BOUND_REL: f64 = 0.02;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub samples: usize,
    pub metrics: BTreeMap<String, f64>,
    pub tolerance: f64,
}

fn report(check: Check, pass: bool, samples: usize, tolerance: f64, metrics: &[(&str, f64)]) -> CheckReport {
    CheckReport {
        check: check.name().to_string(),
        pass,
        samples,
        metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        tolerance,
    }
}

pub fn run_suite(checks: &[Check], opts: &VerifyOptions) -> Result<Vec<CheckReport>, VerifyError> {
    if checks.is_empty() {
        return Err(VerifyError::EmptySelection);
    }
    Ok(checks.iter().map(|&c| run_check(c, opts)).collect())
}

pub fn run_check(check: Check, opts: &VerifyOptions) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(check.stream());
    match check {
        Check::QuotientDerivatives => quotient_derivatives(&mut rng, opts),
        Check::LeadingAsymptotics => leading_asymptotics(&mut rng, opts),
        Check::RegroupingIdentity => regrouping_identity(&mut rng, opts),
        Check::NewtonMaclaurin => newton_maclaurin(&mut rng, opts),
        Check::C11Probe => c11_probe(&mut rng, opts),
        Check::ThirdDerivativeBound => third_derivative_bound(),
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

/// Symmetric basis `E_ii`, `E_ij + E_ji`.
fn sym_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = vec![];
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

// Richardson-extrapolated central differences of `q` along basis
// directions; h is relative to the smallest eigenvalue.
fn fd_first(w: &DMatrix<f64>, e: &DMatrix<f64>, l: usize, h: f64) -> f64 {
    let q = |m: DMatrix<f64>| q_value(&SpectralMatrix::new(m), l, 0.0).unwrap();
    let d = |h: f64| (q(w + e * h) - q(w - e * h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn fd_second(w: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, l: usize, h: f64) -> f64 {
    let q = |m: DMatrix<f64>| q_value(&SpectralMatrix::new(m), l, 0.0).unwrap();
    let d = |h: f64| {
        (q(w + a * h + b * h) - q(w + a * h - b * h) - q(w - a * h + b * h) + q(w - a * h - b * h)) / (4.0 * h * h)
    };
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn quotient_derivatives(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> CheckReport {
    let flip = opts.mutation == Some(Mutation::QHessCaseBSign);
    let cases: Vec<(Vec<f64>, usize, DMatrix<f64>)> = (0..opts.derivative_samples)
        .map(|_| {
            let n = rng.random_range(2..=6usize);
            let l = rng.random_range(0..n);
            let lam: Vec<f64> = (0..n).map(|_| log_uniform(rng, 0.2, 5.0)).collect();
            (lam, l, random_orthogonal(rng, n))
        })
        .collect();
    let errs = Exec::default().map_slice(&cases, |(lam, l, qm)| {
        let n = lam.len();
        let h = 0.02 * lam.iter().copied().fold(f64::INFINITY, f64::min);
        let basis = sym_basis(n);
        // gradient at a rotated (non-diagonal) matrix
        let w = qm * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam.clone())) * qm.transpose();
        let g = q_grad(&SpectralMatrix::new(w.clone()), *l, 0.0).unwrap();
        let exact_g: Vec<f64> = basis.iter().map(|e| g.component_mul(e).sum()).collect();
        let gscale = exact_g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let eg = basis
            .iter()
            .zip(&exact_g)
            .map(|(e, ex)| (fd_first(&w, e, *l, h) - ex).abs() / gscale)
            .fold(0.0, f64::max);
        // Hessian at the diagonal matrix
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam.clone()));
        let hess: DiagHessian = q_hess_impl(&SpectralMatrix::diagonal(lam), *l, 0.0, flip).unwrap();
        let mut exact_h = vec![];
        for (a, ea) in basis.iter().enumerate() {
            for eb in &basis[a..] {
                exact_h.push(hess.contract(ea, eb));
            }
        }
        let hscale = exact_h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut k = 0;
        let mut eh = 0.0f64;
        for (a, ea) in basis.iter().enumerate() {
            for eb in &basis[a..] {
                eh = eh.max((fd_second(&d, ea, eb, *l, h) - exact_h[k]).abs() / hscale);
                k += 1;
            }
        }
        (eg, eh)
    });
    let eg = errs.iter().map(|e| e.0).fold(0.0, f64::max);
    let eh = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    report(
        Check::QuotientDerivatives,
        eg <= tol::DERIVATIVE_REL && eh <= tol::DERIVATIVE_REL,
        cases.len(),
        tol::DERIVATIVE_REL,
        &[("max_rel_err_grad", eg), ("max_rel_err_hess", eh)],
    )
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn sweep_s(lo_exp: f64, hi_exp: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| 10f64.powf(lo_exp + (hi_exp - lo_exp) * k as f64 / (count - 1) as f64))
        .collect()
}

// diag(s·μ_B, λ_G) with random sizes |G| = l ∈ {1, 2}, |B| ∈ {2, 3}; at
// s = 1 the bad eigenvalues are still an order of magnitude below the good.
fn degenerate_family(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let l = rng.random_range(1..=2usize);
    let b = rng.random_range(2..=3usize);
    let mu = (0..b).map(|_| log_uniform(rng, 0.02, 0.1)).collect();
    let lam = (0..l).map(|_| log_uniform(rng, 0.5, 2.0)).collect();
    (mu, lam)
}

fn diag_at(mu: &[f64], lam: &[f64], s: f64) -> Vec<f64> {
    mu.iter().map(|m| s * m).chain(lam.iter().copied()).collect()
}

fn leading_asymptotics(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> CheckReport {
    let s_grid = sweep_s(-6.0, 0.0, 25);
    let mut worst_grad = f64::INFINITY;
    let mut worst_swap = f64::INFINITY;
    for _ in 0..opts.sweeps {
        let (mu, lam) = degenerate_family(rng);
        let (nb, l) = (mu.len(), lam.len());
        let mut rem_grad = vec![vec![]; nb];
        let mut rem_swap = vec![vec![]; nb * l];
        for &s in &s_grid {
            let v = diag_at(&mu, &lam, s);
            let w = SpectralMatrix::diagonal(&v);
            let split = GoodBadSplit { good: (nb..nb + l).collect(), bad: (0..nb).collect(), threshold: f64::NAN, l };
            let lead = leading_forms(&w, &split, l).unwrap();
            let g = q_grad(&w, l, 0.0).unwrap();
            let h = q_hess_impl(&w, l, 0.0, false).unwrap();
            for i in 0..nb {
                rem_grad[i].push((g[(i, i)] - lead.grad[i]).abs());
                for j in 0..l {
                    let jj = nb + j;
                    rem_swap[i * l + j].push((h.swap[(i, jj)] - lead.hess.swap[(i, jj)]).abs());
                }
            }
        }
        let slope = |r: &Vec<f64>| {
            if r.iter().all(|&x| x <= 1e-15) {
                f64::INFINITY // leading form is exact
            } else {
                loglog_slope(&s_grid, &r.iter().map(|x| x.max(1e-300)).collect::<Vec<_>>())
            }
        };
        worst_grad = rem_grad.iter().map(slope).fold(worst_grad, f64::min);
        worst_swap = rem_swap.iter().map(slope).fold(worst_swap, f64::min);
    }
    report(
        Check::LeadingAsymptotics,
        worst_grad >= tol::ASYMPTOTIC_SLOPE && worst_swap >= tol::ASYMPTOTIC_SLOPE,
        opts.sweeps,
        tol::ASYMPTOTIC_SLOPE,
        &[("min_slope_grad_bad", worst_grad), ("min_slope_swap_bad_good", worst_swap)],
    )
}

fn regrouping_identity(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> CheckReport {
    let mut worst = 0.0f64;
    for _ in 0..opts.identity_samples {
        let m = rng.random_range(1..=6usize);
        let data: Vec<(f64, f64, f64)> = (0..m)
            .map(|_| (rng.random_range(0.0..2.0), rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let (lhs, rhs) = identity_id1(&data);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    report(
        Check::RegroupingIdentity,
        worst <= tol::IDENTITY_REL,
        opts.identity_samples,
        tol::IDENTITY_REL,
        &[("max_rel_err", worst)],
    )
}

fn newton_maclaurin(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> CheckReport {
    let mut worst = f64::INFINITY;
    for _ in 0..opts.identity_samples {
        let n = rng.random_range(2..=8usize);
        let k = rng.random_range(1..n);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let gap = newton_maclaurin_gap(&v, k);
        let e = crate::symcalc::elem_sym(k as i64, &v) / crate::symcalc::binomial(n, k);
        worst = worst.min(gap / (e * e).max(1e-300));
    }
    report(
        Check::NewtonMaclaurin,
        worst >= -tol::NEWTON_MACLAURIN_REL,
        opts.identity_samples,
        tol::NEWTON_MACLAURIN_REL,
        &[("min_rel_gap", worst)],
    )
}

/// Second divided differences of `s ↦ q(diag(s·μ_B, λ_G))` with steps
/// proportional to `s`, for `s ∈ [1e-6, 1e-2]`.
pub fn c11_series(mu: &[f64], lam: &[f64], s_grid: &[f64]) -> Vec<f64> {
    let l = lam.len();
    let q = |s: f64| q_value(&SpectralMatrix::diagonal(&diag_at(mu, lam, s)), l, 0.0).unwrap();
    s_grid
        .iter()
        .map(|&s| {
            let d = 0.1 * s;
            ((q(s + d) - 2.0 * q(s) + q(s - d)) / (d * d)).abs()
        })
        .collect()
}

fn c11_probe(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> CheckReport {
    let s_grid = sweep_s(-6.0, -2.0, 17);
    let mut worst_slope = 0.0f64;
    let mut max_dd = 0.0f64;
    for _ in 0..opts.sweeps {
        let (mu, lam) = degenerate_family(rng);
        let dd = c11_series(&mu, &lam, &s_grid);
        max_dd = dd.iter().copied().fold(max_dd, f64::max);
        let slope = loglog_slope(&s_grid, &dd.iter().map(|x| x.max(1e-300)).collect::<Vec<_>>());
        if slope.abs() > worst_slope.abs() {
            worst_slope = slope;
        }
    }
    report(
        Check::C11Probe,
        worst_slope.abs() <= tol::C11_SLOPE,
        opts.sweeps,
        tol::C11_SLOPE,
        &[("worst_slope", worst_slope), ("max_second_difference", max_dd)],
    )
}

fn third_derivative_bound() -> CheckReport {
    let target = 2.0 * 3f64.sqrt();
    let fit = |dim: usize, h: f64| {
        let f = ScalarField::from_fn(Grid::cube(-1.0, 1.0, h, dim).unwrap(), |x| x.iter().map(|c| c.powi(4)).sum());
        third_bound_fit(&jet_with(&f, 3, Exec::default()).unwrap(), Exec::default()).sup
    };
    let one = fit(1, 0.01);
    let two = fit(2, 0.05);
    let err = ((one - target).abs()).max((two - target).abs()) / target;
    report(
        Check::ThirdDerivativeBound,
        err <= tol::THIRD_BOUND_REL,
        2,
        tol::THIRD_BOUND_REL,
        &[("sup_1d", one), ("sup_2d", two), ("rel_err", err)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyOptions {
        VerifyOptions { derivative_samples: 40, identity_samples: 500, sweeps: 4, ..Default::default() }
    }

    #[test]
    fn every_check_passes() {
        for r in run_suite(&Check::ALL, &small()).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn mutation_is_caught() {
        let opts = VerifyOptions { mutation: Some(Mutation::QHessCaseBSign), ..small() };
        let r = run_check(Check::QuotientDerivatives, &opts);
        assert!(!r.pass, "{r:?}");
    }

    #[test]
    fn selection_and_names() {
        assert_eq!(run_suite(&[], &small()), Err(VerifyError::EmptySelection));
        for c in Check::ALL {
            assert_eq!(Check::from_name(c.name()), Ok(c));
        }
        assert!(Check::from_name("nope").is_err());
        assert_eq!(Mutation::from_name("q_hess_case_b_sign"), Ok(Mutation::QHessCaseBSign));
    }

    #[test]
    fn reports_are_reproducible() {
        let a = run_check(Check::LeadingAsymptotics, &small());
        let b = run_check(Check::LeadingAsymptotics, &small());
        assert_eq!(a, b);
    }
}
