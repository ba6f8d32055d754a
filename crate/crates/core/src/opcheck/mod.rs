//! Structural conditions on nonlinear operators `F(r, p, u, x, t)`:
//! ellipticity, the inverse-convexity quadratic form, its degenerate-block
//! version restricted to the hyperplane orthogonal to the operator's
//! normal, and the two-dimensional homogeneous criterion.
//!
//! Every check is a deterministic sweep over a [`SamplePlan`]; the result is
//! a [`ConditionReport`] carrying the worst sample and a witness that
//! reproduces it.

mod catalogue;
mod checks;
mod forms;
mod operator;

pub use catalogue::catalogue_make;
pub use checks::{
    check_ellipticity, check_wwcond, homog2_check, random_orthogonal, random_symmetric, reevaluate_qstar,
    wwcond_sample, ConditionReport, Neighborhood, PartReport, SamplePlan, Verdict, Witness, ELLIPTIC_MIN, FAIL_REL,
    PASS_REL,
};
pub use forms::{
    condition_c_form, project_gamma_perp, qstar_form, qstar_form_full, BlockFrame, FormValue, TestDirection,
};
pub use operator::{Arity, Derivatives, Gradient, OperatorSpec, Point, Tangent};

use crate::expr::ParseError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shift matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("unknown operator kind '{0}'")]
    UnknownKind(String),
    #[error("bad operator parameters: {0}")]
    BadParams(String),
    #[error("operator normal vanishes (norm {0:e})")]
    DegenerateNormal(f64),
    #[error("the two-dimensional criterion needs n = 2, got {0}")]
    NeedsDimension2(usize),
    #[error("direction is not in the degenerate-block subspace (residual {0:e})")]
    NotInSubspace(f64),
}
