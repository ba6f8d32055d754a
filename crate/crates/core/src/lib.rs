//! Tools for studying convexity and constant-rank properties of solutions to
//! fully nonlinear elliptic and parabolic equations.

pub mod expr;
pub mod flows;
pub mod gridfield;
pub mod linalg;
pub mod opcheck;
pub mod par;
pub mod rankmon;
pub mod scalar;
pub mod symcalc;
pub mod verify;

pub use par::Exec;
