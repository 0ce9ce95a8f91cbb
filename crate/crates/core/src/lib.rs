//! Qualitative association signs for discrete joint distributions.
//!
//! Four association measures (log odds ratio, conditional CDF shift,
//! conditional mean shift, covariance) are computed as adjacent-level
//! differences and classified on a tolerance-aware sign lattice. Rule
//! checkers decide when a sign carries across a chain `X - Y - Z`, with or
//! without `X ⊥ Z | Y`, and a seeded oracle brute-forces each rule.

pub mod cli;
pub mod dist;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod measures;
pub mod oracle;
pub mod expfam;
pub mod par;
pub mod regress;
pub mod sign;
pub mod transitivity;

pub use dist::{check_ci, check_independent, compose_ci, CondFamily, CountTable, ProbTable, Variable};
pub use error::{Error, Result};
pub use measures::{MeasureKind, MeasureReport};
pub use sign::{classify_sign, grid_satisfies, AssocSign, SignSummary, DEFAULT_TOL};
