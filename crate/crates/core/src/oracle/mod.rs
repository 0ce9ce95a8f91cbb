//! Seeded brute-force verification.
//!
//! Every trial draws from its own ChaCha stream `(seed, trial index)`, so a
//! sweep gives identical reports whether run sequentially or in parallel.

mod generate;
mod lemma1;
mod search;
mod verify;

pub use generate::{random_constrained, random_table, Proposal};
pub use lemma1::{check_lemma1, random_lemma1, Lemma1Instance, Lemma1Outcome};
pub use search::{c5_binary_x_table, search_counterexample, Scenario};
pub use verify::{verify, verify_lemma1, verify_rule};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::io::TensorJson;
use crate::par::ExecMode;
use crate::sign::DEFAULT_TOL;
use crate::transitivity::{Conclusion, RuleId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub seed: u64,
    pub trials: usize,
    /// Level counts per variable; upper bounds when `vary_dims` is set.
    pub dims: Vec<usize>,
    pub vary_dims: bool,
    /// Proposals rejected per trial before giving up.
    pub max_rejects: usize,
    pub tol: f64,
    pub mode: ExecMode,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self { seed: 42, trials: 1000, dims: vec![3, 3, 3], vary_dims: true, max_rejects: 200_000, tol: DEFAULT_TOL, mode: ExecMode::Parallel }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Invalid("trials must be at least 1".into()));
        }
        if self.max_rejects == 0 {
            return Err(Error::Invalid("max_rejects must be positive".into()));
        }
        if self.dims.contains(&0) {
            return Err(Error::Invalid("every variable needs at least one level".into()));
        }
        Ok(())
    }

    /// Generator for one trial, independent of evaluation order.
    pub fn rng(&self, trial: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(trial);
        r
    }
}

/// Sweep target: a rule or the monotone-expectation lemma.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Rule(RuleId),
    Lemma1,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Rule(r) => write!(f, "{r}"),
            Target::Lemma1 => f.write_str("LEMMA1"),
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("lemma1") {
            Ok(Target::Lemma1)
        } else {
            s.parse().map(Target::Rule)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: u64,
    pub table: Option<TensorJson>,
    pub conclusion: Option<Conclusion>,
    pub detail: String,
    /// Named seed table, when the hit did not come from a random draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
}

/// The inverted check every suite runs to prove it is not vacuous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeControl {
    pub checked: usize,
    pub violations: usize,
    pub failed_as_designed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub target: String,
    pub seed: u64,
    pub trials: usize,
    pub accepted: usize,
    /// Accepted trials whose rule fired with a non-trivial conclusion check.
    pub fired: usize,
    pub rejected: u64,
    pub acceptance_rate: f64,
    pub counterexamples: Vec<Counterexample>,
    pub negative_control: Option<NegativeControl>,
    pub passed: bool,
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} trials, {} accepted, {} fired, acceptance rate {:.4}, {} counterexample(s)",
            self.target,
            self.trials,
            self.accepted,
            self.fired,
            self.acceptance_rate,
            self.counterexamples.len()
        )?;
        if let Some(nc) = &self.negative_control {
            write!(f, "; negative control {} of {} flagged", nc.violations, nc.checked)?;
        }
        write!(f, " => {}", if self.passed { "PASS" } else { "FAIL" })
    }
}
