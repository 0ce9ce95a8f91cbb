//! Sign transitivity along a chain `X - Y - Z`.
//!
//! Concrete checkers evaluate a rule's premises on a three-way table whose
//! axes are `(X, Y, Z)` in that order. [`propagate`] applies the same rules
//! to declared sign knowledge.

mod checkers;
mod propagate;
mod simpson;

pub use checkers::*;
pub use propagate::{propagate, Fact, LinearPath, Propagation, SignKnowledge, Var};
pub use simpson::{detect_simpson, detect_simpson_joint, simpson_certificate, Certificate, SimpsonReport};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::measures::MeasureKind;
use crate::sign::AssocSign;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "T1_DensityCI")]
    T1,
    #[serde(rename = "T2_DistributionCI")]
    T2,
    #[serde(rename = "T3_ExpectationCI")]
    T3,
    #[serde(rename = "C1_LinearCI")]
    C1,
    #[serde(rename = "T5_DensityNoCI")]
    T5,
    #[serde(rename = "T6_DistributionNoCI")]
    T6,
    #[serde(rename = "T7_ExpectationNoCI")]
    T7,
    #[serde(rename = "C4_LinearPath")]
    C4,
    #[serde(rename = "C5_RandomizedY")]
    C5,
    #[serde(rename = "T8_ExpFamNoCI")]
    T8,
    #[serde(rename = "C6_BinaryRedundancy")]
    C6,
}

impl RuleId {
    pub const ALL: [RuleId; 11] = [
        Self::T1,
        Self::T2,
        Self::T3,
        Self::C1,
        Self::T5,
        Self::T6,
        Self::T7,
        Self::C4,
        Self::C5,
        Self::T8,
        Self::C6,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Self::T1 => "T1",
            Self::T2 => "T2",
            Self::T3 => "T3",
            Self::C1 => "C1",
            Self::T5 => "T5",
            Self::T6 => "T6",
            Self::T7 => "T7",
            Self::C4 => "C4",
            Self::C5 => "C5",
            Self::T8 => "T8",
            Self::C6 => "C6",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::T1 => "density transitivity under X ⊥ Z | Y",
            Self::T2 => "distribution transitivity under X ⊥ Z | Y",
            Self::T3 => "expectation transitivity under X ⊥ Z | Y",
            Self::C1 => "linear E(Z|y) under X ⊥ Z | Y",
            Self::T5 => "density transitivity without conditional independence",
            Self::T6 => "distribution transitivity without conditional independence",
            Self::T7 => "expectation transitivity without conditional independence",
            Self::C4 => "linear path rule",
            Self::C5 => "randomized intermediate (X ⊥ Y)",
            Self::T8 => "expectation premises with exponential-family Z | X",
            Self::C6 => "density rule without the interaction condition (binary X or Z)",
        }
    }

    pub fn uses_ci(self) -> bool {
        matches!(self, Self::T1 | Self::T2 | Self::T3 | Self::C1)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let head = s.split('_').next().unwrap_or(s).to_ascii_uppercase();
        RuleId::ALL
            .into_iter()
            .find(|r| r.code() == head)
            .ok_or_else(|| Error::Parse(format!("unknown rule `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Holds,
    Fails,
    /// Entries needed for the check are undefined (zero-probability cells).
    Undefined,
}

/// One premise of a rule, evaluated or declared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measure: Option<MeasureKind>,
    pub observed: Option<AssocSign>,
    pub status: CheckStatus,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Evaluated grid in association orientation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Option<f64>>>,
}

impl Check {
    pub fn satisfied(&self) -> bool {
        self.status == CheckStatus::Holds
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Fires,
    PremisesFail,
    NotApplicable,
}

/// A sign concluded for `(X, Z)` and, for concrete tables, what the table shows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conclusion {
    pub measure: MeasureKind,
    pub driver: String,
    pub response: String,
    pub sign: AssocSign,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<AssocSign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holds: Option<bool>,
    /// Observed grid in association orientation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub rule: RuleId,
    pub outcome: Outcome,
    pub fires: bool,
    pub checks: Vec<Check>,
    pub conclusions: Vec<Conclusion>,
    pub justification: Vec<String>,
}

impl TheoremVerdict {
    /// Outcome from required checks: any failure beats any undefined entry.
    fn assemble(rule: RuleId, checks: Vec<Check>, justification: Vec<String>) -> Self {
        let required = checks.iter().filter(|c| c.required);
        let outcome = if required.clone().any(|c| c.status == CheckStatus::Fails) {
            Outcome::PremisesFail
        } else if required.clone().any(|c| c.status == CheckStatus::Undefined) {
            Outcome::NotApplicable
        } else {
            Outcome::Fires
        };
        Self { rule, outcome, fires: outcome == Outcome::Fires, checks, conclusions: Vec::new(), justification }
    }

    /// `false` only when the rule fired and some conclusion is contradicted.
    pub fn sound(&self) -> bool {
        self.conclusions.iter().all(|c| c.holds != Some(false))
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.required && !c.satisfied())
    }
}

/// Checklist rendering for terminal output.
impl fmt::Display for TheoremVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ({}): {:?}", self.rule, self.rule.title(), self.outcome)?;
        for c in &self.checks {
            let mark = match c.status {
                CheckStatus::Holds => "[x]",
                CheckStatus::Fails => "[ ]",
                CheckStatus::Undefined => "[?]",
            };
            let opt = if c.required { "" } else { " (optional)" };
            write!(f, "  {mark} {}{opt}", c.name)?;
            if let Some(s) = c.observed {
                write!(f, "  observed {s}")?;
            }
            if let Some(d) = &c.detail {
                write!(f, "  ({d})")?;
            }
            if let Some(v) = c.values.as_ref().filter(|v| c.status == CheckStatus::Fails && v.len() <= 12) {
                let cells: Vec<String> = v.iter().map(|x| x.map_or("undef".into(), |x| format!("{x:.4}"))).collect();
                write!(f, "  values [{}]", cells.join(", "))?;
            }
            writeln!(f)?;
        }
        for c in &self.conclusions {
            write!(f, "  => {}({} on {}) {}", c.measure, c.response, c.driver, c.sign)?;
            if let (Some(o), Some(h)) = (c.observed, c.holds) {
                write!(f, "  observed {o}, {}", if h { "consistent" } else { "VIOLATED" })?;
            }
            writeln!(f)?;
        }
        for j in &self.justification {
            writeln!(f, "  note: {j}")?;
        }
        Ok(())
    }
}
