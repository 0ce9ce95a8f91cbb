//! Tolerance-aware sign lattice for association measures.
//!
//! Every measure is classified in *association orientation*: a positively
//! oriented relationship reports `Positive` or `NonNegative` regardless of
//! whether the raw quantity is a log odds ratio, a negated CDF difference or
//! a mean difference.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Default tolerance for probability-derived grids.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssocSign {
    Positive,
    NonNegative,
    Zero,
    NonPositive,
    Negative,
    Mixed,
}

impl AssocSign {
    pub const ALL: [AssocSign; 6] = [
        AssocSign::Positive,
        AssocSign::NonNegative,
        AssocSign::Zero,
        AssocSign::NonPositive,
        AssocSign::Negative,
        AssocSign::Mixed,
    ];

    pub fn is_nonneg(self) -> bool {
        matches!(self, Self::Positive | Self::NonNegative | Self::Zero)
    }

    pub fn is_nonpos(self) -> bool {
        matches!(self, Self::Negative | Self::NonPositive | Self::Zero)
    }

    pub fn negate(self) -> Self {
        match self {
            Self::Positive => Self::Negative,
            Self::NonNegative => Self::NonPositive,
            Self::Zero => Self::Zero,
            Self::NonPositive => Self::NonNegative,
            Self::Negative => Self::Positive,
            Self::Mixed => Self::Mixed,
        }
    }

    /// `true` when a quantity known to have sign `self` also has sign `other`
    /// (lattice order: the more informative label entails the weaker one).
    pub fn entails(self, other: AssocSign) -> bool {
        use AssocSign::*;
        match (self, other) {
            (a, b) if a == b => true,
            (Positive, NonNegative) | (Zero, NonNegative) => true,
            (Negative, NonPositive) | (Zero, NonPositive) => true,
            _ => false,
        }
    }

    /// Greatest lower bound of two facts about the same quantity; `None` when
    /// they contradict.
    pub fn meet(self, other: AssocSign) -> Option<AssocSign> {
        use AssocSign::*;
        if self.entails(other) {
            Some(self)
        } else if other.entails(self) {
            Some(other)
        } else {
            match (self, other) {
                (NonNegative, NonPositive) | (NonPositive, NonNegative) => Some(Zero),
                _ => None,
            }
        }
    }

    /// Sign of a quantity obtained by chaining two signed links (the product
    /// rule used for reflected transitivity, e.g. `X' = -X`).
    pub fn compose(self, other: AssocSign) -> Option<AssocSign> {
        use AssocSign::*;
        if self == Zero || other == Zero {
            return Some(Zero);
        }
        if self == Mixed || other == Mixed {
            return None;
        }
        let positive = self.is_nonneg() == other.is_nonneg();
        let strict = matches!(self, Positive | Negative) && matches!(other, Positive | Negative);
        Some(match (positive, strict) {
            (true, true) => Positive,
            (true, false) => NonNegative,
            (false, true) => Negative,
            (false, false) => NonPositive,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Positive => "+",
            Self::NonNegative => ">=0",
            Self::Zero => "0",
            Self::NonPositive => "<=0",
            Self::Negative => "-",
            Self::Mixed => "+/-",
        }
    }
}

impl fmt::Display for AssocSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Positive => "Positive",
            Self::NonNegative => "NonNegative",
            Self::Zero => "Zero",
            Self::NonPositive => "NonPositive",
            Self::Negative => "Negative",
            Self::Mixed => "Mixed",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AssocSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "positive" | "+" => Self::Positive,
            "nonnegative" | ">=0" => Self::NonNegative,
            "zero" | "0" => Self::Zero,
            "nonpositive" | "<=0" => Self::NonPositive,
            "negative" | "-" => Self::Negative,
            "mixed" => Self::Mixed,
            other => return Err(Error::Parse(format!("unknown sign `{other}`"))),
        })
    }
}

/// A classified grid: the most informative label plus the strictness witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignSummary {
    pub sign: AssocSign,
    /// Flat grid index of the entry with the largest magnitude in the
    /// direction of the sign, when a strict entry exists.
    pub witness: Option<usize>,
    pub undefined: usize,
    pub len: usize,
}

impl SignSummary {
    pub fn is_complete(&self) -> bool {
        self.undefined == 0
    }

    pub fn diagnostic(&self) -> Option<String> {
        if self.undefined == self.len {
            Some("all entries undefined".into())
        } else if self.undefined > 0 {
            Some(format!("{} of {} entries undefined", self.undefined, self.len))
        } else {
            None
        }
    }
}

/// Classify a grid of values (already in association orientation).
///
/// Undefined entries are ignored for the label, except that they demote
/// `Positive`/`Negative` to `NonNegative`/`NonPositive`. A grid with no
/// defined entry is `Mixed`.
pub fn classify_sign(grid: &[Option<f64>], tol: f64) -> Result<SignSummary> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut undefined = 0;
    let mut any_pos = false;
    let mut any_neg = false;
    let mut max = (f64::NEG_INFINITY, 0usize);
    let mut min = (f64::INFINITY, 0usize);
    for (i, v) in grid.iter().enumerate() {
        match v {
            Some(v) if v.is_finite() => {
                if *v > tol {
                    any_pos = true;
                }
                if *v < -tol {
                    any_neg = true;
                }
                if *v > max.0 {
                    max = (*v, i);
                }
                if *v < min.0 {
                    min = (*v, i);
                }
            }
            _ => undefined += 1,
        }
    }
    let len = grid.len();
    if undefined == len {
        return Ok(SignSummary { sign: AssocSign::Mixed, witness: None, undefined, len });
    }
    let (sign, witness) = match (any_pos, any_neg) {
        (false, false) => (AssocSign::Zero, None),
        (true, false) if undefined > 0 => (AssocSign::NonNegative, Some(max.1)),
        (true, false) => (AssocSign::Positive, Some(max.1)),
        (false, true) if undefined > 0 => (AssocSign::NonPositive, Some(min.1)),
        (false, true) => (AssocSign::Negative, Some(min.1)),
        (true, true) => (AssocSign::Mixed, None),
    };
    Ok(SignSummary { sign, witness, undefined, len })
}

/// Whether a concrete grid (association orientation) is consistent with a
/// concluded sign. Undefined entries are skipped. A strict conclusion needs a
/// defined entry strictly beyond zero; tolerance only relaxes the weak side.
pub fn grid_satisfies(grid: &[Option<f64>], concluded: AssocSign, tol: f64) -> bool {
    let defined = grid.iter().flatten().copied().filter(|v| v.is_finite());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut n = 0;
    for v in defined {
        lo = lo.min(v);
        hi = hi.max(v);
        n += 1;
    }
    if n == 0 {
        return concluded == AssocSign::Mixed;
    }
    match concluded {
        AssocSign::Positive => lo >= -tol && hi > 0.0,
        AssocSign::NonNegative => lo >= -tol,
        AssocSign::Zero => lo >= -tol && hi <= tol,
        AssocSign::NonPositive => hi <= tol,
        AssocSign::Negative => hi <= tol && lo < 0.0,
        AssocSign::Mixed => hi > tol && lo < -tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().copied().map(Some).collect()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_sign(&g(&[0.0, 0.0]), 1e-12).unwrap().sign, AssocSign::Zero);
        assert_eq!(classify_sign(&g(&[0.4, -0.6]), 1e-9).unwrap().sign, AssocSign::Mixed);
        let s = classify_sign(&g(&[0.02, 0.68, 0.48]), 1e-9).unwrap();
        assert_eq!(s.sign, AssocSign::Positive);
        assert_eq!(s.witness, Some(1));
        assert!(matches!(classify_sign(&[], 1e-9), Err(Error::EmptyGrid)));
    }

    #[test]
    fn undefined_entries_demote_strict_labels() {
        let s = classify_sign(&[Some(0.3), None], 1e-9).unwrap();
        assert_eq!(s.sign, AssocSign::NonNegative);
        assert_eq!(s.undefined, 1);
        let s = classify_sign(&[Some(-0.3), None], 1e-9).unwrap();
        assert_eq!(s.sign, AssocSign::NonPositive);
        let s = classify_sign(&[None, None], 1e-9).unwrap();
        assert_eq!(s.sign, AssocSign::Mixed);
        assert!(s.diagnostic().unwrap().contains("all entries"));
    }

    #[test]
    fn lattice_meet_and_compose() {
        use AssocSign::*;
        assert_eq!(NonNegative.meet(NonPositive), Some(Zero));
        assert_eq!(Positive.meet(NonNegative), Some(Positive));
        assert_eq!(Positive.meet(Negative), None);
        assert_eq!(Positive.meet(Zero), None);
        assert_eq!(Negative.compose(Negative), Some(Positive));
        assert_eq!(Positive.compose(NonNegative), Some(NonNegative));
        assert_eq!(Zero.compose(Mixed), Some(Zero));
        assert_eq!(Mixed.compose(Positive), None);
        for s in AssocSign::ALL {
            assert!(s.entails(s));
            assert_eq!(s.negate().negate(), s);
            assert_eq!(s.to_string().parse::<AssocSign>().unwrap(), s);
        }
    }

    #[test]
    fn satisfies_respects_strictness() {
        assert!(grid_satisfies(&g(&[0.0, 1e-3]), AssocSign::Positive, 1e-9));
        assert!(!grid_satisfies(&g(&[0.0, 0.0]), AssocSign::Positive, 1e-9));
        assert!(grid_satisfies(&g(&[-1e-12, 0.0]), AssocSign::NonNegative, 1e-9));
        assert!(!grid_satisfies(&g(&[-1e-3]), AssocSign::NonNegative, 1e-9));
    }
}
