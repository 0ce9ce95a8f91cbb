use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::generate::{propose, trial_dims};
use super::{Counterexample, TrialConfig, VerificationReport};
use crate::dist::{check_ci, check_independent, CountTable, ProbTable, Variable};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::io::TensorJson;
use crate::measures::{correlation, density_assoc, distribution_assoc, expectation_assoc, MeasureKind, MeasureReport};
use crate::par::map_range;
use crate::sign::{grid_satisfies, AssocSign};
use crate::transitivity::{nonneg_status, CheckStatus, Conclusion, RuleId};

/// A rule with one premise dropped or replaced by a weaker one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Mean-shift rule with the distribution premise on `(Y on X)` weakened
    /// to an expectation premise.
    #[serde(rename = "T3-dropped-premise1")]
    T3ExpectationPremise,
    /// Mean-shift rule with the `(Z on Y)` premise replaced by a positive
    /// correlation between `Y` and `Z`.
    #[serde(rename = "T3-correlation-premise2")]
    T3CorrelationPremise,
    /// Pairwise positive expectation associations with no conditional
    /// independence.
    #[serde(rename = "T3-dropped-ci")]
    DroppedCi,
    /// Randomized intermediate with binary `X` but a three-level `Z`, keeping
    /// only the conditional density premise.
    #[serde(rename = "C5-binary-x")]
    C5BinaryX,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Self::T3ExpectationPremise, Self::T3CorrelationPremise, Self::DroppedCi, Self::C5BinaryX];

    pub fn code(self) -> &'static str {
        match self {
            Self::T3ExpectationPremise => "T3-dropped-premise1",
            Self::T3CorrelationPremise => "T3-correlation-premise2",
            Self::DroppedCi => "T3-dropped-ci",
            Self::C5BinaryX => "C5-binary-x",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::T3ExpectationPremise => "X ⊥ Z | Y, E(Y|x) nondecreasing, E(Z|y) nondecreasing => E(Z|x) nondecreasing?",
            Self::T3CorrelationPremise => "X ⊥ Z | Y, Y stochastically increasing in X, cov(Y, Z) >= 0 => E(Z|x) nondecreasing?",
            Self::DroppedCi => "E(Y|x) and E(Z|y) nondecreasing, no independence => E(Z|x) nondecreasing?",
            Self::C5BinaryX => "X ⊥ Y, binary X, density(X, Z | Y) >= 0 => density(X, Z) >= 0?",
        }
    }

    /// Proposal family for the random batch.
    fn proposal_rule(self) -> RuleId {
        match self {
            Self::T3ExpectationPremise | Self::T3CorrelationPremise => RuleId::T3,
            Self::DroppedCi => RuleId::T5,
            Self::C5BinaryX => RuleId::C5,
        }
    }

    fn fixture_seeds(self) -> Result<Vec<(String, ProbTable)>> {
        Ok(match self {
            Self::T3ExpectationPremise => vec![("EX1:0.3".into(), fixtures::ex1(0.3)?), ("EX2".into(), fixtures::ex2().joint_uniform_x()?)],
            Self::T3CorrelationPremise => vec![("EX3".into(), fixtures::ex3().joint_uniform_x()?)],
            Self::DroppedCi => vec![("TRANS".into(), fixtures::trans())],
            Self::C5BinaryX => vec![("C5-binary-x table".into(), c5_binary_x_table())],
        })
    }

    /// The retained and substituted premises.
    pub fn premises_hold(self, p: &ProbTable, tol: f64) -> Result<bool> {
        let n = p.names();
        if n.len() != 3 {
            return Err(Error::Invalid("scenario checks need a table over (X, Y, Z)".into()));
        }
        let (x, y, z) = (n[0], n[1], n[2]);
        let ok = |r: MeasureReport| nonneg_status(&r.oriented(), tol) == CheckStatus::Holds;
        Ok(match self {
            Self::T3ExpectationPremise => {
                check_ci(p, x, z, y, tol)? && ok(expectation_assoc(p, y, x, None, tol)?) && ok(expectation_assoc(p, z, y, None, tol)?)
            }
            Self::T3CorrelationPremise => {
                check_ci(p, x, z, y, tol)? && ok(distribution_assoc(p, y, x, None, tol)?) && ok(correlation(p, y, z, None, tol)?)
            }
            Self::DroppedCi => ok(expectation_assoc(p, y, x, None, tol)?) && ok(expectation_assoc(p, z, y, None, tol)?),
            Self::C5BinaryX => {
                p.var(x)?.is_binary() && check_independent(p, x, y, tol)? && ok(density_assoc(p, x, z, Some(y), tol)?)
            }
        })
    }

    /// The conclusion the intact rule would draw, evaluated on `p`.
    pub fn conclusion(self, p: &ProbTable, tol: f64) -> Result<Conclusion> {
        let n = p.names();
        let (x, z) = (n[0], n[2]);
        let r = match self {
            Self::C5BinaryX => density_assoc(p, x, z, None, tol)?,
            _ => expectation_assoc(p, z, x, None, tol)?,
        };
        let grid = r.oriented();
        Ok(Conclusion {
            measure: r.kind,
            driver: x.into(),
            response: z.into(),
            sign: AssocSign::NonNegative,
            observed: Some(r.sign),
            holds: Some(grid_satisfies(&grid, AssocSign::NonNegative, tol)),
            grid: Some(grid),
        })
    }

    fn measure(self) -> MeasureKind {
        match self {
            Self::C5BinaryX => MeasureKind::Density,
            _ => MeasureKind::Expectation,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|sc| sc.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown scenario `{s}`")))
    }
}

/// Binary `X` independent of `Y`, every `Y` slice likelihood-ratio ordered in
/// `(X, Z)`, yet the collapsed `(X, Z)` table is not.
pub fn c5_binary_x_table() -> ProbTable {
    #[rustfmt::skip]
    let counts = vec![
        7, 2, 1,   2, 1, 7,
        4, 4, 2,   2, 1, 7,
    ];
    CountTable::new(vec![Variable::indexed("X", 2), Variable::indexed("Y", 2), Variable::indexed("Z", 3)], counts)
        .and_then(|c| c.normalize())
        .expect("static table")
}

fn violation(scenario: Scenario, p: &ProbTable, c: Conclusion, trial: u64, source: Option<String>) -> Counterexample {
    let worst = c.grid.iter().flatten().flatten().copied().fold(f64::INFINITY, f64::min);
    Counterexample {
        trial,
        table: Some(TensorJson::from_table(p)),
        detail: format!(
            "{}: {}({} on {}) reaches {:.6} against a concluded {}",
            source.as_deref().unwrap_or("random draw"),
            scenario.measure(),
            c.response,
            c.driver,
            worst,
            c.sign
        ),
        conclusion: Some(c),
        fixture: source,
    }
}

/// Fixture seeds first, then `cfg.trials` random proposals. Each violation
/// found is returned; `passed` is false when any exists.
pub fn search_counterexample(scenario: Scenario, cfg: &TrialConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let mut found = Vec::new();
    let mut accepted = 0;
    for (name, p) in scenario.fixture_seeds()? {
        if !scenario.premises_hold(&p, cfg.tol)? {
            return Err(Error::Invalid(format!("seed `{name}` does not meet the {scenario} premises")));
        }
        accepted += 1;
        let c = scenario.conclusion(&p, cfg.tol)?;
        if c.holds == Some(false) {
            found.push(violation(scenario, &p, c, 0, Some(name)));
        }
    }
    let rule = scenario.proposal_rule();
    let mut dims_cfg = cfg.clone();
    if scenario == Scenario::C5BinaryX {
        dims_cfg.dims = vec![2, cfg.dims.get(1).copied().unwrap_or(3), cfg.dims.get(2).copied().unwrap_or(3)];
    }
    let draws = map_range(cfg.mode, cfg.trials, |t| -> Result<Option<Counterexample>> {
        let mut rng = dims_cfg.rng(t as u64);
        let dims = trial_dims(&mut rng, &dims_cfg);
        let (_, p) = propose(&mut rng, rule, &dims)?;
        if !scenario.premises_hold(&p, cfg.tol)? {
            return Ok(None);
        }
        let c = scenario.conclusion(&p, cfg.tol)?;
        Ok((c.holds == Some(false)).then(|| violation(scenario, &p, c, t as u64, None)))
    });
    let mut rejected = 0u64;
    for d in draws {
        match d? {
            Some(cx) => {
                accepted += 1;
                found.push(cx);
            }
            None => rejected += 1,
        }
    }
    // rejected here counts draws that missed the premises or kept the conclusion
    let total = cfg.trials + scenario.fixture_seeds()?.len();
    Ok(VerificationReport {
        target: scenario.to_string(),
        seed: cfg.seed,
        trials: total,
        accepted,
        fired: found.len(),
        rejected,
        acceptance_rate: accepted as f64 / total as f64,
        passed: found.is_empty(),
        counterexamples: found,
        negative_control: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> TrialConfig {
        TrialConfig { trials: 300, ..Default::default() }
    }

    #[test]
    fn fixture_seeds_hit() {
        let expected = [
            (Scenario::T3ExpectationPremise, -0.3),
            (Scenario::T3CorrelationPremise, -0.005),
            (Scenario::DroppedCi, -0.08),
        ];
        for (sc, value) in expected {
            let r = search_counterexample(sc, &quick()).unwrap();
            let first = &r.counterexamples[0];
            assert!(first.fixture.is_some(), "{sc}");
            let g = first.conclusion.as_ref().unwrap().grid.as_ref().unwrap();
            assert!((g[0].unwrap() - value).abs() < 1e-12, "{sc}: {g:?}");
        }
        let r = search_counterexample(Scenario::T3ExpectationPremise, &quick()).unwrap();
        let ex2 = r.counterexamples.iter().find(|c| c.fixture.as_deref() == Some("EX2")).unwrap();
        assert!((ex2.conclusion.as_ref().unwrap().grid.as_ref().unwrap()[0].unwrap() + 0.32).abs() < 1e-12);
    }

    #[test]
    fn c5_binary_x_slices_ordered_margin_not() {
        let p = c5_binary_x_table();
        assert!(Scenario::C5BinaryX.premises_hold(&p, 1e-12).unwrap());
        let c = Scenario::C5BinaryX.conclusion(&p, 1e-12).unwrap();
        let g = c.grid.unwrap();
        assert!((g[0].unwrap() - (2.5f64).ln()).abs() < 1e-12);
        assert!((g[1].unwrap() - (0.675f64).ln()).abs() < 1e-12);
        assert_eq!(c.holds, Some(false));
    }

    #[test]
    fn intact_rule_rejects_the_seeds() {
        for sc in [Scenario::T3ExpectationPremise, Scenario::T3CorrelationPremise, Scenario::DroppedCi] {
            for (_, p) in sc.fixture_seeds().unwrap() {
                assert!(!crate::transitivity::check_t3(&p, 1e-12).unwrap().fires, "{sc}");
            }
        }
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.code().parse::<Scenario>().unwrap(), sc);
            assert_eq!(serde_json::to_string(&sc).unwrap(), format!("\"{}\"", sc.code()));
        }
    }
}
