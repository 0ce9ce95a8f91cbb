use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Check, CheckStatus, Conclusion, Outcome, RuleId, TheoremVerdict};
use crate::error::{Error, Result};
use crate::measures::MeasureKind;
use crate::sign::AssocSign;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    X,
    Y,
    Z,
}

impl Var {
    const ALL: [Var; 3] = [Var::X, Var::Y, Var::Z];

    fn bit(self) -> u8 {
        match self {
            Var::X => 1,
            Var::Y => 2,
            Var::Z => 4,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// A declared sign for one measure of `response` on `driver`, optionally
/// within levels of `given`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub measure: MeasureKind,
    pub driver: Var,
    pub response: Var,
    #[serde(default)]
    pub given: Option<Var>,
    pub sign: AssocSign,
}

impl Fact {
    pub fn new(measure: MeasureKind, driver: Var, response: Var, sign: AssocSign) -> Self {
        Self { measure, driver, response, given: None, sign }
    }

    pub fn given(mut self, v: Var) -> Self {
        self.given = Some(v);
        self
    }
}

/// Coefficient signs of `E(Z|x,y) = b0 + direct x + mediator y` and
/// `E(Y|x) = b3 + first_stage x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearPath {
    pub direct: AssocSign,
    pub mediator: AssocSign,
    pub first_stage: AssocSign,
}

/// Prior knowledge about the chain `X - Y - Z`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignKnowledge {
    pub facts: Vec<Fact>,
    /// `X ⊥ Z | Y`.
    pub ci: bool,
    /// `X ⊥ Y`.
    pub x_indep_y: bool,
    /// Sign of the slope when `E(Z|y)` is linear in `y`.
    pub linear_z_on_y: Option<AssocSign>,
    pub linear_path: Option<LinearPath>,
    /// Sign of the `(x, y)` interaction of `ln f(z|x,y)`, for every `z`.
    pub interaction: Option<AssocSign>,
    pub y_given_x_expfam: bool,
    pub z_given_x_expfam: bool,
    pub binary: Vec<Var>,
}

impl SignKnowledge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, f: Fact) -> Self {
        self.facts.push(f);
        self
    }

    pub fn is_binary(&self, v: Var) -> bool {
        self.binary.contains(&v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub verdicts: Vec<TheoremVerdict>,
    pub notes: Vec<String>,
}

impl Propagation {
    pub fn conclusions(&self) -> impl Iterator<Item = &Conclusion> {
        self.verdicts.iter().flat_map(|v| v.conclusions.iter())
    }
}

type Key = (MeasureKind, Var, Var, Option<Var>);

fn key(m: MeasureKind, d: Var, r: Var, g: Option<Var>) -> Key {
    match m {
        MeasureKind::Density | MeasureKind::Correlation if r < d => (m, r, d, g),
        _ => (m, d, r, g),
    }
}

/// Closed fact store in one reflection frame.
#[derive(Clone, Debug)]
struct Store {
    map: BTreeMap<Key, AssocSign>,
}

impl Store {
    fn get(&self, m: MeasureKind, d: Var, r: Var, g: Option<Var>) -> Option<AssocSign> {
        self.map.get(&key(m, d, r, g)).copied()
    }

    /// Returns whether the store changed.
    fn put(&mut self, m: MeasureKind, d: Var, r: Var, g: Option<Var>, s: AssocSign) -> Result<bool> {
        let k = key(m, d, r, g);
        match self.map.get(&k) {
            None => {
                self.map.insert(k, s);
                Ok(true)
            }
            Some(&old) => {
                let met = old
                    .meet(s)
                    .ok_or_else(|| Error::Contradiction(format!("{m}({r} on {d}{}) is both {old} and {s}", given_str(g))))?;
                self.map.insert(k, met);
                Ok(met != old)
            }
        }
    }
}

fn given_str(g: Option<Var>) -> String {
    g.map(|g| format!(" | {g}")).unwrap_or_default()
}

fn nonneg(s: Option<AssocSign>) -> bool {
    s.is_some_and(AssocSign::is_nonneg)
}

fn is_zero(s: Option<AssocSign>) -> bool {
    s == Some(AssocSign::Zero)
}

fn strict(s: Option<AssocSign>) -> bool {
    s == Some(AssocSign::Positive)
}

/// Implications among measures of one pair, iterated to a fixpoint.
fn close(k: &SignKnowledge, store: &mut Store) -> Result<()> {
    use MeasureKind::*;
    loop {
        let mut changed = false;
        let snapshot: Vec<(Key, AssocSign)> = store.map.iter().map(|(k, s)| (*k, *s)).collect();
        for ((m, d, r, g), s) in snapshot {
            if s == AssocSign::Mixed {
                continue;
            }
            let mut put = |m, d, r, s| store.put(m, d, r, g, s);
            match m {
                Density => {
                    // likelihood-ratio order in either direction carries its strictness down
                    for (a, b) in [(d, r), (r, d)] {
                        changed |= put(Distribution, a, b, s)?;
                        changed |= put(Expectation, a, b, s)?;
                    }
                }
                Distribution => {
                    changed |= put(Expectation, d, r, s)?;
                    if s == AssocSign::Zero {
                        changed |= put(Density, d, r, s)?;
                    }
                    if k.is_binary(r) {
                        changed |= put(Density, d, r, s)?;
                    }
                }
                Expectation => {
                    if k.is_binary(r) {
                        changed |= put(Distribution, d, r, s)?;
                        changed |= put(Density, d, r, s)?;
                    }
                    if g.is_none() && d == Var::X && r == Var::Y && k.y_given_x_expfam {
                        changed |= put(Density, d, r, s)?;
                    }
                    if k.is_binary(d) {
                        changed |= put(Correlation, d, r, s)?;
                    }
                }
                Correlation => {}
            }
        }
        if !changed {
            return Ok(());
        }
    }
}

/// Sign of a declared quantity after reflecting the variables in `mask`.
fn reflect(s: AssocSign, vars: &[Var], mask: u8) -> AssocSign {
    let flips = vars.iter().filter(|v| v.bit() & mask != 0).count();
    if flips % 2 == 1 {
        s.negate()
    } else {
        s
    }
}

struct Frame<'a> {
    k: &'a SignKnowledge,
    store: Store,
    mask: u8,
}

fn declared(name: String, measure: Option<MeasureKind>, observed: Option<AssocSign>) -> Check {
    Check { name, measure, observed, status: CheckStatus::Holds, required: true, detail: None, values: None }
}

impl Frame<'_> {
    fn check(&self, m: MeasureKind, d: Var, r: Var, g: Option<Var>) -> Check {
        let s = self.store.get(m, d, r, g);
        let name = match m {
            MeasureKind::Density => format!("density({d},{r}{}) >= 0", given_str(g)),
            _ => format!("{m}({r} on {d}{}) >= 0", given_str(g)),
        };
        declared(name, Some(m), s.map(|s| reflect(s, &[d, r], self.mask)))
    }

    fn conclusion(&self, m: MeasureKind, s: AssocSign) -> Conclusion {
        Conclusion {
            measure: m,
            driver: Var::X.to_string(),
            response: Var::Z.to_string(),
            sign: reflect(s, &[Var::X, Var::Z], self.mask),
            observed: None,
            holds: None,
            grid: None,
        }
    }

    fn frame_note(&self) -> Option<String> {
        let names: Vec<String> = Var::ALL.iter().filter(|v| v.bit() & self.mask != 0).map(|v| v.to_string()).collect();
        (!names.is_empty()).then(|| format!("applied with reversed coding of {}", names.join(", ")))
    }

    fn verdict(&self, rule: RuleId, checks: Vec<Check>, conclusions: Vec<Conclusion>, mut notes: Vec<String>) -> TheoremVerdict {
        notes.extend(self.frame_note());
        TheoremVerdict { rule, outcome: Outcome::Fires, fires: true, checks, conclusions, justification: notes }
    }

    fn get(&self, m: MeasureKind, d: Var, r: Var, g: Option<Var>) -> Option<AssocSign> {
        self.store.get(m, d, r, g)
    }

    /// Every rule whose premises hold in this frame, in positive orientation.
    fn fire(&self) -> Vec<TheoremVerdict> {
        use MeasureKind::*;
        use Var::*;
        let k = self.k;
        let mut out = Vec::new();
        let ci = || declared("X ⊥ Z | Y".into(), None, None);
        let zero_if = |z: bool, pos: bool| {
            if z {
                AssocSign::Zero
            } else if pos {
                AssocSign::Positive
            } else {
                AssocSign::NonNegative
            }
        };

        if k.ci {
            let (a, b) = (self.get(Density, X, Y, None), self.get(Density, Y, Z, None));
            if nonneg(a) && nonneg(b) {
                let s = zero_if(is_zero(a) || is_zero(b), strict(a) && strict(b));
                out.push(self.verdict(
                    RuleId::T1,
                    vec![ci(), self.check(Density, X, Y, None), self.check(Density, Y, Z, None)],
                    vec![self.conclusion(Density, s)],
                    vec![],
                ));
            }
            let (a, b) = (self.get(Distribution, X, Y, None), self.get(Distribution, Y, Z, None));
            if nonneg(a) && nonneg(b) {
                let s = zero_if(is_zero(a) || is_zero(b), false);
                out.push(self.verdict(
                    RuleId::T2,
                    vec![ci(), self.check(Distribution, X, Y, None), self.check(Distribution, Y, Z, None)],
                    vec![self.conclusion(Distribution, s)],
                    vec!["strictness is not carried: declared witnesses may not line up across Y levels".into()],
                ));
            }
            let (a, b) = (self.get(Distribution, X, Y, None), self.get(Expectation, Y, Z, None));
            if nonneg(a) && nonneg(b) {
                let s = zero_if(is_zero(a) || is_zero(b), false);
                out.push(self.verdict(
                    RuleId::T3,
                    vec![ci(), self.check(Distribution, X, Y, None), self.check(Expectation, Y, Z, None)],
                    vec![self.conclusion(Expectation, s)],
                    vec![],
                ));
            }
            if let (Some(beta), Some(ey)) = (k.linear_z_on_y, self.get(Expectation, X, Y, None)) {
                let beta = reflect(beta, &[Y, Z], self.mask);
                if let (true, Some(s)) = (beta.is_nonneg() && ey.is_nonneg(), beta.compose(ey)) {
                    let mut lin = declared("E(Z|y) linear in y".into(), None, Some(reflect(beta, &[Y, Z], self.mask)));
                    lin.detail = Some("slope sign".into());
                    out.push(self.verdict(
                        RuleId::C1,
                        vec![ci(), lin, self.check(Expectation, X, Y, None)],
                        vec![self.conclusion(Expectation, s)],
                        vec![],
                    ));
                }
            }
        }

        let assumption = self.get(Density, X, Z, Some(Y));
        let (c1, c2) = (self.get(Density, X, Y, None), self.get(Density, Y, Z, Some(X)));
        if nonneg(assumption) && nonneg(c1) && nonneg(c2) {
            let checks = vec![self.check(Density, X, Z, Some(Y)), self.check(Density, X, Y, None), self.check(Density, Y, Z, Some(X))];
            let inter = k.interaction.map(|s| reflect(s, &[X, Y], self.mask));
            if nonneg(inter) {
                let mut cs = checks.clone();
                cs.push(declared("interaction of (X,Y) in ln f(z|x,y) >= 0".into(), None, k.interaction));
                out.push(self.verdict(RuleId::T5, cs, vec![self.conclusion(Density, AssocSign::NonNegative)], vec![]));
            }
            if k.is_binary(X) || k.is_binary(Z) {
                let mut cs = vec![declared("X or Z binary".into(), None, None)];
                cs.extend(checks);
                out.push(self.verdict(RuleId::C6, cs, vec![self.conclusion(Density, AssocSign::NonNegative)], vec![]));
            }
        }

        let no_ci = |a: Option<AssocSign>, c1: Option<AssocSign>, c2: Option<AssocSign>| {
            zero_if(is_zero(a) && (is_zero(c1) || is_zero(c2)), false)
        };
        let (a, c1, c2) = (self.get(Distribution, X, Z, Some(Y)), self.get(Distribution, X, Y, None), self.get(Distribution, Y, Z, Some(X)));
        if nonneg(a) && nonneg(c1) && nonneg(c2) {
            out.push(self.verdict(
                RuleId::T6,
                vec![self.check(Distribution, X, Z, Some(Y)), self.check(Distribution, X, Y, None), self.check(Distribution, Y, Z, Some(X))],
                vec![self.conclusion(Distribution, no_ci(a, c1, c2))],
                vec![],
            ));
        }
        let (a, c1, c2) = (self.get(Expectation, X, Z, Some(Y)), self.get(Distribution, X, Y, None), self.get(Expectation, Y, Z, Some(X)));
        if nonneg(a) && nonneg(c1) && nonneg(c2) {
            let s = no_ci(a, c1, c2);
            let checks = vec![self.check(Expectation, X, Z, Some(Y)), self.check(Distribution, X, Y, None), self.check(Expectation, Y, Z, Some(X))];
            out.push(self.verdict(RuleId::T7, checks.clone(), vec![self.conclusion(Expectation, s)], vec![]));
            if k.z_given_x_expfam {
                let mut cs = vec![declared("Z | X exponential family".into(), None, None)];
                cs.extend(checks);
                out.push(self.verdict(RuleId::T8, cs, vec![self.conclusion(Density, s), self.conclusion(Expectation, s)], vec![]));
            }
        }

        if let Some(lp) = k.linear_path {
            let b1 = reflect(lp.direct, &[X, Z], self.mask);
            let b2 = reflect(lp.mediator, &[Y, Z], self.mask);
            let b4 = reflect(lp.first_stage, &[X, Y], self.mask);
            let ezy = self.get(Expectation, Y, Z, None);
            if b1.is_nonneg() && b4.is_nonneg() && (b2.is_nonneg() || nonneg(ezy)) {
                let zero = b1 == AssocSign::Zero && (b2 == AssocSign::Zero || b4 == AssocSign::Zero);
                let mut checks = vec![
                    declared("direct slope >= 0".into(), None, Some(lp.direct)),
                    declared("first-stage slope >= 0".into(), None, Some(lp.first_stage)),
                ];
                checks.push(if b2.is_nonneg() {
                    declared("(1) mediator slope >= 0".into(), None, Some(lp.mediator))
                } else {
                    self.check(Expectation, Y, Z, None)
                });
                out.push(self.verdict(RuleId::C4, checks, vec![self.conclusion(Expectation, zero_if(zero, false))], vec![]));
            }
        }

        if k.x_indep_y {
            let mut checks = vec![declared("X ⊥ Y".into(), None, None)];
            let mut concl = Vec::new();
            let d = self.get(Density, X, Z, Some(Y));
            if k.is_binary(Z) && nonneg(d) {
                checks.push(self.check(Density, X, Z, Some(Y)));
                concl.push(self.conclusion(Density, zero_if(is_zero(d), false)));
            }
            for m in [Distribution, Expectation] {
                let s = self.get(m, X, Z, Some(Y));
                if nonneg(s) {
                    checks.push(self.check(m, X, Z, Some(Y)));
                    concl.push(self.conclusion(m, zero_if(is_zero(s), false)));
                }
            }
            if !concl.is_empty() {
                out.push(self.verdict(RuleId::C5, checks, concl, vec![]));
            }
        }
        out
    }
}

/// Fire every rule whose premises follow from `k`, in every coding direction
/// of `X`, `Y`, `Z`, and return the `(X, Z)` conclusions.
pub fn propagate(k: &SignKnowledge) -> Result<Propagation> {
    use MeasureKind::*;
    let mut notes = Vec::new();
    let mut base = Store { map: BTreeMap::new() };
    for f in &k.facts {
        if f.driver == f.response || f.given.is_some_and(|g| g == f.driver || g == f.response) {
            return Err(Error::Invalid(format!("fact {f:?} repeats a variable")));
        }
        if f.measure == Correlation {
            let binary = [f.driver, f.response].into_iter().find(|v| k.is_binary(*v));
            match binary {
                Some(b) => {
                    let other = if b == f.driver { f.response } else { f.driver };
                    notes.push(format!("correlation({},{}) read as expectation({other} on {b}) because {b} is binary", f.driver, f.response));
                    base.put(Expectation, b, other, f.given, f.sign)?;
                }
                None => notes.push(format!(
                    "correlation({},{}) ignored: a correlation sign does not carry along a chain, so it is not a premise of any rule",
                    f.driver, f.response
                )),
            }
            continue;
        }
        base.put(f.measure, f.driver, f.response, f.given, f.sign)?;
    }
    if k.ci {
        for m in [Density, Distribution, Expectation] {
            base.put(m, Var::X, Var::Z, Some(Var::Y), AssocSign::Zero)?;
        }
    }
    if k.x_indep_y {
        base.put(Density, Var::X, Var::Y, None, AssocSign::Zero)?;
    }
    close(k, &mut base)?;

    // rule id -> measure -> concluded sign, met across frames
    let mut merged: BTreeMap<RuleId, (TheoremVerdict, BTreeMap<MeasureKind, AssocSign>)> = BTreeMap::new();
    for mask in 0u8..8 {
        let mut store = Store { map: BTreeMap::new() };
        for (&(m, d, r, g), &s) in &base.map {
            store.map.insert((m, d, r, g), reflect(s, &[d, r], mask));
        }
        let frame = Frame { k, store, mask };
        for v in frame.fire() {
            let entry = merged.entry(v.rule).or_insert_with(|| (v.clone(), BTreeMap::new()));
            for c in &v.conclusions {
                let slot = entry.1.entry(c.measure).or_insert(c.sign);
                *slot = slot
                    .meet(c.sign)
                    .ok_or_else(|| Error::Contradiction(format!("{} concludes both {} and {} for {}(Z on X)", v.rule, slot, c.sign, c.measure)))?;
            }
            if mask == 0 {
                entry.0 = v;
            }
        }
    }

    let declared_xz: BTreeSet<Key> = base.map.keys().filter(|(_, d, r, g)| g.is_none() && *d == Var::X && *r == Var::Z).copied().collect();
    let mut verdicts = Vec::new();
    for (_, (mut v, signs)) in merged {
        v.conclusions = signs
            .iter()
            .map(|(&m, &s)| Conclusion {
                measure: m,
                driver: Var::X.to_string(),
                response: Var::Z.to_string(),
                sign: s,
                observed: None,
                holds: None,
                grid: None,
            })
            .collect();
        extend_downstream(&mut v.conclusions);
        for c in &v.conclusions {
            if let Some(&d) = declared_xz.iter().find(|key| key.0 == c.measure).and_then(|key| base.map.get(key)) {
                if d.meet(c.sign).is_none() {
                    return Err(Error::Contradiction(format!("{} concludes {}(Z on X) {} but {} is declared", v.rule, c.measure, c.sign, d)));
                }
            }
        }
        verdicts.push(v);
    }
    verdicts.sort_by_key(|v| (v.conclusions.first().map(|c| c.measure), v.rule));
    Ok(Propagation { verdicts, notes })
}

/// Append the weaker measures implied by each concluded sign.
fn extend_downstream(cs: &mut Vec<Conclusion>) {
    use MeasureKind::*;
    let mut extra: Vec<Conclusion> = Vec::new();
    for c in cs.iter() {
        let below: &[MeasureKind] = match c.measure {
            Density => &[Distribution, Expectation],
            Distribution => &[Expectation],
            _ => &[],
        };
        for &m in below {
            if c.sign != AssocSign::Mixed && !cs.iter().chain(extra.iter()).any(|o| o.measure == m) {
                extra.push(Conclusion { measure: m, ..c.clone() });
            }
        }
    }
    cs.extend(extra);
    cs.sort_by_key(|c| c.measure);
}
