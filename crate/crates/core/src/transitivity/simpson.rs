//! Reversal detection from `(X, Z) | Y` slices, and a certificate that no
//! mixing distribution over `Y` can produce one.

use serde::{Deserialize, Serialize};

use super::checkers::{check_c6, check_t5, sign_check};
use super::{Outcome, RuleId, TheoremVerdict};
use crate::dist::{CondFamily, ProbTable};
use crate::error::{Error, Result};
use crate::measures::{density_assoc, distribution_assoc, expectation_assoc, measure, MeasureKind};
use crate::sign::AssocSign;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `true` when no choice of `P(Y)` can reverse the slice direction.
    pub issued: bool,
    /// Common slice direction the certificate protects, if any.
    pub direction: Option<AssocSign>,
    pub rules: Vec<TheoremVerdict>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpsonReport {
    pub measure: MeasureKind,
    pub driver: String,
    pub response: String,
    pub stratifier: String,
    /// `None` for slices whose conditioning event has no mass.
    pub slice_signs: Vec<Option<AssocSign>>,
    /// Oriented grid per slice.
    pub slice_values: Vec<Vec<Option<f64>>>,
    pub marginal_sign: Option<AssocSign>,
    pub marginal_values: Option<Vec<Option<f64>>>,
    pub reversal: bool,
    pub certificate: Certificate,
    pub warnings: Vec<String>,
}

struct Names {
    x: String,
    y: String,
    z: String,
}

fn names(slices: &CondFamily) -> Result<Names> {
    match (slices.target(), slices.given()) {
        ([x, z], [y]) => Ok(Names { x: x.name().into(), y: y.name().into(), z: z.name().into() }),
        _ => Err(Error::Invalid("slices must be a family of (X, Z) given a single Y".into())),
    }
}

/// Joint over `(X, Y, Z)` mixing the slices with weights `py`.
fn mix(slices: &CondFamily, py: &ProbTable, n: &Names) -> Result<ProbTable> {
    slices.joint_with(py)?.marginal(&[&n.x, &n.y, &n.z])
}

/// Uniform weight on every defined slice. Conditions that cancel `P(Y)` are
/// then read off this table.
fn pseudo_joint(slices: &CondFamily, n: &Names) -> Result<ProbTable> {
    let y = slices.given()[0].clone();
    let w = slices.rows().iter().map(|r| if r.is_some() { 1.0 } else { 0.0 }).collect();
    mix(slices, &ProbTable::from_weights(vec![y], w)?, n)
}

/// Conditions computable from `f(x,z|y)` alone whose conclusion is a
/// non-negative marginal association, tried in the direction of the slices.
pub fn simpson_certificate(slices: &CondFamily, kind: MeasureKind, tol: f64) -> Result<Certificate> {
    let n = names(slices)?;
    let pj = pseudo_joint(slices, &n)?;
    let cond = measure(kind, &pj, &n.x, &n.z, Some(&n.y), tol)?;
    let signs: Vec<AssocSign> = slices
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_some())
        .map(|(g, _)| crate::sign::classify_sign(&cond.oriented_slice(g), tol).map(|s| s.sign))
        .collect::<Result<_>>()?;
    let direction = if signs.iter().all(|s| s.is_nonneg()) {
        AssocSign::Positive
    } else if signs.iter().all(|s| s.is_nonpos()) {
        AssocSign::Negative
    } else {
        return Ok(Certificate {
            issued: false,
            direction: None,
            rules: Vec::new(),
            reason: "slices disagree in direction; there is no common sign to reverse".into(),
        });
    };
    let table = if direction == AssocSign::Negative { pj.reflect(&n.z)? } else { pj };
    let rules = mixing_free_rules(&table, &n, tol)?;
    let issued = rules.iter().any(|v| v.fires);
    let reason = if issued {
        let fired: Vec<&str> = rules.iter().filter(|v| v.fires).map(|v| v.rule.code()).collect();
        format!("no P(Y) can reverse the slices: {} holds from the slices alone", fired.join(", "))
    } else {
        "no rule with mixing-free conditions holds; a reversal may be possible".into()
    };
    Ok(Certificate { issued, direction: Some(direction), rules, reason })
}

/// Density rules as is; distribution and expectation rules with the
/// `P(Y)`-dependent condition on `Y | X` replaced by `density(X,Y) >= 0`,
/// which implies it for every `P(Y)`.
fn mixing_free_rules(p: &ProbTable, n: &Names, tol: f64) -> Result<Vec<TheoremVerdict>> {
    let mut out = vec![check_t5(p, tol)?];
    let c6 = check_c6(p, tol)?;
    if c6.outcome != Outcome::NotApplicable {
        out.push(c6);
    }
    let xy = density_assoc(p, &n.x, &n.y, None, tol)?;
    let c1 = sign_check(format!("(1') density({},{}) >= 0", n.x, n.y), &xy, true);

    let a = distribution_assoc(p, &n.z, &n.x, Some(&n.y), tol)?;
    let c2 = distribution_assoc(p, &n.z, &n.y, Some(&n.x), tol)?;
    let checks = vec![
        sign_check(format!("assumption: dF({}|{},{})/d{} <= 0", n.z, n.y, n.x, n.x), &a, true),
        c1.clone(),
        sign_check(format!("(2) dF({}|{},{})/d{} <= 0", n.z, n.y, n.x, n.y), &c2, true),
    ];
    out.push(TheoremVerdict::assemble(RuleId::T6, checks, vec!["condition (1) strengthened to a density condition free of P(Y)".into()]));

    let a = expectation_assoc(p, &n.z, &n.x, Some(&n.y), tol)?;
    let c2 = expectation_assoc(p, &n.z, &n.y, Some(&n.x), tol)?;
    let checks = vec![
        sign_check(format!("assumption: dE({}|{},{})/d{} >= 0", n.z, n.y, n.x, n.x), &a, true),
        c1,
        sign_check(format!("(2) dE({}|{},{})/d{} >= 0", n.z, n.y, n.x, n.y), &c2, true),
    ];
    out.push(TheoremVerdict::assemble(RuleId::T7, checks, vec!["condition (1) strengthened to a density condition free of P(Y)".into()]));
    // the pseudo-joint's own marginal is one arbitrary mixture; drop it
    for v in &mut out {
        v.conclusions.clear();
    }
    Ok(out)
}

/// Slice signs of `kind` for `(X, Z)` within each `Y`, the marginal sign when
/// `py` is given, and a mixing-free certificate.
pub fn detect_simpson(slices: &CondFamily, py: Option<&ProbTable>, kind: MeasureKind, tol: f64) -> Result<SimpsonReport> {
    let n = names(slices)?;
    let pj = pseudo_joint(slices, &n)?;
    let cond = measure(kind, &pj, &n.x, &n.z, Some(&n.y), tol)?;
    let mut warnings = Vec::new();
    let mut slice_signs = Vec::new();
    let mut slice_values = Vec::new();
    for (g, row) in slices.rows().iter().enumerate() {
        let vals = cond.oriented_slice(g);
        if row.is_none() {
            warnings.push(format!("slice {} = {} has no mass and is excluded", n.y, slices.given()[0].labels()[g]));
            slice_signs.push(None);
        } else {
            slice_signs.push(Some(crate::sign::classify_sign(&vals, tol)?.sign));
        }
        slice_values.push(vals);
    }
    let (marginal_sign, marginal_values) = match py {
        Some(py) => {
            let joint = mix(slices, py, &n)?;
            let m = measure(kind, &joint, &n.x, &n.z, None, tol)?;
            (Some(m.sign), Some(m.oriented()))
        }
        None => (None, None),
    };
    let defined: Vec<AssocSign> = slice_signs.iter().flatten().copied().collect();
    let reversal = !defined.is_empty()
        && match marginal_sign {
            Some(AssocSign::Negative) => defined.iter().all(|s| *s == AssocSign::Positive),
            Some(AssocSign::Positive) => defined.iter().all(|s| *s == AssocSign::Negative),
            _ => false,
        };
    let certificate = simpson_certificate(slices, kind, tol)?;
    Ok(SimpsonReport {
        measure: kind,
        driver: n.x,
        response: n.z,
        stratifier: n.y,
        slice_signs,
        slice_values,
        marginal_sign,
        marginal_values,
        reversal,
        certificate,
        warnings,
    })
}

/// [`detect_simpson`] on a full joint with axes `(X, Y, Z)`.
pub fn detect_simpson_joint(p: &ProbTable, kind: MeasureKind, tol: f64) -> Result<SimpsonReport> {
    let nm = p.names();
    if nm.len() != 3 {
        return Err(Error::Invalid(format!("expected a table over (X, Y, Z), got {} variables", nm.len())));
    }
    let (x, y, z) = (nm[0], nm[1], nm[2]);
    let slices = p.condition(&[x, z], &[y])?;
    let py = p.marginal(&[y])?;
    detect_simpson(&slices, Some(&py), kind, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Variable;
    use crate::fixtures;
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    #[test]
    fn smoke_reverses() {
        let r = detect_simpson_joint(&fixtures::smoke(), MeasureKind::Density, TOL).unwrap();
        assert!(r.slice_signs.iter().all(|s| *s == Some(AssocSign::Positive)));
        assert_eq!(r.marginal_sign, Some(AssocSign::Negative));
        assert!(r.reversal);
        assert!(!r.certificate.issued);
        let ors: Vec<f64> = r.slice_values.iter().map(|v| v[0].unwrap().exp()).collect();
        assert!((ors[3] - 42.0 * 28.0 / (105.0 * 7.0)).abs() < 1e-12);
    }

    #[test]
    fn birch_has_no_reversal() {
        let r = detect_simpson_joint(&fixtures::birch(), MeasureKind::Density, TOL).unwrap();
        assert!(r.slice_signs.iter().all(|s| *s == Some(AssocSign::Zero)));
        assert_eq!(r.marginal_sign, Some(AssocSign::Zero));
        assert!(!r.reversal);
    }

    fn identical_slices(row: Vec<f64>, k: usize) -> CondFamily {
        let target = vec![Variable::indexed("X", 2), Variable::indexed("Z", 2)];
        CondFamily::new(target, vec![Variable::indexed("Y", k)], vec![Some(row); k]).unwrap()
    }

    #[test]
    fn identical_slices_are_certified() {
        let s = identical_slices(vec![0.4, 0.1, 0.2, 0.3], 3);
        let py = ProbTable::new(vec![Variable::indexed("Y", 3)], vec![0.7, 0.2, 0.1]).unwrap();
        let r = detect_simpson(&s, Some(&py), MeasureKind::Density, TOL).unwrap();
        let m = r.marginal_values.as_ref().unwrap()[0].unwrap();
        assert!((m - r.slice_values[0][0].unwrap()).abs() < 1e-12);
        assert!(!r.reversal);
        assert!(r.certificate.issued, "{:?}", r.certificate);
        assert_eq!(r.certificate.direction, Some(AssocSign::Positive));
    }

    #[test]
    fn empty_slice_is_warned() {
        let target = vec![Variable::indexed("X", 2), Variable::indexed("Z", 2)];
        let rows = vec![Some(vec![0.4, 0.1, 0.2, 0.3]), None];
        let s = CondFamily::new(target, vec![Variable::indexed("Y", 2)], rows).unwrap();
        let r = detect_simpson(&s, None, MeasureKind::Density, TOL).unwrap();
        assert_eq!(r.slice_signs[1], None);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.marginal_sign, None);
    }

    fn random_slices(ws: Vec<f64>) -> CondFamily {
        let rows: Vec<Vec<f64>> = ws.chunks(6).map(|c| c.to_vec()).collect();
        let k = rows.len();
        let target = vec![Variable::indexed("X", 2), Variable::indexed("Z", 3)];
        CondFamily::new(
            target,
            vec![Variable::indexed("Y", k)],
            rows.into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    Some(r.into_iter().map(|v| v / s).collect())
                })
                .collect(),
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn certificate_blocks_reversal(ws in prop::collection::vec(0.05f64..1.0, 18), pys in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 20)) {
            let s = random_slices(ws);
            let cert = simpson_certificate(&s, MeasureKind::Expectation, TOL).unwrap();
            if cert.issued {
                for w in pys {
                    let py = ProbTable::from_weights(vec![Variable::indexed("Y", 3)], w).unwrap();
                    let r = detect_simpson(&s, Some(&py), MeasureKind::Expectation, TOL).unwrap();
                    prop_assert!(!r.reversal);
                }
            }
        }
    }
}
