//! Rule checkers on concrete three-way tables with axes `(X, Y, Z)`.

use nalgebra::{DMatrix, DVector};

use super::{Check, CheckStatus, Conclusion, Outcome, RuleId, TheoremVerdict};
use crate::dist::{check_ci, check_independent, ProbTable};
use crate::error::{Error, Result};
use crate::measures::{density_assoc, distribution_assoc, expectation_assoc, measure, MeasureKind, MeasureReport};
use crate::sign::{classify_sign, grid_satisfies, AssocSign};

/// Any defined entry below `-tol` fails; otherwise any undefined entry leaves
/// the check undetermined.
pub fn nonneg_status(oriented: &[Option<f64>], tol: f64) -> CheckStatus {
    if oriented.iter().flatten().any(|v| *v < -tol) {
        CheckStatus::Fails
    } else if oriented.iter().any(Option::is_none) {
        CheckStatus::Undefined
    } else {
        CheckStatus::Holds
    }
}

fn flag(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Holds
    } else {
        CheckStatus::Fails
    }
}

pub(crate) fn sign_check(name: impl Into<String>, r: &MeasureReport, required: bool) -> Check {
    Check {
        name: name.into(),
        measure: Some(r.kind),
        observed: Some(r.sign),
        status: nonneg_status(&r.oriented(), r.tol),
        required,
        detail: r.diagnostic.clone(),
        values: Some(r.oriented()),
    }
}

fn bool_check(name: impl Into<String>, status: CheckStatus, required: bool, detail: Option<String>) -> Check {
    Check { name: name.into(), measure: None, observed: None, status, required, detail, values: None }
}

fn strict(r: &MeasureReport) -> bool {
    r.sign == AssocSign::Positive
}

/// Axis names of a three-way table.
struct Chain<'a> {
    p: &'a ProbTable,
    x: String,
    y: String,
    z: String,
    tol: f64,
}

impl<'a> Chain<'a> {
    fn new(p: &'a ProbTable, tol: f64) -> Result<Self> {
        let n = p.names();
        if n.len() != 3 {
            return Err(Error::Invalid(format!("rule checkers need a table over (X, Y, Z), got {} variables", n.len())));
        }
        Ok(Self { p, x: n[0].into(), y: n[1].into(), z: n[2].into(), tol })
    }

    fn ci(&self) -> Result<Check> {
        let ok = check_ci(self.p, &self.x, &self.z, &self.y, self.tol)?;
        Ok(bool_check(format!("{} ⊥ {} | {}", self.x, self.z, self.y), flag(ok), true, None))
    }

    fn conclude(&self, kind: MeasureKind, sign: AssocSign) -> Result<Conclusion> {
        let r = measure(kind, self.p, &self.x, &self.z, None, self.tol)?;
        let grid = r.oriented();
        Ok(Conclusion {
            measure: kind,
            driver: self.x.clone(),
            response: self.z.clone(),
            sign,
            observed: Some(r.sign),
            holds: Some(grid_satisfies(&grid, sign, self.tol)),
            grid: Some(grid),
        })
    }
}

/// Conclusion sign for the CI rules: a Zero premise forces independence,
/// otherwise strictness needs aligned witnesses.
fn ci_sign(a: &MeasureReport, b: &MeasureReport, aligned: bool) -> AssocSign {
    if a.sign == AssocSign::Zero || b.sign == AssocSign::Zero {
        AssocSign::Zero
    } else if aligned {
        AssocSign::Positive
    } else {
        AssocSign::NonNegative
    }
}

pub fn check_t1(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let xy = density_assoc(p, &c.x, &c.y, None, tol)?;
    let yz = density_assoc(p, &c.y, &c.z, None, tol)?;
    let checks = vec![
        c.ci()?,
        sign_check(format!("(1) density({},{}) >= 0", c.x, c.y), &xy, true),
        sign_check(format!("(2) density({},{}) >= 0", c.y, c.z), &yz, true),
    ];
    let mut v = TheoremVerdict::assemble(RuleId::T1, checks, Vec::new());
    if v.fires {
        let sign = ci_sign(&xy, &yz, strict(&xy) && strict(&yz));
        if sign == AssocSign::Positive {
            v.justification.push("both premise grids carry a strict entry; discrete tables then give a strict conclusion".into());
        }
        v.conclusions.push(c.conclude(MeasureKind::Density, sign)?);
    }
    Ok(v)
}

/// Does some `(i, j)` strict in `a` (row-major `[_, w]`) meet some strict
/// entry in row `j` of `b` (row-major `[w, bw]`)?
fn aligned(a: &[Option<f64>], w: usize, b: &[Option<f64>], bw: usize, tol: f64) -> bool {
    if w == 0 || bw == 0 {
        return false;
    }
    a.iter().enumerate().any(|(idx, v)| {
        let j = idx % w;
        v.is_some_and(|v| v > tol) && b[j * bw..(j + 1) * bw].iter().flatten().any(|u| *u > tol)
    })
}

pub fn check_t2(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let xy = distribution_assoc(p, &c.y, &c.x, None, tol)?;
    let yz = distribution_assoc(p, &c.z, &c.y, None, tol)?;
    let checks = vec![
        c.ci()?,
        sign_check(format!("(1) dF({}|{})/d{} <= 0", c.y, c.x, c.x), &xy, true),
        sign_check(format!("(2) dF({}|{})/d{} <= 0", c.z, c.y, c.y), &yz, true),
    ];
    let mut v = TheoremVerdict::assemble(RuleId::T2, checks, Vec::new());
    if v.fires {
        let ky1 = p.dims()[1] - 1;
        let kz1 = p.dims()[2] - 1;
        let sign = ci_sign(&xy, &yz, aligned(&xy.oriented(), ky1, &yz.oriented(), kz1, tol));
        v.conclusions.push(c.conclude(MeasureKind::Distribution, sign)?);
    }
    Ok(v)
}

pub fn check_t3(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let xy = distribution_assoc(p, &c.y, &c.x, None, tol)?;
    let yz = expectation_assoc(p, &c.z, &c.y, None, tol)?;
    let checks = vec![
        c.ci()?,
        sign_check(format!("(1) dF({}|{})/d{} <= 0", c.y, c.x, c.x), &xy, true),
        sign_check(format!("(2) dE({}|{})/d{} >= 0", c.z, c.y, c.y), &yz, true),
    ];
    let mut v = TheoremVerdict::assemble(RuleId::T3, checks, Vec::new());
    if v.fires {
        let ky1 = p.dims()[1] - 1;
        let sign = ci_sign(&xy, &yz, aligned(&xy.oriented(), ky1, &yz.oriented(), 1, tol));
        v.conclusions.push(c.conclude(MeasureKind::Expectation, sign)?);
    }
    Ok(v)
}

/// `E(response | driver level)` for each driver level with positive mass.
fn conditional_means(p: &ProbTable, response: &str, driver: &str) -> Result<Vec<Option<f64>>> {
    let scores = p.var(response)?.scores().to_vec();
    let fam = p.condition(&[response], &[driver])?;
    Ok(fam
        .rows()
        .iter()
        .map(|r| r.as_ref().map(|r| r.iter().zip(&scores).map(|(q, s)| q * s).sum()))
        .collect())
}

/// Least-squares line through `(x, y)` points; `None` with fewer than two points.
fn fit_line(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let resid = pts.iter().map(|p| (p.1 - alpha - beta * p.0).abs()).fold(0.0, f64::max);
    Some((alpha, beta, resid))
}

pub fn check_c1_linear(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let ys = p.var(&c.y)?.scores().to_vec();
    let means = conditional_means(p, &c.z, &c.y)?;
    let pts: Vec<(f64, f64)> = ys.iter().zip(&means).filter_map(|(s, m)| m.map(|m| (*s, m))).collect();
    let line = fit_line(&pts);
    let (lin_status, detail) = match line {
        None => (CheckStatus::Undefined, "fewer than two levels of Y with positive mass".to_string()),
        Some((a, b, r)) if r <= tol => (CheckStatus::Holds, format!("E(Z|y) = {a:.6} + {b:.6} y")),
        Some((_, _, r)) => (CheckStatus::Fails, format!("max residual {r:.3e} exceeds tolerance")),
    };
    let checks = vec![c.ci()?, bool_check(format!("E({}|{}) linear in {} scores", c.z, c.y, c.y), lin_status, true, Some(detail))];
    let mut v = TheoremVerdict::assemble(RuleId::C1, checks, Vec::new());
    if lin_status == CheckStatus::Fails {
        // nonlinearity makes the rule inapplicable rather than refuted
        v.outcome = Outcome::NotApplicable;
        v.justification.push("E(Z|y) is not linear; expectation signs do not transfer".into());
    }
    if v.fires {
        let (_, beta, _) = line.expect("linearity holds");
        let ey = expectation_assoc(p, &c.y, &c.x, None, tol)?;
        let ez = expectation_assoc(p, &c.z, &c.x, None, tol)?;
        let beta_sign = classify_sign(&[Some(beta)], tol)?.sign;
        let sign = beta_sign.compose(ey.sign).unwrap_or(AssocSign::Mixed);
        let identity = ez.grid.iter().zip(&ey.grid).all(|(z, y)| match (z, y) {
            (Some(z), Some(y)) => (z - beta * y).abs() <= tol,
            _ => true,
        });
        let mut concl = c.conclude(MeasureKind::Expectation, sign)?;
        concl.holds = concl.holds.map(|h| h && identity);
        v.justification.push(format!("dE(Z|x)/dx = {beta:.6} * dE(Y|x)/dx entry-wise: {}", if identity { "verified" } else { "VIOLATED" }));
        v.conclusions.push(concl);
    }
    Ok(v)
}

/// Second difference of `ln f(z | x, y)` over adjacent `(x, y)` pairs, for
/// every `z`. Layout `[kx-1][ky-1][kz]`; zero cells leave entries undefined.
pub fn interaction_grid(p: &ProbTable, x: &str, y: &str, z: &str) -> Result<Vec<Option<f64>>> {
    let m = p.marginal(&[x, y, z])?;
    let d = m.dims();
    let (kx, ky, kz) = (d[0], d[1], d[2]);
    let cell = |i: usize, j: usize, k: usize| m.probs()[(i * ky + j) * kz + k];
    let log_cond = |i: usize, j: usize, k: usize| -> Option<f64> {
        let c = cell(i, j, k);
        let mass: f64 = (0..kz).map(|k| cell(i, j, k)).sum();
        (c > 0.0).then(|| c.ln() - mass.ln())
    };
    let mut grid = Vec::with_capacity((kx - 1) * (ky - 1) * kz);
    for i in 0..kx - 1 {
        for j in 0..ky - 1 {
            for k in 0..kz {
                let v = (|| Some(log_cond(i + 1, j + 1, k)? - log_cond(i + 1, j, k)? - log_cond(i, j + 1, k)? + log_cond(i, j, k)?))();
                grid.push(v);
            }
        }
    }
    Ok(grid)
}

fn density_no_ci_checks(c: &Chain, with_interaction: bool) -> Result<Vec<Check>> {
    let (p, tol) = (c.p, c.tol);
    let assumption = density_assoc(p, &c.x, &c.z, Some(&c.y), tol)?;
    let xy = density_assoc(p, &c.x, &c.y, None, tol)?;
    let yz_x = density_assoc(p, &c.y, &c.z, Some(&c.x), tol)?;
    let mut checks = vec![
        sign_check(format!("assumption: density({},{} | {}) >= 0", c.x, c.z, c.y), &assumption, true),
        sign_check(format!("(1) density({},{}) >= 0", c.x, c.y), &xy, true),
        sign_check(format!("(2) density({},{} | {}) >= 0", c.y, c.z, c.x), &yz_x, true),
    ];
    let inter = interaction_grid(p, &c.x, &c.y, &c.z)?;
    let observed = if inter.is_empty() { None } else { Some(classify_sign(&inter, tol)?.sign) };
    checks.push(Check {
        name: format!("(3) d2 ln f({}|{},{}) / d{} d{} >= 0 for every {}", c.z, c.x, c.y, c.x, c.y, c.z),
        measure: None,
        observed,
        status: nonneg_status(&inter, tol),
        required: with_interaction,
        detail: (!with_interaction).then(|| "not required: X or Z is binary".into()),
        values: Some(inter),
    });
    Ok(checks)
}

pub fn check_t5(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let checks = density_no_ci_checks(&c, true)?;
    let mut v = TheoremVerdict::assemble(RuleId::T5, checks, Vec::new());
    if p.var(&c.x)?.is_binary() || p.var(&c.z)?.is_binary() {
        v.justification.push("X or Z is binary: condition (3) is redundant (see C6)".into());
    }
    if v.fires {
        v.conclusions.push(c.conclude(MeasureKind::Density, AssocSign::NonNegative)?);
    }
    Ok(v)
}

pub fn check_c6(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let binary = p.var(&c.x)?.is_binary() || p.var(&c.z)?.is_binary();
    let mut checks = vec![bool_check(format!("{} or {} binary", c.x, c.z), flag(binary), true, None)];
    checks.extend(density_no_ci_checks(&c, false)?);
    let mut v = TheoremVerdict::assemble(RuleId::C6, checks, Vec::new());
    if !binary {
        v.outcome = Outcome::NotApplicable;
        v.justification.push("neither X nor Z is binary; use T5 with condition (3)".into());
    }
    if v.fires {
        v.conclusions.push(c.conclude(MeasureKind::Density, AssocSign::NonNegative)?);
    }
    Ok(v)
}

/// Zero when the assumption is null and either condition is null, else NonNegative.
fn no_ci_sign(assumption: &MeasureReport, c1: &MeasureReport, c2: &MeasureReport) -> AssocSign {
    let zero = |r: &MeasureReport| r.sign == AssocSign::Zero;
    if zero(assumption) && (zero(c1) || zero(c2)) {
        AssocSign::Zero
    } else {
        AssocSign::NonNegative
    }
}

pub fn check_t6(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let a = distribution_assoc(p, &c.z, &c.x, Some(&c.y), tol)?;
    let c1 = distribution_assoc(p, &c.y, &c.x, None, tol)?;
    let c2 = distribution_assoc(p, &c.z, &c.y, Some(&c.x), tol)?;
    let checks = vec![
        sign_check(format!("assumption: dF({}|{},{})/d{} <= 0", c.z, c.y, c.x, c.x), &a, true),
        sign_check(format!("(1) dF({}|{})/d{} <= 0", c.y, c.x, c.x), &c1, true),
        sign_check(format!("(2) dF({}|{},{})/d{} <= 0", c.z, c.y, c.x, c.y), &c2, true),
    ];
    let mut v = TheoremVerdict::assemble(RuleId::T6, checks, Vec::new());
    if v.fires {
        v.conclusions.push(c.conclude(MeasureKind::Distribution, no_ci_sign(&a, &c1, &c2))?);
    }
    Ok(v)
}

fn t7_parts(c: &Chain) -> Result<(Vec<Check>, AssocSign)> {
    let (p, tol) = (c.p, c.tol);
    let a = expectation_assoc(p, &c.z, &c.x, Some(&c.y), tol)?;
    let c1 = distribution_assoc(p, &c.y, &c.x, None, tol)?;
    let c2 = expectation_assoc(p, &c.z, &c.y, Some(&c.x), tol)?;
    let checks = vec![
        sign_check(format!("assumption: dE({}|{},{})/d{} >= 0", c.z, c.y, c.x, c.x), &a, true),
        sign_check(format!("(1) dF({}|{})/d{} <= 0", c.y, c.x, c.x), &c1, true),
        sign_check(format!("(2) dE({}|{},{})/d{} >= 0", c.z, c.y, c.x, c.y), &c2, true),
    ];
    Ok((checks, no_ci_sign(&a, &c1, &c2)))
}

pub fn check_t7(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let (checks, sign) = t7_parts(&c)?;
    let mut v = TheoremVerdict::assemble(RuleId::T7, checks, Vec::new());
    if v.fires {
        v.conclusions.push(c.conclude(MeasureKind::Expectation, sign)?);
    }
    Ok(v)
}

/// Whether `Z | X` is a one-parameter exponential family in the `Z` scores:
/// `ln f(z|x) - ln f(z|x0)` must be affine in the score of `z`.
pub fn exponential_family_status(p: &ProbTable, response: &str, driver: &str, tol: f64) -> Result<CheckStatus> {
    let scores = p.var(response)?.scores().to_vec();
    let fam = p.condition(&[response], &[driver])?;
    let rows: Vec<&[f64]> = match fam.rows().iter().map(|r| r.as_deref()).collect::<Option<Vec<_>>>() {
        Some(r) => r,
        None => return Ok(CheckStatus::Undefined),
    };
    if rows.iter().any(|r| r.iter().any(|q| *q <= 0.0)) {
        return Ok(CheckStatus::Undefined);
    }
    if scores.len() <= 2 {
        return Ok(CheckStatus::Holds);
    }
    let slack = tol.max(1e-10);
    for r in &rows[1..] {
        let d: Vec<f64> = r.iter().zip(rows[0]).map(|(a, b)| a.ln() - b.ln()).collect();
        let slope = (d[1] - d[0]) / (scores[1] - scores[0]);
        for k in 2..scores.len() {
            let pred = d[0] + slope * (scores[k] - scores[0]);
            if (d[k] - pred).abs() > slack * (1.0 + d[k].abs()) {
                return Ok(CheckStatus::Fails);
            }
        }
    }
    Ok(CheckStatus::Holds)
}

pub fn check_t8(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let (mut checks, sign) = t7_parts(&c)?;
    let fam = exponential_family_status(p, &c.z, &c.x, tol)?;
    checks.insert(0, bool_check(format!("{} | {} exponential family", c.z, c.x), fam, true, None));
    let mut v = TheoremVerdict::assemble(RuleId::T8, checks, Vec::new());
    if fam == CheckStatus::Fails {
        v.justification.push("Z | X is not an exponential family; only the T7 expectation conclusion applies".into());
    }
    if v.fires {
        v.conclusions.push(c.conclude(MeasureKind::Density, sign)?);
        v.conclusions.push(c.conclude(MeasureKind::Expectation, sign)?);
    }
    Ok(v)
}

/// Randomized intermediate. Sub-rule (1) is restricted to binary `Z`: with
/// binary `X` and three or more `Z` levels a mixture over `Y` of
/// likelihood-ratio-ordered slices need not stay ordered.
pub fn check_c5_randomized(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let indep = check_independent(p, &c.x, &c.y, tol)?;
    let z_binary = p.var(&c.z)?.is_binary();
    let x_binary = p.var(&c.x)?.is_binary();
    let dens = density_assoc(p, &c.x, &c.z, Some(&c.y), tol)?;
    let dist = distribution_assoc(p, &c.z, &c.x, Some(&c.y), tol)?;
    let exp = expectation_assoc(p, &c.z, &c.x, Some(&c.y), tol)?;

    let mut sub1 = sign_check(format!("(1) binary {} and density({},{} | {}) >= 0", c.z, c.x, c.z, c.y), &dens, false);
    if !z_binary {
        sub1.status = CheckStatus::Fails;
        sub1.detail = Some(format!("{} is not binary", c.z));
    }
    let sub2 = sign_check(format!("(2) dF({}|{},{})/d{} <= 0", c.z, c.y, c.x, c.x), &dist, false);
    let sub3 = sign_check(format!("(3) dE({}|{},{})/d{} >= 0", c.z, c.y, c.x, c.x), &exp, false);
    let subs = [&sub1, &sub2, &sub3];
    let any = if subs.iter().any(|s| s.satisfied()) {
        CheckStatus::Holds
    } else if subs.iter().any(|s| s.status == CheckStatus::Undefined) {
        CheckStatus::Undefined
    } else {
        CheckStatus::Fails
    };
    let holds = [sub1.satisfied(), sub2.satisfied(), sub3.satisfied()];
    let checks = vec![
        bool_check(format!("{} ⊥ {}", c.x, c.y), flag(indep), true, None),
        bool_check("some simplified premise holds", any, true, None),
        sub1,
        sub2,
        sub3,
    ];
    let mut v = TheoremVerdict::assemble(RuleId::C5, checks, Vec::new());
    if !indep {
        v.outcome = Outcome::NotApplicable;
        v.fires = false;
        v.justification.push(format!("{} and {} are dependent; the randomized-intermediate rule does not apply", c.x, c.y));
    }
    if x_binary && !z_binary {
        v.justification.push("binary X alone does not make the conditional density premise sufficient".into());
    }
    if v.fires {
        let zero_or = |r: &MeasureReport| if r.sign == AssocSign::Zero { AssocSign::Zero } else { AssocSign::NonNegative };
        for (ok, kind, r) in [(holds[0], MeasureKind::Density, &dens), (holds[1], MeasureKind::Distribution, &dist), (holds[2], MeasureKind::Expectation, &exp)] {
            if ok {
                v.conclusions.push(c.conclude(kind, zero_or(r))?);
            }
        }
    }
    Ok(v)
}

/// Linear path rule on a table: `E(Z|x,y)` affine in `(x, y)` and `E(Y|x)`
/// affine in `x`, both exactly (within `tol`), fitted with cell weights.
pub fn check_c4_linear(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let c = Chain::new(p, tol)?;
    let xs = p.var(&c.x)?.scores().to_vec();
    let ys = p.var(&c.y)?.scores().to_vec();
    let pxy = p.marginal(&[&c.x, &c.y])?;
    let zxy = p.condition(&[&c.z], &[&c.x, &c.y])?;
    let zs = p.var(&c.z)?.scores().to_vec();
    let ky = ys.len();
    let mut rows = Vec::new();
    for (cell, w) in pxy.probs().iter().enumerate() {
        if let Some(r) = zxy.row(cell).filter(|_| *w > 0.0) {
            let m: f64 = r.iter().zip(&zs).map(|(q, s)| q * s).sum();
            rows.push((xs[cell / ky], ys[cell % ky], m, *w));
        }
    }
    let fit = weighted_affine(&rows);
    let ymeans = conditional_means(p, &c.y, &c.x)?;
    let pts: Vec<(f64, f64)> = xs.iter().zip(&ymeans).filter_map(|(s, m)| m.map(|m| (*s, m))).collect();
    let yline = fit_line(&pts);
    let z_on_y = expectation_assoc(p, &c.z, &c.y, None, tol)?;

    let mut checks = Vec::new();
    let (b0, b1, b2) = match fit {
        Some((b, r)) if r <= tol => {
            checks.push(bool_check("E(Z|x,y) = b0 + b1 x + b2 y", CheckStatus::Holds, true, Some(format!("b = ({:.6}, {:.6}, {:.6})", b[0], b[1], b[2]))));
            (b[0], b[1], b[2])
        }
        Some((_, r)) => {
            checks.push(bool_check("E(Z|x,y) = b0 + b1 x + b2 y", CheckStatus::Fails, true, Some(format!("max residual {r:.3e}"))));
            (0.0, 0.0, 0.0)
        }
        None => {
            checks.push(bool_check("E(Z|x,y) = b0 + b1 x + b2 y", CheckStatus::Undefined, true, Some("rank-deficient design".into())));
            (0.0, 0.0, 0.0)
        }
    };
    let _ = b0;
    let b4 = match yline {
        Some((_, b, r)) if r <= tol => {
            checks.push(bool_check("E(Y|x) = b3 + b4 x", CheckStatus::Holds, true, Some(format!("b4 = {b:.6}"))));
            b
        }
        _ => {
            checks.push(bool_check("E(Y|x) = b3 + b4 x", CheckStatus::Fails, true, None));
            0.0
        }
    };
    let linear = checks.iter().all(Check::satisfied);
    checks.push(bool_check("b1 >= 0", flag(b1 >= -tol), true, None));
    checks.push(bool_check("b4 >= 0", flag(b4 >= -tol), true, None));
    let route1 = b2 >= -tol;
    let route2 = nonneg_status(&z_on_y.oriented(), tol);
    checks.push(bool_check("(1) b2 >= 0", flag(route1), false, None));
    let mut r2 = sign_check(format!("(2) dE({}|{})/d{} >= 0", c.z, c.y, c.y), &z_on_y, false);
    r2.status = route2;
    checks.push(r2);
    let either = if route1 || route2 == CheckStatus::Holds { CheckStatus::Holds } else { CheckStatus::Fails };
    checks.push(bool_check("route (1) or (2) holds", either, true, None));
    let mut v = TheoremVerdict::assemble(RuleId::C4, checks, Vec::new());
    if !linear {
        v.outcome = Outcome::NotApplicable;
        v.fires = false;
    }
    if v.fires {
        v.justification.push(format!("dE(Z|x)/dx = b1 + b2 b4 = {:.6}", b1 + b2 * b4));
        v.conclusions.push(c.conclude(MeasureKind::Expectation, AssocSign::NonNegative)?);
    }
    Ok(v)
}

/// Weighted least squares of `m ~ 1 + x + y`; returns coefficients and the
/// largest absolute residual.
fn weighted_affine(rows: &[(f64, f64, f64, f64)]) -> Option<([f64; 3], f64)> {
    let n = rows.len();
    let a = DMatrix::from_fn(n, 3, |i, j| {
        let w = rows[i].3.sqrt();
        w * [1.0, rows[i].0, rows[i].1][j]
    });
    let b = DVector::from_fn(n, |i, _| rows[i].3.sqrt() * rows[i].2);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return None;
    }
    let coef = svd.solve(&b, 1e-12).ok()?;
    let resid = rows.iter().map(|r| (r.2 - coef[0] - coef[1] * r.0 - coef[2] * r.1).abs()).fold(0.0, f64::max);
    Some(([coef[0], coef[1], coef[2]], resid))
}

/// Run one rule on a concrete table.
pub fn check_rule(rule: RuleId, p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    match rule {
        RuleId::T1 => check_t1(p, tol),
        RuleId::T2 => check_t2(p, tol),
        RuleId::T3 => check_t3(p, tol),
        RuleId::C1 => check_c1_linear(p, tol),
        RuleId::T5 => check_t5(p, tol),
        RuleId::T6 => check_t6(p, tol),
        RuleId::T7 => check_t7(p, tol),
        RuleId::C4 => check_c4_linear(p, tol),
        RuleId::C5 => check_c5_randomized(p, tol),
        RuleId::T8 => check_t8(p, tol),
        RuleId::C6 => check_c6(p, tol),
    }
}

/// Every rule, in declaration order.
pub fn check_all(p: &ProbTable, tol: f64) -> Result<Vec<TheoremVerdict>> {
    RuleId::ALL.iter().map(|&r| check_rule(r, p, tol)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{compose_ci, CondFamily, Variable};
    use crate::fixtures;

    const TOL: f64 = 1e-9;

    fn tp2_joint() -> ProbTable {
        let x = Variable::indexed("X", 2);
        let y = Variable::indexed("Y", 3);
        let z = Variable::indexed("Z", 2);
        let px = ProbTable::new(vec![x.clone()], vec![0.4, 0.6]).unwrap();
        let py = CondFamily::from_weight_rows(y.clone(), x, vec![vec![4.0, 2.0, 1.0], vec![1.0, 2.0, 4.0]]).unwrap();
        let pz = CondFamily::from_weight_rows(z, y, vec![vec![3.0, 1.0], vec![1.0, 1.0], vec![1.0, 3.0]]).unwrap();
        compose_ci(&px, &py, &pz).unwrap()
    }

    #[test]
    fn t1_fires_on_tp2_chain() {
        let v = check_t1(&tp2_joint(), TOL).unwrap();
        assert!(v.fires);
        assert_eq!(v.conclusions[0].sign, AssocSign::Positive);
        assert_eq!(v.conclusions[0].holds, Some(true));
    }

    #[test]
    fn t1_on_fixtures() {
        let ex2 = fixtures::ex2().joint_uniform_x().unwrap();
        let v = check_t1(&ex2, TOL).unwrap();
        assert_eq!(v.outcome, Outcome::NotApplicable);
        let v = check_t1(&fixtures::birch(), TOL).unwrap();
        assert_eq!(v.outcome, Outcome::PremisesFail);
        assert!(v.conclusions.is_empty());
    }

    #[test]
    fn t2_t3_with_independent_xy_conclude_zero() {
        let x = Variable::indexed("X", 2);
        let y = Variable::indexed("Y", 3);
        let z = Variable::indexed("Z", 2);
        let px = ProbTable::new(vec![x.clone()], vec![0.5, 0.5]).unwrap();
        let py = CondFamily::from_rows(y.clone(), x, vec![vec![0.2, 0.3, 0.5]; 2]).unwrap();
        let pz = CondFamily::from_weight_rows(z, y, vec![vec![3.0, 1.0], vec![1.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let p = compose_ci(&px, &py, &pz).unwrap();
        for v in [check_t1(&p, TOL), check_t2(&p, TOL), check_t3(&p, TOL)] {
            let v = v.unwrap();
            assert!(v.fires, "{v}");
            assert_eq!(v.conclusions[0].sign, AssocSign::Zero);
            assert_eq!(v.conclusions[0].holds, Some(true));
        }
    }

    #[test]
    fn t3_fails_on_ex1_condition_one() {
        let p = fixtures::ex1(0.3).unwrap();
        let v = check_t3(&p, TOL).unwrap();
        assert_eq!(v.outcome, Outcome::PremisesFail);
        assert_eq!(v.checks[1].status, CheckStatus::Fails);
        assert_eq!(v.checks[1].observed, Some(AssocSign::Mixed));
    }

    #[test]
    fn t2_on_ex3_reports_conditions() {
        let p = fixtures::ex3().joint_uniform_x().unwrap();
        let v = check_t2(&p, TOL).unwrap();
        assert_eq!(v.checks[1].observed, Some(AssocSign::Positive));
        assert_eq!(v.checks[2].status, CheckStatus::Fails);
    }

    #[test]
    fn c1_on_ex2_and_binary_y() {
        let ex2 = fixtures::ex2().joint_uniform_x().unwrap();
        assert_eq!(check_c1_linear(&ex2, TOL).unwrap().outcome, Outcome::NotApplicable);
        let x = Variable::indexed("X", 3);
        let y = Variable::indexed("Y", 2);
        let z = Variable::indexed("Z", 3);
        let px = ProbTable::new(vec![x.clone()], vec![0.2, 0.3, 0.5]).unwrap();
        let py = CondFamily::from_weight_rows(y.clone(), x, vec![vec![3.0, 1.0], vec![1.0, 5.0], vec![2.0, 1.0]]).unwrap();
        let pz = CondFamily::from_weight_rows(z, y, vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]).unwrap();
        let v = check_c1_linear(&compose_ci(&px, &py, &pz).unwrap(), TOL).unwrap();
        assert!(v.fires);
        assert_eq!(v.conclusions[0].holds, Some(true));
    }

    #[test]
    fn no_ci_rules_on_trans() {
        let p = fixtures::trans();
        let t7 = check_t7(&p, TOL).unwrap();
        assert_eq!(t7.outcome, Outcome::PremisesFail);
        assert_eq!(t7.checks[0].status, CheckStatus::Fails);
        let t6 = check_t6(&p, TOL).unwrap();
        assert_eq!(t6.checks[0].status, CheckStatus::Fails);
        let t5 = check_t5(&p, TOL).unwrap();
        assert_eq!(t5.checks[0].status, CheckStatus::Fails);
    }

    #[test]
    fn constant_z_gives_zero() {
        // p(x, y, z) = a(x) b(y) / 2
        let w: Vec<f64> = (0..12).map(|i| (1.0 + (i / 6) as f64) * (1.0 + (i / 2 % 3) as f64)).collect();
        let p = ProbTable::from_weights(vec![Variable::indexed("X", 2), Variable::indexed("Y", 3), Variable::indexed("Z", 2)], w).unwrap();
        let v = check_t7(&p, TOL).unwrap();
        assert!(v.fires, "{v}");
        assert_eq!(v.conclusions[0].sign, AssocSign::Zero);
    }

    #[test]
    fn c5_needs_independence() {
        let v = check_c5_randomized(&fixtures::birch(), TOL).unwrap();
        assert_eq!(v.outcome, Outcome::NotApplicable);
    }

    #[test]
    fn interaction_grid_zero_on_ci() {
        let g = interaction_grid(&tp2_joint(), "X", "Y", "Z").unwrap();
        // f(z|x,y) = f(z|y) under CI, so the x-difference vanishes
        assert!(g.iter().all(|v| v.unwrap().abs() < 1e-12));
    }

    #[test]
    fn rule_ids_parse() {
        assert_eq!("T1_DensityCI".parse::<RuleId>().unwrap(), RuleId::T1);
        assert_eq!("c5".parse::<RuleId>().unwrap(), RuleId::C5);
        assert!("T4".parse::<RuleId>().is_err());
        assert_eq!(serde_json::to_string(&RuleId::T8).unwrap(), "\"T8_ExpFamNoCI\"");
    }
}
