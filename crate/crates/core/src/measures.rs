//! The four association measures on discrete tables, as adjacent-level
//! differences, plus the implication and equivalence predicates between them.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::dist::{check_independent, ProbTable};
use crate::error::{Error, Result};
use crate::sign::{classify_sign, AssocSign, SignSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    Density,
    Distribution,
    Expectation,
    Correlation,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 4] = [Self::Density, Self::Distribution, Self::Expectation, Self::Correlation];
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Density => "density",
            Self::Distribution => "distribution",
            Self::Expectation => "expectation",
            Self::Correlation => "correlation",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "density" | "odds" => Self::Density,
            "distribution" | "cdf" => Self::Distribution,
            "expectation" | "mean" => Self::Expectation,
            "correlation" | "cov" => Self::Correlation,
            other => return Err(Error::Parse(format!("unknown measure `{other}`"))),
        })
    }
}

/// How the raw grid maps to association orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Raw,
    Negated,
}

/// Raw value grid for one measure plus its classified sign.
///
/// Grid layout is row-major over `shape`: conditioning level first (omitted
/// when unconditional), then adjacent driver pairs, then adjacent response
/// levels where the measure has them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub kind: MeasureKind,
    pub driver: String,
    pub response: String,
    pub conditioning: Vec<String>,
    pub shape: Vec<usize>,
    pub grid: Vec<Option<f64>>,
    pub orientation: Orientation,
    pub tol: f64,
    pub sign: AssocSign,
    pub witness: Option<usize>,
    pub undefined: usize,
    pub diagnostic: Option<String>,
    /// Correlation per conditioning level, when both variances exceed `tol`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Option<f64>>>,
}

impl MeasureReport {
    fn build(
        kind: MeasureKind,
        (driver, response, given): (&str, &str, Option<&str>),
        shape: Vec<usize>,
        grid: Vec<Option<f64>>,
        orientation: Orientation,
        tol: f64,
    ) -> Result<Self> {
        let mut r = Self {
            kind,
            driver: driver.to_string(),
            response: response.to_string(),
            conditioning: given.map(str::to_string).into_iter().collect(),
            shape,
            grid,
            orientation,
            tol,
            sign: AssocSign::Mixed,
            witness: None,
            undefined: 0,
            diagnostic: None,
            correlation: None,
        };
        let s = classify_sign(&r.oriented(), tol)?;
        r.diagnostic = s.diagnostic();
        r.sign = s.sign;
        r.witness = s.witness;
        r.undefined = s.undefined;
        Ok(r)
    }

    /// Grid in association orientation.
    pub fn oriented(&self) -> Vec<Option<f64>> {
        match self.orientation {
            Orientation::Raw => self.grid.clone(),
            Orientation::Negated => self.grid.iter().map(|v| v.map(|x| -x)).collect(),
        }
    }

    pub fn is_conditional(&self) -> bool {
        !self.conditioning.is_empty()
    }

    /// Number of conditioning levels (1 when unconditional).
    pub fn slices(&self) -> usize {
        if self.is_conditional() {
            self.shape[0]
        } else {
            1
        }
    }

    /// Oriented grid restricted to one conditioning level.
    pub fn oriented_slice(&self, level: usize) -> Vec<Option<f64>> {
        let width = self.grid.len() / self.slices();
        self.oriented()[level * width..(level + 1) * width].to_vec()
    }

    /// Sign of each conditioning slice separately.
    pub fn slice_signs(&self) -> Result<Vec<SignSummary>> {
        (0..self.slices()).map(|g| classify_sign(&self.oriented_slice(g), self.tol)).collect()
    }

    pub fn summary(&self) -> SignSummary {
        SignSummary { sign: self.sign, witness: self.witness, undefined: self.undefined, len: self.grid.len() }
    }
}

/// Joint cells arranged as `[slice][driver][response]`.
struct Cube {
    g: usize,
    kx: usize,
    ky: usize,
    cells: Vec<f64>,
}

impl Cube {
    fn new(p: &ProbTable, x: &str, y: &str, given: Option<&str>) -> Result<Self> {
        if x == y || given == Some(x) || given == Some(y) {
            return Err(Error::Invalid("measure variables must be distinct".into()));
        }
        let keep: Vec<&str> = given.into_iter().chain([x, y]).collect();
        let m = p.marginal(&keep)?;
        let d = m.dims();
        let (g, kx, ky) = match d[..] {
            [g, kx, ky] => (g, kx, ky),
            [kx, ky] => (1, kx, ky),
            _ => unreachable!(),
        };
        Ok(Self { g, kx, ky, cells: m.probs().to_vec() })
    }

    fn at(&self, s: usize, i: usize, j: usize) -> f64 {
        self.cells[(s * self.kx + i) * self.ky + j]
    }

    fn row_mass(&self, s: usize, i: usize) -> f64 {
        (0..self.ky).map(|j| self.at(s, i, j)).sum()
    }

    fn shape(&self, given: Option<&str>, tail: &[usize]) -> Vec<usize> {
        given.map(|_| self.g).into_iter().chain(tail.iter().copied()).collect()
    }
}

/// Adjacent log odds ratios `ln[f(i+1,j+1) f(i,j) / (f(i+1,j) f(i,j+1))]`.
/// Any zero cell leaves the entry undefined.
pub fn density_assoc(p: &ProbTable, x: &str, y: &str, given: Option<&str>, tol: f64) -> Result<MeasureReport> {
    let c = Cube::new(p, x, y, given)?;
    let mut grid = Vec::with_capacity(c.g * (c.kx - 1) * (c.ky - 1));
    for s in 0..c.g {
        for i in 0..c.kx.saturating_sub(1) {
            for j in 0..c.ky.saturating_sub(1) {
                let q = [c.at(s, i + 1, j + 1), c.at(s, i, j), c.at(s, i + 1, j), c.at(s, i, j + 1)];
                grid.push(q.iter().all(|v| *v > 0.0).then(|| q[0].ln() + q[1].ln() - q[2].ln() - q[3].ln()));
            }
        }
    }
    let shape = c.shape(given, &[c.kx - 1, c.ky - 1]);
    MeasureReport::build(MeasureKind::Density, (x, y, given), shape, grid, Orientation::Raw, tol)
}

/// Log odds ratio between arbitrary (not necessarily adjacent) level pairs of
/// a two-way margin.
pub fn log_odds_ratio(p: &ProbTable, x: &str, y: &str, (i0, i1): (usize, usize), (j0, j1): (usize, usize)) -> Result<Option<f64>> {
    let c = Cube::new(p, x, y, None)?;
    if i0.max(i1) >= c.kx || j0.max(j1) >= c.ky {
        return Err(Error::Invalid("level index out of range".into()));
    }
    let q = [c.at(0, i1, j1), c.at(0, i0, j0), c.at(0, i1, j0), c.at(0, i0, j1)];
    Ok(q.iter().all(|v| *v > 0.0).then(|| q[0].ln() + q[1].ln() - q[2].ln() - q[3].ln()))
}

/// `F(y_j | x_{i+1}) - F(y_j | x_i)` for every response level but the last.
/// Negated for classification: a raw grid `<= 0` is a positive association.
pub fn distribution_assoc(p: &ProbTable, response: &str, driver: &str, given: Option<&str>, tol: f64) -> Result<MeasureReport> {
    let c = Cube::new(p, driver, response, given)?;
    let cdf = |s: usize, i: usize| -> Option<Vec<f64>> {
        let m = c.row_mass(s, i);
        (m > 0.0).then(|| {
            let mut acc = 0.0;
            (0..c.ky - 1)
                .map(|j| {
                    acc += c.at(s, i, j);
                    acc / m
                })
                .collect()
        })
    };
    let mut grid = Vec::with_capacity(c.g * (c.kx - 1) * (c.ky - 1));
    for s in 0..c.g {
        let rows: Vec<Option<Vec<f64>>> = (0..c.kx).map(|i| cdf(s, i)).collect();
        for w in rows.windows(2) {
            match (&w[0], &w[1]) {
                (Some(lo), Some(hi)) => grid.extend(hi.iter().zip(lo).map(|(h, l)| Some(h - l))),
                _ => grid.extend(std::iter::repeat_n(None, c.ky - 1)),
            }
        }
    }
    let shape = c.shape(given, &[c.kx - 1, c.ky - 1]);
    MeasureReport::build(MeasureKind::Distribution, (driver, response, given), shape, grid, Orientation::Negated, tol)
}

fn conditional_means(c: &Cube, s: usize, scores: &[f64]) -> Vec<Option<f64>> {
    (0..c.kx)
        .map(|i| {
            let m = c.row_mass(s, i);
            (m > 0.0).then(|| (0..c.ky).map(|j| c.at(s, i, j) * scores[j]).sum::<f64>() / m)
        })
        .collect()
}

/// `E(Y | x_{i+1}) - E(Y | x_i)` using the response scores.
pub fn expectation_assoc(p: &ProbTable, response: &str, driver: &str, given: Option<&str>, tol: f64) -> Result<MeasureReport> {
    let c = Cube::new(p, driver, response, given)?;
    let scores = p.var(response)?.scores();
    let mut grid = Vec::with_capacity(c.g * (c.kx - 1));
    for s in 0..c.g {
        let means = conditional_means(&c, s, scores);
        grid.extend(means.windows(2).map(|w| Some(w[1]? - w[0]?)));
    }
    let shape = c.shape(given, &[c.kx - 1]);
    MeasureReport::build(MeasureKind::Expectation, (driver, response, given), shape, grid, Orientation::Raw, tol)
}

/// Covariance of the scores (per conditioning level), with the correlation
/// reported where both variances exceed `tol`. The sign follows the covariance.
pub fn correlation(p: &ProbTable, x: &str, y: &str, given: Option<&str>, tol: f64) -> Result<MeasureReport> {
    let c = Cube::new(p, x, y, given)?;
    let sx = p.var(x)?.scores();
    let sy = p.var(y)?.scores();
    let mut cov = Vec::with_capacity(c.g);
    let mut cor = Vec::with_capacity(c.g);
    for s in 0..c.g {
        let mass: f64 = (0..c.kx).map(|i| c.row_mass(s, i)).sum();
        if mass <= 0.0 {
            cov.push(None);
            cor.push(None);
            continue;
        }
        let (mut ex, mut ey, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..c.kx {
            for j in 0..c.ky {
                let w = c.at(s, i, j) / mass;
                ex += w * sx[i];
                ey += w * sy[j];
                exx += w * sx[i] * sx[i];
                eyy += w * sy[j] * sy[j];
                exy += w * sx[i] * sy[j];
            }
        }
        let (vx, vy, cxy) = (exx - ex * ex, eyy - ey * ey, exy - ex * ey);
        cov.push(Some(cxy));
        cor.push((vx > tol && vy > tol).then(|| cxy / (vx * vy).sqrt()));
    }
    let shape = c.shape(given, &[]);
    let shape = if shape.is_empty() { vec![1] } else { shape };
    let mut r = MeasureReport::build(MeasureKind::Correlation, (x, y, given), shape, cov, Orientation::Raw, tol)?;
    r.correlation = Some(cor);
    Ok(r)
}

/// Dispatch on the measure kind with `driver -> response` roles.
pub fn measure(kind: MeasureKind, p: &ProbTable, driver: &str, response: &str, given: Option<&str>, tol: f64) -> Result<MeasureReport> {
    match kind {
        MeasureKind::Density => density_assoc(p, driver, response, given, tol),
        MeasureKind::Distribution => distribution_assoc(p, response, driver, given, tol),
        MeasureKind::Expectation => expectation_assoc(p, response, driver, given, tol),
        MeasureKind::Correlation => correlation(p, driver, response, given, tol),
    }
}

/// All four measures for a pair.
pub fn all_measures(p: &ProbTable, driver: &str, response: &str, given: Option<&str>, tol: f64) -> Result<Vec<MeasureReport>> {
    MeasureKind::ALL.iter().map(|&k| measure(k, p, driver, response, given, tol)).collect()
}

/// Outcome of one implication or equivalence predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub applicable: bool,
    pub holds: bool,
    pub signs: Vec<(MeasureKind, AssocSign)>,
}

fn nonneg(s: AssocSign) -> bool {
    matches!(s, AssocSign::Positive | AssocSign::NonNegative | AssocSign::Zero)
}

/// Density >= 0 (fully defined) => distribution >= 0 => expectation >= 0 =>
/// covariance >= -tol, for `y` on `x`.
pub fn property_chain(p: &ProbTable, x: &str, y: &str, tol: f64) -> Result<PropertyCheck> {
    let d = density_assoc(p, x, y, None, tol)?;
    let f = distribution_assoc(p, y, x, None, tol)?;
    let e = expectation_assoc(p, y, x, None, tol)?;
    let c = correlation(p, x, y, None, tol)?;
    let mut holds = true;
    if nonneg(d.sign) && d.undefined == 0 && !nonneg(f.sign) {
        holds = false;
    }
    if nonneg(f.sign) && f.undefined == 0 && !nonneg(e.sign) {
        holds = false;
    }
    if nonneg(e.sign) && e.undefined == 0 && !nonneg(c.sign) {
        holds = false;
    }
    Ok(PropertyCheck {
        name: "implication chain",
        applicable: true,
        holds,
        signs: vec![(d.kind, d.sign), (f.kind, f.sign), (e.kind, e.sign), (c.kind, c.sign)],
    })
}

/// Density Zero <=> distribution Zero <=> independence of the pair.
/// `tol` applies to the grids; independence is tested on cells at `tol`.
pub fn property_null(p: &ProbTable, x: &str, y: &str, tol: f64) -> Result<PropertyCheck> {
    let d = density_assoc(p, x, y, None, tol)?;
    let f = distribution_assoc(p, y, x, None, tol)?;
    let indep = check_independent(p, x, y, tol)?;
    let applicable = d.undefined == 0 && f.undefined == 0;
    let dz = d.sign == AssocSign::Zero;
    let fz = f.sign == AssocSign::Zero;
    Ok(PropertyCheck {
        name: "null equivalence",
        applicable,
        holds: !applicable || (dz == fz && fz == indep),
        signs: vec![(d.kind, d.sign), (f.kind, f.sign)],
    })
}

/// Binary response: density, distribution and expectation signs coincide.
pub fn property_binary_response(p: &ProbTable, x: &str, y: &str, tol: f64) -> Result<PropertyCheck> {
    let applicable = p.var(y)?.is_binary();
    let d = density_assoc(p, x, y, None, tol)?;
    let f = distribution_assoc(p, y, x, None, tol)?;
    let e = expectation_assoc(p, y, x, None, tol)?;
    let holds = !applicable || (d.sign == f.sign && f.sign == e.sign);
    Ok(PropertyCheck {
        name: "binary response equivalence",
        applicable,
        holds,
        signs: vec![(d.kind, d.sign), (f.kind, f.sign), (e.kind, e.sign)],
    })
}

/// Binary driver: expectation NonNegative <=> covariance >= -tol.
pub fn property_binary_driver(p: &ProbTable, x: &str, y: &str, tol: f64) -> Result<PropertyCheck> {
    let applicable = p.var(x)?.is_binary();
    let e = expectation_assoc(p, y, x, None, tol)?;
    let c = correlation(p, x, y, None, tol)?;
    let cov = c.grid[0].unwrap_or(0.0);
    let holds = !applicable || e.undefined > 0 || nonneg(e.sign) == (cov >= -tol);
    Ok(PropertyCheck {
        name: "binary driver equivalence",
        applicable,
        holds,
        signs: vec![(e.kind, e.sign), (c.kind, c.sign)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Variable;
    use crate::fixtures;

    const TOL: f64 = 1e-9;

    #[test]
    fn smoke_marginal_and_slice_odds() {
        let p = fixtures::smoke();
        let m = density_assoc(&p, "X", "Z", None, TOL).unwrap();
        assert_eq!(m.shape, vec![1, 1]);
        let or = m.grid[0].unwrap().exp();
        assert!((or - 139.0 * 502.0 / (170.0 * 443.0)).abs() < 1e-12);
        assert_eq!(m.sign, AssocSign::Negative);
        let s = density_assoc(&p, "X", "Z", Some("Y"), TOL).unwrap();
        assert_eq!(s.shape, vec![4, 1, 1]);
        let ors: Vec<f64> = s.grid.iter().map(|v| v.unwrap().exp()).collect();
        assert!((ors[0] - 1.0201).abs() < 1e-4);
        assert!((ors[3] - 1.6).abs() < 1e-12);
        assert_eq!(s.sign, AssocSign::Positive);
    }

    #[test]
    fn product_table_is_zero_everywhere() {
        let px = [0.2, 0.5, 0.3];
        let py = [0.6, 0.4];
        let w = px.iter().flat_map(|a| py.iter().map(move |b| a * b)).collect();
        let p = ProbTable::from_weights(vec![Variable::indexed("X", 3), Variable::indexed("Y", 2)], w).unwrap();
        for r in all_measures(&p, "X", "Y", None, TOL).unwrap() {
            assert_eq!(r.sign, AssocSign::Zero, "{}", r.kind);
        }
    }

    #[test]
    fn ex2_distribution_is_mixed() {
        let p = fixtures::ex2().joint_uniform_x().unwrap();
        let f = distribution_assoc(&p, "Y", "X", None, TOL).unwrap();
        assert!((f.grid[0].unwrap() + 0.6).abs() < 1e-12);
        assert!((f.grid[1].unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(f.sign, AssocSign::Mixed);
        let e = expectation_assoc(&p, "Z", "X", None, TOL).unwrap();
        assert!((e.grid[0].unwrap() + 0.32).abs() < 1e-12);
        // structural zeros leave every density entry undefined
        let d = density_assoc(&p, "X", "Y", None, TOL).unwrap();
        assert_eq!(d.undefined, 2);
        assert_eq!(d.sign, AssocSign::Mixed);
    }

    #[test]
    fn binary_response_reduces_to_risk_difference() {
        let p = ProbTable::new(vec![Variable::indexed("X", 2), Variable::indexed("Y", 2)], vec![0.3, 0.2, 0.1, 0.4]).unwrap();
        let f = distribution_assoc(&p, "Y", "X", None, TOL).unwrap();
        let rd = 0.4 / 0.5 - 0.2 / 0.5;
        assert!((f.oriented()[0].unwrap() - rd).abs() < 1e-12);
    }

    #[test]
    fn trans_expectations_and_covariance() {
        let p = fixtures::trans();
        let e = |r, d| expectation_assoc(&p, r, d, None, TOL).unwrap().grid[0].unwrap();
        assert!((e("Z", "X") + 0.08).abs() < 1e-12);
        assert!((e("Y", "X") - 0.2).abs() < 1e-12);
        assert!((e("Z", "Y") - 0.08).abs() < 1e-12);
        let c = correlation(&p, "X", "Z", None, TOL).unwrap();
        assert!((c.grid[0].unwrap() + 0.02).abs() < 1e-12);
        assert_eq!(c.sign, AssocSign::Negative);
    }

    #[test]
    fn constant_variable_has_zero_covariance() {
        let p = ProbTable::new(vec![Variable::indexed("X", 2), Variable::indexed("Y", 2)], vec![0.4, 0.0, 0.6, 0.0]).unwrap();
        let c = correlation(&p, "X", "Y", None, TOL).unwrap();
        assert_eq!(c.sign, AssocSign::Zero);
        assert_eq!(c.correlation.unwrap()[0], None);
    }

    #[test]
    fn birch_slices_are_zero() {
        let p = fixtures::birch();
        let d = density_assoc(&p, "X", "Z", Some("Y"), TOL).unwrap();
        for v in &d.grid {
            assert!(v.unwrap().abs() < 1e-12);
        }
        assert_eq!(d.sign, AssocSign::Zero);
        let xy = density_assoc(&p, "X", "Y", None, TOL).unwrap();
        assert_eq!(xy.sign, AssocSign::Mixed);
    }

    #[test]
    fn report_round_trips_through_json() {
        let p = fixtures::ex2().joint_uniform_x().unwrap();
        let r = density_assoc(&p, "X", "Y", None, TOL).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("null"));
        let back: MeasureReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
