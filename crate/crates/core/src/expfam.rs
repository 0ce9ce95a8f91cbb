//! One-parameter exponential families `f(y|x) = exp((y θ_x - b(θ_x)) / a + c(y))`
//! realized on a discrete grid and fed through the table measures.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::dist::{compose_ci, CondFamily, ProbTable, Variable};
use crate::error::{Error, Result};
use crate::measures::{correlation, measure, MeasureKind};
use crate::par::{map_range, ExecMode};
use crate::sign::{classify_sign, AssocSign};
use crate::transitivity::{check_t7, check_t8, exponential_family_status, CheckStatus, TheoremVerdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    Bernoulli,
    Binomial,
    Poisson,
    #[serde(alias = "NormalKnownVariance")]
    Normal,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyParams {
    /// Trials for `Binomial`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    /// Upper tail mass dropped for `Poisson` (default `1e-10`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    /// Equal-probability bins for `Normal` (default and minimum 201).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

fn unit() -> f64 {
    1.0
}

/// Family, natural parameter per driver level, and dispersion `a(φ)`.
/// For `Normal`, `a(φ)` is the known variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFamSpec {
    pub family: FamilyKind,
    #[serde(default)]
    pub params: FamilyParams,
    pub theta: Vec<f64>,
    #[serde(default = "unit")]
    pub dispersion: f64,
}

pub const NORMAL_MIN_BINS: usize = 201;
pub const POISSON_TRUNCATION: f64 = 1e-10;

impl ExpFamSpec {
    pub fn new(family: FamilyKind, theta: Vec<f64>) -> Self {
        Self { family, params: FamilyParams::default(), theta, dispersion: 1.0 }
    }

    pub fn binomial(n: u32, theta: Vec<f64>) -> Self {
        let mut s = Self::new(FamilyKind::Binomial, theta);
        s.params.n = Some(n);
        s
    }

    pub fn normal(variance: f64, theta: Vec<f64>) -> Self {
        Self { dispersion: variance, ..Self::new(FamilyKind::Normal, theta) }
    }

    fn validate(&self) -> Result<()> {
        if self.theta.is_empty() || self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("theta must be a non-empty list of finite values".into()));
        }
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return Err(Error::Invalid(format!("dispersion must be positive, got {}", self.dispersion)));
        }
        match self.family {
            FamilyKind::Binomial if self.params.n.unwrap_or(0) < 1 => Err(Error::Invalid("Binomial needs n >= 1".into())),
            FamilyKind::Bernoulli | FamilyKind::Binomial | FamilyKind::Poisson if self.dispersion != 1.0 => {
                Err(Error::Invalid(format!("{:?} has unit dispersion", self.family)))
            }
            FamilyKind::Normal if self.params.bins.is_some_and(|b| b < NORMAL_MIN_BINS) => {
                Err(Error::Invalid(format!("Normal needs at least {NORMAL_MIN_BINS} bins")))
            }
            FamilyKind::Poisson if self.params.truncation.is_some_and(|t| !(t > 0.0 && t < 0.5)) => {
                Err(Error::Invalid("Poisson truncation must lie in (0, 0.5)".into()))
            }
            _ => Ok(()),
        }
    }

    /// Cumulant `b(θ)`.
    pub fn cumulant(&self, theta: f64) -> f64 {
        match self.family {
            FamilyKind::Bernoulli => ln_1p_exp(theta),
            FamilyKind::Binomial => self.params.n.unwrap_or(1) as f64 * ln_1p_exp(theta),
            FamilyKind::Poisson => theta.exp(),
            FamilyKind::Normal => theta * theta / 2.0,
        }
    }

    /// `(b'(θ), a b''(θ))`.
    pub fn moments(&self, theta: f64) -> (f64, f64) {
        let n = self.params.n.unwrap_or(1) as f64;
        match self.family {
            FamilyKind::Bernoulli | FamilyKind::Binomial => {
                let p = logistic(theta);
                (n * p, n * p * (1.0 - p))
            }
            FamilyKind::Poisson => (theta.exp(), theta.exp()),
            FamilyKind::Normal => (theta, self.dispersion),
        }
    }
}

fn ln_1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Response pmf per driver level on a shared ordinal support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFamily {
    pub xgrid: Vec<f64>,
    pub support: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl GridFamily {
    pub fn conditional(&self, driver: &str, response: &str) -> Result<CondFamily> {
        let x = Variable::indexed(driver, self.xgrid.len()).with_scores(self.xgrid.clone())?;
        let y = Variable::indexed(response, self.support.len()).with_scores(self.support.clone())?;
        CondFamily::from_rows(y, x, self.rows.clone())
    }

    /// Joint `(driver, response)` with uniform driver weights.
    pub fn joint(&self, driver: &str, response: &str) -> Result<ProbTable> {
        let fam = self.conditional(driver, response)?;
        let px = uniform(fam.given()[0].clone())?;
        fam.joint_with(&px)
    }
}

fn uniform(v: Variable) -> Result<ProbTable> {
    let k = v.len();
    ProbTable::new(vec![v], vec![1.0 / k as f64; k])
}

fn normalize(mut row: Vec<f64>) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= s);
    row
}

/// Exact pmfs for the discrete members; the Poisson tail beyond the largest
/// per-row `1 - truncation` quantile is dropped and rows renormalized. The
/// Normal member is binned at equal-probability cut points of the uniform
/// mixture over the grid, scored by bin midpoints.
pub fn realize(spec: &ExpFamSpec, xgrid: Option<&[f64]>) -> Result<GridFamily> {
    spec.validate()?;
    let k = spec.theta.len();
    let xgrid = match xgrid {
        Some(g) if g.len() != k => return Err(Error::Invalid(format!("xgrid has {} points but theta has {k}", g.len()))),
        Some(g) => g.to_vec(),
        None => (0..k).map(|i| i as f64).collect(),
    };
    let mode = ExecMode::Parallel;
    let (support, rows) = match spec.family {
        FamilyKind::Bernoulli => (vec![0.0, 1.0], spec.theta.iter().map(|&t| vec![1.0 - logistic(t), logistic(t)]).collect()),
        FamilyKind::Binomial => {
            let n = spec.params.n.expect("validated");
            let rows = map_range(mode, k, |i| {
                let t = spec.theta[i];
                let b = spec.cumulant(t);
                normalize((0..=n).map(|y| (ln_binomial(n as u64, y as u64) + y as f64 * t - b).exp()).collect())
            });
            ((0..=n).map(f64::from).collect(), rows)
        }
        FamilyKind::Poisson => {
            let cut = spec.params.truncation.unwrap_or(POISSON_TRUNCATION);
            let log_pmf = |y: u64, t: f64| y as f64 * t - t.exp() - ln_gamma(y as f64 + 1.0);
            let top = spec
                .theta
                .iter()
                .map(|&t| {
                    let (mut y, mut cdf) = (0u64, 0.0);
                    while cdf < 1.0 - cut {
                        cdf += log_pmf(y, t).exp();
                        y += 1;
                    }
                    y - 1
                })
                .max()
                .expect("non-empty theta");
            let rows = map_range(mode, k, |i| normalize((0..=top).map(|y| log_pmf(y, spec.theta[i]).exp()).collect()));
            ((0..=top).map(|y| y as f64).collect(), rows)
        }
        FamilyKind::Normal => normal_bins(spec, mode)?,
    };
    if rows.iter().flatten().any(|p| !p.is_finite()) {
        return Err(Error::Invalid("family evaluation overflowed; narrow the theta range".into()));
    }
    Ok(GridFamily { xgrid, support, rows })
}

fn normal_bins(spec: &ExpFamSpec, mode: ExecMode) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let sd = spec.dispersion.sqrt();
    let comps: Vec<Normal> = spec.theta.iter().map(|&m| Normal::new(m, sd)).collect::<std::result::Result<_, _>>().map_err(|e| Error::Invalid(e.to_string()))?;
    let bins = spec.params.bins.unwrap_or(NORMAL_MIN_BINS);
    let mix_cdf = |v: f64| comps.iter().map(|c| c.cdf(v)).sum::<f64>() / comps.len() as f64;
    let (lo_m, hi_m) = spec.theta.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let quantile = |q: f64| {
        let (mut lo, mut hi) = (lo_m - 40.0 * sd, hi_m + 40.0 * sd);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mix_cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let cuts: Vec<f64> = map_range(mode, bins - 1, |i| quantile((i + 1) as f64 / bins as f64));
    let mut support = Vec::with_capacity(bins);
    for b in 0..bins {
        let s = match b {
            0 => cuts[0] - 0.5 * (cuts[1] - cuts[0]),
            b if b == bins - 1 => cuts[b - 1] + 0.5 * (cuts[b - 1] - cuts[b - 2]),
            b => 0.5 * (cuts[b - 1] + cuts[b]),
        };
        support.push(s);
    }
    let rows = map_range(mode, comps.len(), |i| {
        let (c, mean) = (&comps[i], spec.theta[i]);
        // upper-tail differences keep relative accuracy above the mean
        let mass = |lo: f64, hi: f64| if lo > mean { c.sf(lo) - c.sf(hi) } else { c.cdf(hi) - c.cdf(lo) };
        let edges: Vec<f64> = std::iter::once(f64::NEG_INFINITY).chain(cuts.iter().copied()).chain(std::iter::once(f64::INFINITY)).collect();
        normalize(edges.windows(2).map(|w| mass(w[0], w[1])).collect())
    });
    Ok((support, rows))
}

/// Sign labels compared by an equivalence check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub labels: Vec<(String, AssocSign)>,
    pub agree: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Density, distribution and expectation labels of the realized family, and
/// the sign of the finite differences of `θ` along the grid.
pub fn sign_equivalence(spec: &ExpFamSpec, xgrid: Option<&[f64]>, tol: f64) -> Result<EquivalenceReport> {
    for &t in &spec.theta {
        if spec.moments(t).1 <= 0.0 {
            return Err(Error::Invalid(format!("degenerate variance at theta = {t}")));
        }
    }
    if spec.theta.len() < 2 {
        return Err(Error::Invalid("need at least two driver levels".into()));
    }
    let fam = realize(spec, xgrid)?;
    let p = fam.joint("X", "Y")?;
    let mut labels = Vec::new();
    for kind in [MeasureKind::Density, MeasureKind::Distribution, MeasureKind::Expectation] {
        labels.push((kind.to_string(), measure(kind, &p, "X", "Y", None, tol)?.sign));
    }
    let steps: Vec<Option<f64>> = spec.theta.windows(2).map(|w| Some(w[1] - w[0])).collect();
    labels.push(("theta".into(), classify_sign(&steps, tol)?.sign));
    let agree = labels.windows(2).all(|w| w[0].1 == w[1].1);
    let mut notes = Vec::new();
    if spec.family == FamilyKind::Normal {
        let c = correlation(&p, "X", "Y", None, tol)?;
        notes.push(format!("covariance sign {}", c.sign));
        labels.push((MeasureKind::Correlation.to_string(), c.sign));
    }
    Ok(EquivalenceReport { labels, agree, notes })
}

/// With `Y | X` from `py_x` and `Z | Y` from `pz_y` composed under
/// `X ⊥ Z | Y`, the `(X, Y)` and `(X, Z)` labels of `kind` coincide in
/// either direction, given a non-negative `(Y, Z)` association with a strict
/// witness (or none at all).
pub fn corollary2_bidirectional(py_x: &GridFamily, pz_y: &CondFamily, kind: MeasureKind, tol: f64) -> Result<EquivalenceReport> {
    let fy = py_x.conditional("X", "Y")?;
    if pz_y.given().len() != 1 || !pz_y.given()[0].scores().iter().zip(&py_x.support).all(|(a, b)| (a - b).abs() < 1e-12) || pz_y.given()[0].len() != py_x.support.len() {
        return Err(Error::IncompatibleSupport("p(z|y) must be indexed by the family's response support".into()));
    }
    let fz = CondFamily::new(pz_y.target().to_vec(), fy.target().to_vec(), pz_y.rows().to_vec())?;
    let px = uniform(fy.given()[0].clone())?;
    let p = compose_ci(&px, &fy, &fz)?;
    let z = fz.target()[0].name().to_string();
    let yz = measure(kind, &p, "Y", &z, None, tol)?;
    let admissible = yz.sign == AssocSign::Zero || (yz.sign.is_nonneg() && yz.witness.is_some());
    if !admissible {
        return Err(Error::NotApplicable(format!("(Y,Z) {kind} sign is {}, not non-negative with a strict witness", yz.sign)));
    }
    let xy = measure(kind, &p, "X", "Y", None, tol)?;
    let xz = measure(kind, &p, "X", &z, None, tol)?;
    let agree = if yz.sign == AssocSign::Zero { xz.sign == AssocSign::Zero } else { xy.sign == xz.sign };
    Ok(EquivalenceReport {
        labels: vec![("(X,Y)".into(), xy.sign), ("(Y,Z)".into(), yz.sign), ("(X,Z)".into(), xz.sign)],
        agree,
        notes: Vec::new(),
    })
}

/// The density rule for an exponential-family `Z | X`, falling back to the
/// expectation rule when the table does not support that declaration.
pub fn theorem8_check(p: &ProbTable, tol: f64) -> Result<TheoremVerdict> {
    let names = p.names();
    if names.len() != 3 {
        return Err(Error::Invalid("expected a table over (X, Y, Z)".into()));
    }
    if exponential_family_status(p, names[2], names[0], tol)? == CheckStatus::Holds {
        check_t8(p, tol)
    } else {
        let mut v = check_t7(p, tol)?;
        v.justification.push("Z | X is not an exponential family on this table; expectation conclusion only".into());
        Ok(v)
    }
}
