//! Sample-data estimation: least squares for the linear path rule and local
//! polynomial estimates of `E(Z|y)` and its derivative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::par::{map_slice, ExecMode};
use crate::sign::{classify_sign, AssocSign};

/// Smallest singular value, relative to the largest, accepted as full rank.
pub const RANK_TOL: f64 = 1e-10;
/// Sum of kernel weights needed to emit a local estimate.
pub const MIN_EFFECTIVE_WEIGHT: f64 = 5.0;
pub const DEFAULT_BANDWIDTH: f64 = 0.4;
pub const DEFAULT_DEGREE: usize = 2;

/// Observations of `(x, y, z)`; any entry may be missing, and a column may be
/// missing altogether when the data come from split samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleFrame {
    pub x: Vec<Option<f64>>,
    pub y: Vec<Option<f64>>,
    pub z: Vec<Option<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Column {
    X,
    Y,
    Z,
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Column::X => "x",
            Column::Y => "y",
            Column::Z => "z",
        })
    }
}

impl SampleFrame {
    /// Fully observed rows.
    pub fn complete(x: &[f64], y: &[f64], z: &[f64]) -> Result<Self> {
        if x.len() != y.len() || y.len() != z.len() {
            return Err(Error::Invalid("columns differ in length".into()));
        }
        let wrap = |v: &[f64]| v.iter().copied().map(Some).collect();
        Ok(Self { x: wrap(x), y: wrap(y), z: wrap(z) })
    }

    pub fn len(&self) -> usize {
        self.x.len().max(self.y.len()).max(self.z.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn col(&self, c: Column) -> &[Option<f64>] {
        match c {
            Column::X => &self.x,
            Column::Y => &self.y,
            Column::Z => &self.z,
        }
    }

    /// Rows where every requested column is observed, column-major.
    pub fn rows(&self, cols: &[Column]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); cols.len()];
        for i in 0..self.len() {
            let vals: Option<Vec<f64>> = cols.iter().map(|c| self.col(*c).get(i).copied().flatten()).collect();
            if let Some(v) = vals {
                out.iter_mut().zip(v).for_each(|(o, v)| o.push(v));
            }
        }
        out
    }

    /// CSV with a header naming some of `x`, `y`, `z` (any case); other
    /// columns are ignored. Empty fields and `NA` are missing.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers()?.clone();
        let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
        let idx = [find("x"), find("y"), find("z")];
        if idx.iter().all(Option::is_none) {
            return Err(Error::Parse("sample CSV needs at least one of the columns x, y, z".into()));
        }
        let mut frame = Self::default();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut vals = [None; 3];
            for (k, i) in idx.iter().enumerate() {
                let Some(i) = i else { continue };
                let raw = rec.get(*i).unwrap_or("");
                vals[k] = match raw {
                    "" | "NA" | "na" | "NaN" => None,
                    s => Some(s.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad number `{s}`", row + 1)))?),
                };
            }
            frame.x.push(vals[0]);
            frame.y.push(vals[1]);
            frame.z.push(vals[2]);
        }
        Ok(frame)
    }
}

/// The three regressions of the linear path rule, plus the marginal one used
/// as a cross-check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    #[serde(rename = "Z~X+Y")]
    ZOnXY,
    #[serde(rename = "Y~X")]
    YOnX,
    #[serde(rename = "Z~Y")]
    ZOnY,
    #[serde(rename = "Z~X")]
    ZOnX,
}

impl Formula {
    fn columns(self) -> (Column, Vec<Column>) {
        match self {
            Formula::ZOnXY => (Column::Z, vec![Column::X, Column::Y]),
            Formula::YOnX => (Column::Y, vec![Column::X]),
            Formula::ZOnY => (Column::Z, vec![Column::Y]),
            Formula::ZOnX => (Column::Z, vec![Column::X]),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formula::ZOnXY => "Z~X+Y",
            Formula::YOnX => "Y~X",
            Formula::ZOnY => "Z~Y",
            Formula::ZOnX => "Z~X",
        })
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_uppercase();
        match compact.as_str() {
            "Z~X+Y" | "Z~Y+X" => Ok(Formula::ZOnXY),
            "Y~X" => Ok(Formula::YOnX),
            "Z~Y" => Ok(Formula::ZOnY),
            "Z~X" => Ok(Formula::ZOnX),
            _ => Err(Error::Parse(format!("unknown formula `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub formula: Formula,
    /// `intercept` followed by the regressor names.
    pub terms: Vec<String>,
    pub coef: Vec<f64>,
    /// `None` when the fit leaves no residual degrees of freedom.
    pub std_err: Option<Vec<f64>>,
    pub rss: f64,
    pub n: usize,
}

impl OlsFit {
    pub fn slope(&self, i: usize) -> f64 {
        self.coef[i + 1]
    }

    pub fn slope_se(&self, i: usize) -> Option<f64> {
        self.std_err.as_ref().map(|s| s[i + 1])
    }
}

/// Least squares with an intercept on the rows where the formula's columns
/// are all observed.
pub fn fit_ols(frame: &SampleFrame, formula: Formula) -> Result<OlsFit> {
    let (resp, regs) = formula.columns();
    let cols: Vec<Column> = regs.iter().copied().chain([resp]).collect();
    let data = frame.rows(&cols);
    let n = data[0].len();
    let p = regs.len() + 1;
    if n < p.max(2) {
        return Err(Error::Invalid(format!("{formula} needs at least {} complete rows, found {n}", p.max(2))));
    }
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { data[j - 1][i] });
    let target = DVector::from_column_slice(&data[regs.len()]);
    let mut terms = vec!["intercept".to_string()];
    terms.extend(regs.iter().map(Column::to_string));

    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut collinear = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if !(*s > RANK_TOL * smax) {
            for (j, name) in terms.iter().enumerate() {
                if v_t[(k, j)].abs() > 1e-6 && !collinear.contains(name) {
                    collinear.push(name.clone());
                }
            }
        }
    }
    if !collinear.is_empty() {
        return Err(Error::RankDeficient(collinear));
    }
    let coef = svd.solve(&target, 0.0).map_err(|e| Error::Invalid(e.to_string()))?;
    let resid = &target - &design * &coef;
    let rss = resid.norm_squared();
    let std_err = (n > p).then(|| {
        let sigma2 = rss / (n - p) as f64;
        // (X'X)^{-1} = V S^{-2} V'
        let inv_s2 = svd.singular_values.map(|s| 1.0 / (s * s));
        (0..p).map(|j| (sigma2 * (0..p).map(|k| v_t[(k, j)].powi(2) * inv_s2[k]).sum::<f64>()).sqrt()).collect()
    });
    Ok(OlsFit { formula, terms, coef: coef.iter().copied().collect(), std_err, rss, n })
}

/// Fits of the linear path rule. Models whose columns are absent stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearPathModel {
    /// `E(Z|x,y) = b0 + b1 x + b2 y`.
    pub z_on_xy: Option<OlsFit>,
    /// `E(Y|x) = b3 + b4 x`.
    pub y_on_x: Option<OlsFit>,
    /// `E(Z|y) = b5 + b6 y`.
    pub z_on_y: Option<OlsFit>,
    /// Direct marginal fit, available when `x` and `z` are jointly observed.
    pub z_on_x: Option<OlsFit>,
}

fn optional(r: Result<OlsFit>) -> Result<Option<OlsFit>> {
    match r {
        Ok(f) => Ok(Some(f)),
        Err(Error::Invalid(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

impl LinearPathModel {
    /// Every model the frame supports; too few complete rows leaves a slot
    /// empty, rank deficiency is an error.
    pub fn fit(frame: &SampleFrame) -> Result<Self> {
        Ok(Self {
            z_on_xy: optional(fit_ols(frame, Formula::ZOnXY))?,
            y_on_x: optional(fit_ols(frame, Formula::YOnX))?,
            z_on_y: optional(fit_ols(frame, Formula::ZOnY))?,
            z_on_x: optional(fit_ols(frame, Formula::ZOnX))?,
        })
    }

    /// `(b0, b1, b2)`.
    pub fn outcome_coefs(&self) -> Option<(f64, f64, f64)> {
        self.z_on_xy.as_ref().map(|f| (f.coef[0], f.coef[1], f.coef[2]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathRoute {
    /// Non-negative conditional slope of `Z` on `Y`.
    ConditionalSlope,
    /// `E(Z|y)` nondecreasing marginally.
    MarginalSlope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathVerdict {
    pub direct_effect: f64,
    pub conditional_slope: f64,
    pub first_stage: f64,
    /// `b1 + b2 b4`.
    pub total_slope: f64,
    pub route: Option<PathRoute>,
    pub sign: Option<AssocSign>,
    /// Slope of the direct `Z~X` fit and its gap from `total_slope`.
    pub direct_fit: Option<f64>,
    pub identity_gap: Option<f64>,
    /// Gap within two standard errors of the direct fit.
    pub agrees: Option<bool>,
    pub reason: String,
}

/// Marginal-slope evidence for the second route: a fitted curve when given,
/// otherwise the linear `Z~Y` slope.
fn marginal_nonneg(model: &LinearPathModel, curve: Option<&DerivCurve>, tol: f64) -> Option<bool> {
    if let Some(c) = curve {
        return c.derivative_sign(tol).map(AssocSign::is_nonneg);
    }
    model.z_on_y.as_ref().map(|f| f.slope(0) >= -tol)
}

/// Sign of `dE(Z|x)/dx` from the path coefficients.
pub fn cochran_path(model: &LinearPathModel, curve: Option<&DerivCurve>, tol: f64) -> Result<PathVerdict> {
    let (_, b1, b2) = model.outcome_coefs().ok_or_else(|| Error::Invalid("no Z~X+Y fit: need jointly observed x, y, z".into()))?;
    let b4 = model.y_on_x.as_ref().ok_or_else(|| Error::Invalid("no Y~X fit: need jointly observed x, y".into()))?.slope(0);
    let total = b1 + b2 * b4;
    let direct = model.z_on_x.as_ref().map(|f| f.slope(0));
    let gap = direct.map(|d| (d - total).abs());
    let agrees = model.z_on_x.as_ref().and_then(|f| f.slope_se(0)).zip(gap).map(|(se, g)| g <= 2.0 * se + tol);
    let mut v = PathVerdict {
        direct_effect: b1,
        conditional_slope: b2,
        first_stage: b4,
        total_slope: total,
        route: None,
        sign: None,
        direct_fit: direct,
        identity_gap: gap,
        agrees,
        reason: String::new(),
    };
    if b1 < -tol || b4 < -tol {
        v.reason = format!("not applicable: direct effect {b1:.4} and first stage {b4:.4} must both be non-negative");
        return Ok(v);
    }
    if b2 >= -tol {
        v.route = Some(PathRoute::ConditionalSlope);
    } else if marginal_nonneg(model, curve, tol) == Some(true) {
        v.route = Some(PathRoute::MarginalSlope);
    }
    match v.route {
        Some(route) => {
            v.sign = Some(AssocSign::NonNegative);
            v.reason = format!("{route:?} route: dE(Z|x)/dx = {b1:.4} + {b2:.4} x {b4:.4} = {total:.4} >= 0");
        }
        None => v.reason = "no conclusion: conditional slope negative and marginal E(Z|y) not shown nondecreasing".into(),
    }
    Ok(v)
}

/// Local polynomial estimates over an increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivCurve {
    pub grid: Vec<f64>,
    pub value: Vec<Option<f64>>,
    pub derivative: Vec<Option<f64>>,
    pub bandwidth: f64,
    pub degree: usize,
    pub kernel: String,
}

impl DerivCurve {
    /// Sign label of the derivative over the defined grid points; `None` when
    /// no point is defined.
    pub fn derivative_sign(&self, tol: f64) -> Option<AssocSign> {
        if self.derivative.iter().all(Option::is_none) {
            return None;
        }
        classify_sign(&self.derivative, tol).ok().map(|s| s.sign)
    }

    pub fn undefined_points(&self) -> usize {
        self.derivative.iter().filter(|d| d.is_none()).count()
    }

    /// `y,estimate,derivative`; undefined points have empty fields.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["y", "estimate", "derivative"])?;
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for ((g, v), d) in self.grid.iter().zip(&self.value).zip(&self.derivative) {
            wtr.write_record([g.to_string(), cell(*v), cell(*d)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `points` evenly spaced values between the 2.5% and 97.5% sample quantiles.
pub fn default_grid(y: &[f64], points: usize) -> Result<Vec<f64>> {
    if y.is_empty() || points < 2 {
        return Err(Error::Invalid("grid needs data and at least two points".into()));
    }
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
    let (lo, hi) = (q(0.025), q(0.975));
    if !(hi > lo) {
        return Err(Error::Invalid("y has no spread".into()));
    }
    Ok((0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect())
}

/// Gaussian-kernel local polynomial of the given degree, centered and scaled
/// at each grid point. The value is the intercept, the derivative the linear
/// coefficient over the bandwidth.
pub fn local_poly_deriv(y: &[f64], z: &[f64], grid: &[f64], bandwidth: f64, degree: usize, mode: ExecMode) -> Result<DerivCurve> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if degree == 0 {
        return Err(Error::Invalid("degree must be at least 1 to estimate a derivative".into()));
    }
    if y.len() != z.len() {
        return Err(Error::Invalid("y and z differ in length".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("grid must be strictly increasing".into()));
    }
    let p = degree + 1;
    let est = map_slice(mode, grid, |&g| -> Option<(f64, f64)> {
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwz = DVector::<f64>::zeros(p);
        let mut mass = 0.0;
        let mut pow = vec![0.0; p];
        for (yi, zi) in y.iter().zip(z) {
            let u = (yi - g) / bandwidth;
            let w = (-0.5 * u * u).exp();
            if w < 1e-300 {
                continue;
            }
            mass += w;
            pow[0] = 1.0;
            for k in 1..p {
                pow[k] = pow[k - 1] * u;
            }
            for a in 0..p {
                xtwz[a] += w * pow[a] * zi;
                for b in 0..p {
                    xtwx[(a, b)] += w * pow[a] * pow[b];
                }
            }
        }
        if mass < MIN_EFFECTIVE_WEIGHT {
            return None;
        }
        let svd = xtwx.svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.iter().any(|s| !(*s > RANK_TOL * smax)) {
            return None;
        }
        let beta = svd.solve(&xtwz, 0.0).ok()?;
        Some((beta[0], beta[1] / bandwidth))
    });
    Ok(DerivCurve {
        grid: grid.to_vec(),
        value: est.iter().map(|e| e.map(|e| e.0)).collect(),
        derivative: est.iter().map(|e| e.map(|e| e.1)).collect(),
        bandwidth,
        degree,
        kernel: "gaussian".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller
        let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn exact_on_noiseless_plane() {
        let x: Vec<f64> = (0..20).map(|i| (i % 5) as f64).collect();
        let y: Vec<f64> = (0..20).map(|i| (i * 7 % 11) as f64 * 0.3).collect();
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 1.0 + 2.0 * a + 3.0 * b).collect();
        let f = fit_ols(&SampleFrame::complete(&x, &y, &z).unwrap(), Formula::ZOnXY).unwrap();
        for (c, want) in f.coef.iter().zip([1.0, 2.0, 3.0]) {
            assert!((c - want).abs() < 1e-9);
        }
    }

    #[test]
    fn binary_first_stage_is_mean_difference() {
        let x = [0.0, 0.0, 0.0, 1.0, 1.0];
        let y = [1.0, 2.0, 6.0, 4.0, 7.0];
        let f = fit_ols(&SampleFrame::complete(&x, &y, &y).unwrap(), Formula::YOnX).unwrap();
        assert!((f.slope(0) - (5.5 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_named() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let z = [1.0, 0.0, 2.0, 1.0];
        match fit_ols(&SampleFrame::complete(&x, &y, &z).unwrap(), Formula::ZOnXY) {
            Err(Error::RankDeficient(cols)) => assert!(cols.contains(&"x".into()) && cols.contains(&"y".into()), "{cols:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn recovers_generative_betas() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| gauss(&mut rng)).collect();
        let y: Vec<f64> = x.iter().map(|x| 0.5 + 0.7 * x + gauss(&mut rng)).collect();
        let z: Vec<f64> = x.iter().zip(&y).map(|(x, y)| -1.0 + 0.3 * x + 1.2 * y + 0.5 * gauss(&mut rng)).collect();
        let f = fit_ols(&SampleFrame::complete(&x, &y, &z).unwrap(), Formula::ZOnXY).unwrap();
        let se = f.std_err.clone().unwrap();
        for ((c, s), want) in f.coef.iter().zip(&se).zip([-1.0, 0.3, 1.2]) {
            assert!((c - want).abs() < 3.0 * s, "{c} vs {want} (se {s})");
        }
    }

    #[test]
    fn cochran_identity_on_binary_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        let x: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 0.4 * x + gauss(&mut rng)).collect();
        let z: Vec<f64> = x.iter().zip(&y).map(|(x, y)| 0.2 * x + 0.6 * y + gauss(&mut rng)).collect();
        let m = LinearPathModel::fit(&SampleFrame::complete(&x, &y, &z).unwrap()).unwrap();
        let v = cochran_path(&m, None, 1e-12).unwrap();
        assert!(v.identity_gap.unwrap() < 1e-8);
        assert_eq!(v.agrees, Some(true));
    }

    fn model(b1: f64, b2: f64, b4: f64, b6: Option<f64>) -> LinearPathModel {
        let fit = |formula, coef: Vec<f64>| OlsFit { formula, terms: vec![], coef, std_err: None, rss: 0.0, n: 10 };
        LinearPathModel {
            z_on_xy: Some(fit(Formula::ZOnXY, vec![0.0, b1, b2])),
            y_on_x: Some(fit(Formula::YOnX, vec![0.0, b4])),
            z_on_y: b6.map(|b| fit(Formula::ZOnY, vec![0.0, b])),
            z_on_x: None,
        }
    }

    #[test]
    fn route_gates() {
        let v = cochran_path(&model(1.0, 0.5, 0.2, None), None, 1e-12).unwrap();
        assert!((v.total_slope - 1.1).abs() < 1e-15);
        assert_eq!((v.route, v.sign), (Some(PathRoute::ConditionalSlope), Some(AssocSign::NonNegative)));
        let v = cochran_path(&model(1.0, -0.4, 0.2, Some(0.1)), None, 1e-12).unwrap();
        assert_eq!(v.route, Some(PathRoute::MarginalSlope));
        let v = cochran_path(&model(-0.1, 0.5, 0.2, Some(0.1)), None, 1e-12).unwrap();
        assert_eq!(v.sign, None);
        let v = cochran_path(&model(1.0, -0.4, 0.2, Some(-0.1)), None, 1e-12).unwrap();
        assert_eq!(v.sign, None);
    }

    #[test]
    fn marginal_route_on_split_samples() {
        // X ~ N(0,1), Y = 0.2 X + N(0, 0.36), Z = 1 + X - 0.4 Y + noise:
        // marginal slope of Z on Y is 0.1 in the population.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 40_000;
        let mut frame = SampleFrame::default();
        for i in 0..n {
            let x = gauss(&mut rng);
            let y = 0.2 * x + 0.6 * gauss(&mut rng);
            let z = 1.0 + x - 0.4 * y + 0.3 * gauss(&mut rng);
            // first half sees everything, second half only (y, z)
            frame.x.push((i < n / 2).then_some(x));
            frame.y.push(Some(y));
            frame.z.push(Some(z));
        }
        let m = LinearPathModel::fit(&frame).unwrap();
        let b6 = m.z_on_y.as_ref().unwrap().slope(0);
        assert!((b6 - 0.1).abs() < 0.03, "{b6}");
        let v = cochran_path(&m, None, 1e-12).unwrap();
        assert_eq!(v.route, Some(PathRoute::MarginalSlope));
        assert!((v.total_slope - 0.92).abs() < 0.05);
    }

    #[test]
    fn reproduces_low_degree_polynomials() {
        let y: Vec<f64> = (0..200).map(|i| -2.0 + 4.0 * i as f64 / 199.0).collect();
        let grid: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        for bw in [0.1, 0.4, 2.0] {
            let z: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
            let c = local_poly_deriv(&y, &z, &grid, bw, 2, ExecMode::Parallel).unwrap();
            assert!(c.derivative.iter().all(|d| (d.unwrap() - 2.0).abs() < 1e-6));
            let z: Vec<f64> = y.iter().map(|v| 1.0 - v + 0.5 * v * v).collect();
            let c = local_poly_deriv(&y, &z, &grid, bw, 2, ExecMode::Sequential).unwrap();
            for (g, (v, d)) in grid.iter().zip(c.value.iter().zip(&c.derivative)) {
                assert!((v.unwrap() - (1.0 - g + 0.5 * g * g)).abs() < 1e-6);
                assert!((d.unwrap() - (g - 1.0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn quadratic_derivative_tracks_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y: Vec<f64> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = y.iter().map(|v| v * v + 0.1 * gauss(&mut rng)).collect();
        let grid: Vec<f64> = (0..17).map(|i| -0.8 + 0.1 * i as f64).collect();
        let c = local_poly_deriv(&y, &z, &grid, 0.2, 2, ExecMode::Parallel).unwrap();
        let worst = grid.iter().zip(&c.derivative).map(|(g, d)| (d.unwrap() - 2.0 * g).abs()).fold(0.0, f64::max);
        assert!(worst < 0.1, "{worst}");
        assert_eq!(c.derivative_sign(1e-9), Some(AssocSign::Mixed));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let y: Vec<f64> = (0..2000).map(|i| -3.0 + 6.0 * i as f64 / 1999.0).collect();
        let z: Vec<f64> = y.iter().map(|v| v.sin() + 2.0 * v).collect();
        let grid: Vec<f64> = (0..41).map(|i| -1.0 + 0.05 * i as f64).collect();
        let c = local_poly_deriv(&y, &z, &grid, 0.4, 2, ExecMode::Parallel).unwrap();
        for i in 1..grid.len() - 1 {
            let fd = (c.value[i + 1].unwrap() - c.value[i - 1].unwrap()) / (grid[i + 1] - grid[i - 1]);
            let d = c.derivative[i].unwrap();
            assert!((fd - d).abs() <= 0.05 * d.abs(), "{fd} vs {d}");
        }
    }

    #[test]
    fn sparse_support_and_bad_bandwidth() {
        let y = [0.0, 0.1, 0.2, 5.0];
        let z = [0.0, 1.0, 2.0, 3.0];
        let c = local_poly_deriv(&y, &z, &[0.1, 10.0], 0.4, 2, ExecMode::Sequential).unwrap();
        assert_eq!(c.undefined_points(), 2);
        assert!(local_poly_deriv(&y, &z, &[0.0], 0.0, 2, ExecMode::Sequential).is_err());
    }

    #[test]
    fn frame_csv_with_missing_columns() {
        let f = SampleFrame::read_csv("Y,z,other\n1,2,a\n3,,b\nNA,4,c\n".as_bytes()).unwrap();
        assert_eq!(f.y, vec![Some(1.0), Some(3.0), None]);
        assert_eq!(f.rows(&[Column::Y, Column::Z]), vec![vec![1.0], vec![2.0]]);
        assert!(f.x.iter().all(Option::is_none));
        let m = LinearPathModel::fit(&f).unwrap();
        assert!(m.z_on_xy.is_none());
    }
}
