//! Dense discrete joint distributions over named ordinal variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization tolerance for probability tables and conditional rows.
pub const NORM_TOL: f64 = 1e-12;

/// An ordinal variable: ordered level labels with strictly increasing scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    name: String,
    labels: Vec<String>,
    scores: Vec<f64>,
}

impl Variable {
    /// Variable with index scores `0, 1, 2, ...`.
    pub fn new<S: Into<String>>(name: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Self {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let scores = (0..labels.len()).map(|i| i as f64).collect();
        Self { name: name.into(), labels, scores }
    }

    /// Variable with `k` levels labelled `"0".."k-1"`.
    pub fn indexed(name: impl Into<String>, k: usize) -> Self {
        Self::new(name, (0..k).map(|i| i.to_string()))
    }

    pub fn with_scores(mut self, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != self.labels.len() {
            return Err(Error::Invalid(format!(
                "variable `{}` has {} levels but {} scores",
                self.name,
                self.labels.len(),
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) || scores.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!(
                "scores of `{}` must be finite and strictly increasing",
                self.name
            )));
        }
        self.scores = scores;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.labels.len() == 2
    }

    /// Same variable with levels in reverse order and negated scores (`V' = -V`).
    pub fn reflected(&self) -> Self {
        Self {
            name: self.name.clone(),
            labels: self.labels.iter().rev().cloned().collect(),
            scores: self.scores.iter().rev().map(|s| -s).collect(),
        }
    }

    fn same_support(&self, other: &Variable) -> bool {
        self.name == other.name && self.labels == other.labels
    }
}

pub(crate) fn extent(vars: &[Variable]) -> usize {
    vars.iter().map(Variable::len).product()
}

/// Row-major multi-index from a flat offset.
pub(crate) fn unravel(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = flat % d;
        flat /= d;
    }
}

pub(crate) fn ravel(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

fn check_vars(vars: &[Variable]) -> Result<()> {
    for (i, v) in vars.iter().enumerate() {
        if v.is_empty() {
            return Err(Error::Invalid(format!("variable `{}` has no levels", v.name)));
        }
        if vars[..i].iter().any(|w| w.name == v.name) {
            return Err(Error::Invalid(format!("duplicate variable `{}`", v.name)));
        }
    }
    Ok(())
}

/// Non-negative integer counts over named variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    vars: Vec<Variable>,
    counts: Vec<u64>,
}

impl CountTable {
    pub fn new(vars: Vec<Variable>, counts: Vec<u64>) -> Result<Self> {
        check_vars(&vars)?;
        if counts.len() != extent(&vars) {
            return Err(Error::Invalid(format!(
                "expected {} cells, got {}",
                extent(&vars),
                counts.len()
            )));
        }
        Ok(Self { vars, counts })
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Cell proportions `count / total`.
    pub fn normalize(&self) -> Result<ProbTable> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyDistribution);
        }
        let probs = self.counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(ProbTable { vars: self.vars.clone(), probs })
    }
}

/// Dense probability tensor over named ordinal variables (row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbTable {
    vars: Vec<Variable>,
    probs: Vec<f64>,
}

impl ProbTable {
    /// Table from probabilities that already sum to one (within 1e-12).
    pub fn new(vars: Vec<Variable>, probs: Vec<f64>) -> Result<Self> {
        check_vars(&vars)?;
        if probs.len() != extent(&vars) {
            return Err(Error::Invalid(format!(
                "expected {} cells, got {}",
                extent(&vars),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Invalid("cells must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::Invalid(format!("cells sum to {total}, not 1")));
        }
        Ok(Self { vars, probs })
    }

    /// Table from arbitrary non-negative weights, normalized to sum to one.
    pub fn from_weights(vars: Vec<Variable>, weights: Vec<f64>) -> Result<Self> {
        check_vars(&vars)?;
        if weights.len() != extent(&vars) {
            return Err(Error::Invalid(format!(
                "expected {} cells, got {}",
                extent(&vars),
                weights.len()
            )));
        }
        if weights.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Invalid("cells must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        let probs = weights.iter().map(|w| w / total).collect();
        Ok(Self { vars, probs })
    }

    /// Renormalize (idempotent up to rounding on normalized input).
    pub fn normalized(&self) -> Result<Self> {
        Self::from_weights(self.vars.clone(), self.probs.clone())
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dims(&self) -> Vec<usize> {
        self.vars.iter().map(Variable::len).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.vars.iter().map(Variable::name).collect()
    }

    pub fn axis(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn var(&self, name: &str) -> Result<&Variable> {
        Ok(&self.vars[self.axis(name)?])
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.probs[ravel(idx, &self.dims())]
    }

    /// Replace the scores of one variable.
    pub fn with_scores(mut self, name: &str, scores: Vec<f64>) -> Result<Self> {
        let a = self.axis(name)?;
        self.vars[a] = self.vars[a].clone().with_scores(scores)?;
        Ok(self)
    }

    /// Reverse the level order of one variable (`V' = -V`).
    pub fn reflect(&self, name: &str) -> Result<Self> {
        let a = self.axis(name)?;
        let dims = self.dims();
        let mut vars = self.vars.clone();
        vars[a] = vars[a].reflected();
        let mut probs = vec![0.0; self.probs.len()];
        let mut idx = vec![0; dims.len()];
        for (flat, &p) in self.probs.iter().enumerate() {
            unravel(flat, &dims, &mut idx);
            idx[a] = dims[a] - 1 - idx[a];
            probs[ravel(&idx, &dims)] = p;
        }
        Ok(Self { vars, probs })
    }

    /// Sum over every variable not in `keep`; result axes follow the order of `keep`.
    pub fn marginal(&self, keep: &[&str]) -> Result<ProbTable> {
        if keep.is_empty() {
            return Err(Error::EmptySelection);
        }
        let axes: Vec<usize> = keep.iter().map(|n| self.axis(n)).collect::<Result<_>>()?;
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return Err(Error::Invalid(format!("variable `{}` selected twice", keep[i])));
            }
        }
        let dims = self.dims();
        let vars: Vec<Variable> = axes.iter().map(|&a| self.vars[a].clone()).collect();
        let out_dims: Vec<usize> = vars.iter().map(Variable::len).collect();
        let mut probs = vec![0.0; extent(&vars)];
        let mut idx = vec![0; dims.len()];
        let mut sub = vec![0; axes.len()];
        for (flat, &p) in self.probs.iter().enumerate() {
            unravel(flat, &dims, &mut idx);
            for (s, &a) in sub.iter_mut().zip(&axes) {
                *s = idx[a];
            }
            probs[ravel(&sub, &out_dims)] += p;
        }
        Ok(ProbTable { vars, probs })
    }

    /// Conditional distributions of `target` given each level combination of `given`.
    pub fn condition(&self, target: &[&str], given: &[&str]) -> Result<CondFamily> {
        if target.is_empty() || given.is_empty() {
            return Err(Error::EmptySelection);
        }
        if target.iter().any(|t| given.contains(t)) {
            return Err(Error::Invalid("target and given blocks overlap".into()));
        }
        let keep: Vec<&str> = given.iter().chain(target).copied().collect();
        let joint = self.marginal(&keep)?;
        let ng = given.len();
        let given_vars = joint.vars[..ng].to_vec();
        let target_vars = joint.vars[ng..].to_vec();
        let width = extent(&target_vars);
        let rows = joint
            .probs
            .chunks(width)
            .map(|row| {
                let m: f64 = row.iter().sum();
                (m > 0.0).then(|| row.iter().map(|p| p / m).collect())
            })
            .collect();
        Ok(CondFamily { target: target_vars, given: given_vars, rows })
    }
}

/// One distribution over `target` for each level combination of `given`.
/// Rows whose conditioning event has zero probability are `None` (undefined).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondFamily {
    target: Vec<Variable>,
    given: Vec<Variable>,
    rows: Vec<Option<Vec<f64>>>,
}

impl CondFamily {
    pub fn new(target: Vec<Variable>, given: Vec<Variable>, rows: Vec<Option<Vec<f64>>>) -> Result<Self> {
        check_vars(&target)?;
        check_vars(&given)?;
        if target.iter().any(|t| given.iter().any(|g| g.name == t.name)) {
            return Err(Error::Invalid("target and given blocks overlap".into()));
        }
        if rows.len() != extent(&given) {
            return Err(Error::Invalid(format!(
                "expected {} conditional rows, got {}",
                extent(&given),
                rows.len()
            )));
        }
        let width = extent(&target);
        for row in rows.iter().flatten() {
            if row.len() != width {
                return Err(Error::Invalid(format!("row width {} != {}", row.len(), width)));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Invalid("conditional probabilities must be non-negative".into()));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > NORM_TOL {
                return Err(Error::Invalid(format!("conditional row sums to {s}, not 1")));
            }
        }
        Ok(Self { target, given, rows })
    }

    /// Single-variable family from fully defined rows.
    pub fn from_rows(target: Variable, given: Variable, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(vec![target], vec![given], rows.into_iter().map(Some).collect())
    }

    /// Like [`CondFamily::from_rows`] but each row is normalized first.
    pub fn from_weight_rows(target: Variable, given: Variable, rows: Vec<Vec<f64>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                if !(s > 0.0) {
                    return Err(Error::EmptyDistribution);
                }
                Ok(Some(r.iter().map(|w| w / s).collect()))
            })
            .collect::<Result<_>>()?;
        Self::new(vec![target], vec![given], rows)
    }

    pub fn target(&self) -> &[Variable] {
        &self.target
    }

    pub fn given(&self) -> &[Variable] {
        &self.given
    }

    pub fn rows(&self) -> &[Option<Vec<f64>>] {
        &self.rows
    }

    pub fn row(&self, given_flat: usize) -> Option<&[f64]> {
        self.rows.get(given_flat).and_then(|r| r.as_deref())
    }

    pub fn undefined_rows(&self) -> Vec<usize> {
        self.rows.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect()
    }

    /// Recombine with a marginal over the conditioning block: `p(g) * p(t | g)`.
    pub fn joint_with(&self, given_marginal: &ProbTable) -> Result<ProbTable> {
        let names: Vec<&str> = self.given.iter().map(Variable::name).collect();
        let pg = given_marginal.marginal(&names)?;
        if !pg.vars.iter().zip(&self.given).all(|(a, b)| a.same_support(b)) {
            return Err(Error::IncompatibleSupport("given marginal does not match conditioning block".into()));
        }
        let width = extent(&self.target);
        let mut probs = Vec::with_capacity(pg.probs.len() * width);
        for (g, &w) in pg.probs.iter().enumerate() {
            match self.row(g) {
                Some(row) => probs.extend(row.iter().map(|p| w * p)),
                None if w == 0.0 => probs.extend(std::iter::repeat_n(0.0, width)),
                None => {
                    return Err(Error::IncompatibleSupport(format!(
                        "undefined conditional row {g} has positive weight"
                    )))
                }
            }
        }
        let vars = self.given.iter().chain(&self.target).cloned().collect();
        ProbTable::from_weights(vars, probs)
    }
}

/// Joint of `(X, Y, Z)` with `X ⊥ Z | Y`: `p(x) p(y|x) p(z|y)`.
pub fn compose_ci(px: &ProbTable, py_x: &CondFamily, pz_y: &CondFamily) -> Result<ProbTable> {
    let compatible = |a: &[Variable], b: &[Variable]| a.len() == b.len() && a.iter().zip(b).all(|(u, v)| u.same_support(v));
    if !compatible(px.vars(), py_x.given()) {
        return Err(Error::IncompatibleSupport("p(x) does not match the conditioning block of p(y|x)".into()));
    }
    if !compatible(py_x.target(), pz_y.given()) {
        return Err(Error::IncompatibleSupport("target of p(y|x) does not match the conditioning block of p(z|y)".into()));
    }
    let ny = extent(py_x.target());
    let nz = extent(pz_y.target());
    let mut probs = Vec::with_capacity(px.probs.len() * ny * nz);
    for (x, &wx) in px.probs.iter().enumerate() {
        let row_y = match py_x.row(x) {
            Some(r) => r,
            None if wx == 0.0 => {
                probs.extend(std::iter::repeat_n(0.0, ny * nz));
                continue;
            }
            None => return Err(Error::IncompatibleSupport(format!("p(y|x) undefined at x-level {x}"))),
        };
        for (y, &wy) in row_y.iter().enumerate() {
            let w = wx * wy;
            match pz_y.row(y) {
                Some(row_z) => probs.extend(row_z.iter().map(|pz| w * pz)),
                None if w == 0.0 => probs.extend(std::iter::repeat_n(0.0, nz)),
                None => return Err(Error::IncompatibleSupport(format!("p(z|y) undefined at y-level {y}"))),
            }
        }
    }
    let vars: Vec<Variable> = px.vars().iter().chain(py_x.target()).chain(pz_y.target()).cloned().collect();
    check_vars(&vars)?;
    ProbTable::from_weights(vars, probs)
}

/// `a ⊥ b | c`: every `c`-slice of the conditional joint factorizes within `tol`.
pub fn check_ci(p: &ProbTable, a: &str, b: &str, c: &str, tol: f64) -> Result<bool> {
    if a == b || a == c || b == c {
        return Err(Error::Invalid("check_ci needs three distinct variables".into()));
    }
    let m = p.marginal(&[c, a, b])?;
    let d = m.dims();
    let (ka, kb) = (d[1], d[2]);
    for slice in m.probs.chunks(ka * kb) {
        let total: f64 = slice.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let row: Vec<f64> = (0..ka).map(|i| slice[i * kb..(i + 1) * kb].iter().sum::<f64>() / total).collect();
        let col: Vec<f64> = (0..kb).map(|j| (0..ka).map(|i| slice[i * kb + j]).sum::<f64>() / total).collect();
        for i in 0..ka {
            for j in 0..kb {
                if (slice[i * kb + j] / total - row[i] * col[j]).abs() > tol {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Marginal independence `a ⊥ b` within `tol` on cell probabilities.
pub fn check_independent(p: &ProbTable, a: &str, b: &str, tol: f64) -> Result<bool> {
    if a == b {
        return Err(Error::Invalid("independence check needs two distinct variables".into()));
    }
    let m = p.marginal(&[a, b])?;
    let d = m.dims();
    let row: Vec<f64> = (0..d[0]).map(|i| m.probs[i * d[1]..(i + 1) * d[1]].iter().sum()).collect();
    let col: Vec<f64> = (0..d[1]).map(|j| (0..d[0]).map(|i| m.probs[i * d[1] + j]).sum()).collect();
    Ok((0..d[0]).all(|i| (0..d[1]).all(|j| (m.probs[i * d[1] + j] - row[i] * col[j]).abs() <= tol)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy(probs: Vec<f64>) -> ProbTable {
        ProbTable::new(vec![Variable::indexed("X", 2), Variable::indexed("Y", 2)], probs).unwrap()
    }

    #[test]
    fn normalize_single_cell_and_empty() {
        let c = CountTable::new(vec![Variable::indexed("A", 1)], vec![5]).unwrap();
        assert_eq!(c.normalize().unwrap().probs(), &[1.0]);
        let z = CountTable::new(vec![Variable::indexed("A", 2)], vec![0, 0]).unwrap();
        let err = z.normalize().unwrap_err();
        assert_eq!(err.to_string(), "empty distribution");
    }

    #[test]
    fn rejects_bad_tables() {
        let v = vec![Variable::indexed("X", 2)];
        assert!(ProbTable::new(v.clone(), vec![0.5, 0.6]).is_err());
        assert!(ProbTable::new(v.clone(), vec![1.5, -0.5]).is_err());
        assert!(ProbTable::new(v, vec![1.0]).is_err());
        assert!(Variable::indexed("X", 3).with_scores(vec![0.0, 0.0, 1.0]).is_err());
        let dup = vec![Variable::indexed("X", 1), Variable::indexed("X", 1)];
        assert!(ProbTable::new(dup, vec![1.0]).is_err());
    }

    #[test]
    fn marginal_identity_and_errors() {
        let p = xy(vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(p.marginal(&["X", "Y"]).unwrap(), p);
        let t = p.marginal(&["Y", "X"]).unwrap();
        assert_eq!(t.get(&[1, 0]), 0.2);
        assert!(matches!(p.marginal(&[]), Err(Error::EmptySelection)));
        assert!(matches!(p.marginal(&["W"]), Err(Error::UnknownVariable(_))));
        let m = p.marginal(&["X"]).unwrap();
        assert!((m.probs()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn uniform_table_conditionals_are_uniform() {
        let p = xy(vec![0.25; 4]);
        let c = p.condition(&["Y"], &["X"]).unwrap();
        for r in c.rows() {
            assert_eq!(r.as_deref(), Some(&[0.5, 0.5][..]));
        }
        assert!(check_ci(
            &ProbTable::from_weights(
                vec![Variable::indexed("A", 2), Variable::indexed("B", 2), Variable::indexed("C", 2)],
                vec![1.0; 8]
            )
            .unwrap(),
            "A",
            "B",
            "C",
            1e-12
        )
        .unwrap());
    }

    #[test]
    fn zero_marginal_slices_are_flagged() {
        let p = xy(vec![0.0, 0.0, 0.5, 0.5]);
        let c = p.condition(&["Y"], &["X"]).unwrap();
        assert_eq!(c.undefined_rows(), vec![0]);
        let back = c.joint_with(&p).unwrap();
        assert_eq!(back.probs(), p.probs());
    }

    #[test]
    fn reflect_reverses_levels() {
        let p = xy(vec![0.1, 0.2, 0.3, 0.4]);
        let r = p.reflect("Y").unwrap();
        assert_eq!(r.get(&[0, 0]), 0.2);
        assert_eq!(r.var("Y").unwrap().scores(), &[-1.0, 0.0]);
        assert_eq!(r.reflect("Y").unwrap(), p);
    }

    #[test]
    fn compose_rejects_mismatched_support() {
        let px = ProbTable::new(vec![Variable::indexed("X", 2)], vec![0.5, 0.5]).unwrap();
        let py = CondFamily::from_rows(Variable::indexed("Y", 2), Variable::indexed("X", 2), vec![vec![0.5, 0.5]; 2]).unwrap();
        let pz = CondFamily::from_rows(Variable::indexed("Z", 2), Variable::indexed("Y", 3), vec![vec![0.5, 0.5]; 3]).unwrap();
        assert!(matches!(compose_ci(&px, &py, &pz), Err(Error::IncompatibleSupport(_))));
    }
}
