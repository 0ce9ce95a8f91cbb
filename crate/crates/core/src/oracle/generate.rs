use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrialConfig;
use crate::dist::{compose_ci, CondFamily, ProbTable, Variable};
use crate::error::{Error, Result};
use crate::transitivity::{check_rule, RuleId, TheoremVerdict};

/// Table with i.i.d. uniform cells, normalized. Uses the stream of trial 0.
pub fn random_table(cfg: &TrialConfig) -> Result<ProbTable> {
    cfg.validate()?;
    let mut rng = cfg.rng(0);
    uniform_table(&mut rng, &cfg.dims)
}

const NAMES: [&str; 6] = ["X", "Y", "Z", "W", "V", "U"];

fn vars(dims: &[usize]) -> Vec<Variable> {
    dims.iter().enumerate().map(|(i, &k)| Variable::indexed(NAMES.get(i).copied().unwrap_or("V"), k)).collect()
}

fn uniform_table(rng: &mut ChaCha8Rng, dims: &[usize]) -> Result<ProbTable> {
    let n: usize = dims.iter().product();
    // strictly positive so the table always normalizes
    let w = (0..n).map(|_| rng.random::<f64>().max(f64::MIN_POSITIVE)).collect();
    ProbTable::from_weights(vars(dims), w)
}

/// Which proposal family produced a candidate table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Proposal {
    Uniform,
    Chain,
    ZIndepYGivenX,
    LogLinear,
    IndependentXY,
    ExpFamZ,
}

fn sorted_scores(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut s: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Rows `exp(a_t + strength u_g v_t + noise)`; monotone in both indices up
/// to the noise, occasionally flat or fully random.
fn loglinear_rows(rng: &mut ChaCha8Rng, kg: usize, kt: usize) -> Vec<Vec<f64>> {
    let roll: f64 = rng.random();
    if roll < 0.1 {
        return (0..kg).map(|_| (0..kt).map(|_| rng.random::<f64>() + 1e-3).collect()).collect();
    }
    let strength = if roll < 0.25 { 0.0 } else { rng.random_range(0.0..3.0) };
    let noise = if rng.random::<bool>() { 0.0 } else { rng.random_range(0.0..0.3) };
    let (u, v) = (sorted_scores(rng, kg), sorted_scores(rng, kt));
    let a: Vec<f64> = (0..kt).map(|_| rng.random_range(-1.0..1.0)).collect();
    (0..kg)
        .map(|g| (0..kt).map(|t| (a[t] + strength * u[g] * v[t] + noise * rng.random_range(-1.0..1.0)).exp()).collect())
        .collect()
}

fn cond(rng: &mut ChaCha8Rng, target: Variable, given: Variable) -> Result<CondFamily> {
    let rows = loglinear_rows(rng, given.len(), target.len());
    CondFamily::from_weight_rows(target, given, rows)
}

fn marginal(rng: &mut ChaCha8Rng, v: Variable) -> Result<ProbTable> {
    let w = (0..v.len()).map(|_| rng.random_range(0.05..1.0)).collect();
    ProbTable::from_weights(vec![v], w)
}

/// `E(Z|y)` exactly affine in the `Y` scores: rows mix two fixed
/// distributions with weights affine in `y`.
fn linear_z_given_y(rng: &mut ChaCha8Rng, y: Variable, z: Variable) -> Result<CondFamily> {
    let (kz, ky) = (z.len(), y.len());
    let q0: Vec<f64> = (0..kz).map(|_| rng.random_range(0.05..1.0)).collect();
    let q1: Vec<f64> = (0..kz).map(|_| rng.random_range(0.05..1.0)).collect();
    let norm = |q: Vec<f64>| {
        let s: f64 = q.iter().sum();
        q.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    let (q0, q1) = (norm(q0), norm(q1));
    let lo = rng.random_range(0.0..0.5);
    let hi = rng.random_range(0.5..1.0);
    let rows = (0..ky)
        .map(|j| {
            let lam = lo + (hi - lo) * j as f64 / (ky - 1).max(1) as f64;
            q0.iter().zip(&q1).map(|(a, b)| (1.0 - lam) * a + lam * b).collect()
        })
        .collect();
    CondFamily::from_rows(z, y, rows)
}

fn chain(rng: &mut ChaCha8Rng, dims: &[usize], linear: bool) -> Result<ProbTable> {
    let [x, y, z]: [Variable; 3] = vars(dims).try_into().map_err(|_| Error::Invalid("need three variables".into()))?;
    let px = marginal(rng, x.clone())?;
    let py = cond(rng, y.clone(), x)?;
    let pz = if linear { linear_z_given_y(rng, y, z)? } else { cond(rng, z, y)? };
    compose_ci(&px, &py, &pz)
}

/// `p(x) p(y|x) p(z|x)`.
fn z_indep_y_given_x(rng: &mut ChaCha8Rng, dims: &[usize]) -> Result<ProbTable> {
    let (kx, ky, kz) = (dims[0], dims[1], dims[2]);
    let px = marginal(rng, Variable::indexed("X", kx))?;
    let py = loglinear_rows(rng, kx, ky);
    let pz = loglinear_rows(rng, kx, kz);
    let mut w = Vec::with_capacity(kx * ky * kz);
    for i in 0..kx {
        let (sy, sz): (f64, f64) = (py[i].iter().sum(), pz[i].iter().sum());
        for j in 0..ky {
            for k in 0..kz {
                w.push(px.probs()[i] * py[i][j] / sy * pz[i][k] / sz);
            }
        }
    }
    ProbTable::from_weights(vars(dims), w)
}

/// Log-linear joint with non-negative two- and three-way interactions of
/// sorted scores plus bounded noise.
fn loglinear_joint(rng: &mut ChaCha8Rng, dims: &[usize], independent_xy: bool) -> Result<ProbTable> {
    let (kx, ky, kz) = (dims[0], dims[1], dims[2]);
    let (u, v, s) = (sorted_scores(rng, kx), sorted_scores(rng, ky), sorted_scores(rng, kz));
    let mut g = || if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random_range(0.0..3.0) };
    let (gxy, gxz, gyz) = (if independent_xy { 0.0 } else { g() }, g(), g());
    let gxyz = if rng.random::<bool>() { 0.0 } else { rng.random_range(0.0..1.5) };
    let noise = if rng.random::<bool>() { 0.0 } else { rng.random_range(0.0..0.2) };
    let main: Vec<f64> = (0..kx + ky + kz).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut logw = Vec::with_capacity(kx * ky * kz);
    for i in 0..kx {
        for j in 0..ky {
            for k in 0..kz {
                let interaction = gxz * u[i] * s[k] + gyz * v[j] * s[k] + gxyz * u[i] * v[j] * s[k];
                logw.push(main[i] + main[kx + j] + main[kx + ky + k] + gxy * u[i] * v[j] + interaction + noise * rng.random_range(-1.0..1.0));
            }
        }
    }
    if !independent_xy {
        return ProbTable::from_weights(vars(dims), logw.into_iter().map(f64::exp).collect());
    }
    // renormalize every (x, y) row so that p(x, y) = p(x) p(y)
    let px = marginal(rng, Variable::indexed("X", kx))?;
    let py = marginal(rng, Variable::indexed("Y", ky))?;
    let mut w = Vec::with_capacity(logw.len());
    for (row, chunk) in logw.chunks(kz).enumerate() {
        let e: Vec<f64> = chunk.iter().map(|l| l.exp()).collect();
        let tot: f64 = e.iter().sum();
        let mass = px.probs()[row / ky] * py.probs()[row % ky];
        w.extend(e.iter().map(|c| mass * c / tot));
    }
    ProbTable::from_weights(vars(dims), w)
}

/// `p(x) q(z|x) r(y|x,z)` with `q(z|x) ∝ exp(θ_x z + c_z)`, so `Z | X` is an
/// exponential family in the `Z` scores by construction.
fn expfam_z(rng: &mut ChaCha8Rng, dims: &[usize]) -> Result<ProbTable> {
    let (kx, ky, kz) = (dims[0], dims[1], dims[2]);
    let px = marginal(rng, Variable::indexed("X", kx))?;
    let theta: Vec<f64> = if rng.random::<f64>() < 0.15 {
        vec![rng.random_range(-1.0..1.0); kx]
    } else {
        sorted_scores(rng, kx).into_iter().map(|t| 2.0 * t - 1.0).collect()
    };
    let c: Vec<f64> = (0..kz).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (u, v, s) = (sorted_scores(rng, kx), sorted_scores(rng, ky), sorted_scores(rng, kz));
    let (gxy, gzy) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
    let gxzy = if rng.random::<bool>() { 0.0 } else { rng.random_range(0.0..1.5) };
    let b: Vec<f64> = (0..ky).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise = if rng.random::<bool>() { 0.0 } else { rng.random_range(0.0..0.2) };
    let mut w = vec![0.0; kx * ky * kz];
    for i in 0..kx {
        let q: Vec<f64> = (0..kz).map(|k| (theta[i] * k as f64 + c[k]).exp()).collect();
        let qs: f64 = q.iter().sum();
        for k in 0..kz {
            let r: Vec<f64> = (0..ky)
                .map(|j| (b[j] + gxy * u[i] * v[j] + gzy * s[k] * v[j] + gxzy * u[i] * s[k] * v[j] + noise * rng.random_range(-1.0..1.0)).exp())
                .collect();
            let rs: f64 = r.iter().sum();
            for j in 0..ky {
                w[(i * ky + j) * kz + k] = px.probs()[i] * q[k] / qs * r[j] / rs;
            }
        }
    }
    ProbTable::from_weights(vars(dims), w)
}

/// One candidate table for `rule`'s premises.
pub(super) fn propose(rng: &mut ChaCha8Rng, rule: RuleId, dims: &[usize]) -> Result<(Proposal, ProbTable)> {
    let roll: f64 = rng.random();
    let pick = match rule {
        RuleId::T1 | RuleId::T2 | RuleId::T3 | RuleId::C1 if roll < 0.9 => Proposal::Chain,
        RuleId::T5 | RuleId::C6 | RuleId::T6 | RuleId::T7 | RuleId::C4 => match roll {
            r if r < 0.2 => Proposal::Chain,
            r if r < 0.4 => Proposal::ZIndepYGivenX,
            r if r < 0.9 => Proposal::LogLinear,
            _ => Proposal::Uniform,
        },
        RuleId::C5 if roll < 0.95 => Proposal::IndependentXY,
        RuleId::T8 if roll < 0.95 => Proposal::ExpFamZ,
        _ => Proposal::Uniform,
    };
    let table = match pick {
        Proposal::Uniform => uniform_table(rng, dims)?,
        Proposal::Chain => {
            let linear = rule == RuleId::C1 && rng.random::<bool>();
            chain(rng, dims, linear)?
        }
        Proposal::ZIndepYGivenX => z_indep_y_given_x(rng, dims)?,
        Proposal::LogLinear => loglinear_joint(rng, dims, false)?,
        Proposal::IndependentXY => loglinear_joint(rng, dims, true)?,
        Proposal::ExpFamZ => expfam_z(rng, dims)?,
    };
    Ok((pick, table))
}

pub(super) fn trial_dims(rng: &mut ChaCha8Rng, cfg: &TrialConfig) -> Vec<usize> {
    cfg.dims
        .iter()
        .map(|&d| if cfg.vary_dims && d > 2 { rng.random_range(2..=d) } else { d })
        .collect()
}

/// Draw proposals for trial `trial` until the rule's premise checks pass.
/// Returns the accepted table and the number of rejected proposals.
pub fn random_constrained(cfg: &TrialConfig, rule: RuleId, trial: u64) -> Result<(ProbTable, u64)> {
    draw_accepted(cfg, rule, trial).map(|(p, _, rejected)| (p, rejected))
}

pub(super) fn draw_accepted(cfg: &TrialConfig, rule: RuleId, trial: u64) -> Result<(ProbTable, TheoremVerdict, u64)> {
    cfg.validate()?;
    if cfg.dims.len() != 3 {
        return Err(Error::Invalid("rule sweeps need three variables".into()));
    }
    let mut rng = cfg.rng(trial);
    let mut dims = trial_dims(&mut rng, cfg);
    // the binary-endpoint corollary is gated off unless X or Z is binary
    if rule == RuleId::C6 && dims[0] > 2 && dims[2] > 2 {
        dims[2] = 2;
    }
    for rejected in 0..=cfg.max_rejects as u64 {
        let (_, p) = propose(&mut rng, rule, &dims)?;
        let v = check_rule(rule, &p, cfg.tol)?;
        if v.fires {
            return Ok((p, v, rejected));
        }
    }
    Err(Error::ConstraintTooTight { rule: rule.to_string(), rejected: cfg.max_rejects + 1, rate: 0.0 })
}
