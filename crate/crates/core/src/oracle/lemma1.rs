use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `h(y, a, r)` and the conditional pmf of `Y` given `(A, R)`, both dense.
/// `h` is laid out `[y][a][r]`, `pmf` as `[a][r][y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Instance {
    pub ky: usize,
    pub ka: usize,
    pub kr: usize,
    pub h: Vec<f64>,
    pub pmf: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Outcome {
    pub premises: bool,
    /// `E{h(Y,a,r) | a, r}` nondecreasing in `a` for every `r`.
    pub monotone: bool,
    /// Largest gap between direct summation and the telescoped form.
    pub identity_gap: f64,
}

impl Lemma1Instance {
    fn h(&self, y: usize, a: usize, r: usize) -> f64 {
        self.h[(y * self.ka + a) * self.kr + r]
    }

    fn pmf_row(&self, a: usize, r: usize) -> &[f64] {
        let start = (a * self.kr + r) * self.ky;
        &self.pmf[start..start + self.ky]
    }

    /// `P(Y > y_j | a, r)` for every `j`.
    pub fn survival(&self, a: usize, r: usize) -> Vec<f64> {
        let row = self.pmf_row(a, r);
        (0..self.ky).map(|j| row[j + 1..].iter().sum()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.ky == 0 || self.ka == 0 || self.kr == 0 {
            return Err(Error::Invalid("empty support".into()));
        }
        let n = self.ky * self.ka * self.kr;
        if self.h.len() != n || self.pmf.len() != n {
            return Err(Error::Invalid(format!("expected {n} entries in h and pmf")));
        }
        for a in 0..self.ka {
            for r in 0..self.kr {
                let row = self.pmf_row(a, r);
                if row.iter().any(|p| *p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::Invalid(format!("pmf at (a={a}, r={r}) is not a distribution")));
                }
            }
        }
        Ok(())
    }

    /// Direct `Σ_y h(y,a,r) f(y|a,r)`.
    pub fn direct(&self, a: usize, r: usize) -> f64 {
        self.pmf_row(a, r).iter().enumerate().map(|(y, p)| self.h(y, a, r) * p).sum()
    }

    /// `h(y_0) + Σ_{j≥1} [h(y_j) - h(y_{j-1})] S(y_{j-1})`.
    pub fn telescoped(&self, a: usize, r: usize) -> f64 {
        let s = self.survival(a, r);
        self.h(0, a, r) + (1..self.ky).map(|j| (self.h(j, a, r) - self.h(j - 1, a, r)) * s[j - 1]).sum::<f64>()
    }
}

pub fn check_lemma1(inst: &Lemma1Instance, tol: f64) -> Result<Lemma1Outcome> {
    inst.validate()?;
    let (ky, ka, kr) = (inst.ky, inst.ka, inst.kr);
    let mut premises = true;
    for r in 0..kr {
        for a in 0..ka {
            premises &= (1..ky).all(|y| inst.h(y, a, r) >= inst.h(y - 1, a, r) - tol);
            if a + 1 < ka {
                premises &= (0..ky).all(|y| inst.h(y, a + 1, r) >= inst.h(y, a, r) - tol);
                let (s0, s1) = (inst.survival(a, r), inst.survival(a + 1, r));
                premises &= s0.iter().zip(&s1).all(|(lo, hi)| *hi >= lo - tol);
            }
        }
    }
    let mut gap: f64 = 0.0;
    let mut monotone = true;
    for r in 0..kr {
        let means: Vec<f64> = (0..ka).map(|a| inst.direct(a, r)).collect();
        for (a, m) in means.iter().enumerate() {
            gap = gap.max((m - inst.telescoped(a, r)).abs());
        }
        monotone &= means.windows(2).all(|w| w[1] >= w[0] - tol);
    }
    Ok(Lemma1Outcome { premises, monotone, identity_gap: gap })
}

fn increments(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k)
        .scan(0.0, |acc, i| {
            if i > 0 && rng.random::<f64>() > 0.2 {
                *acc += rng.random::<f64>();
            }
            Some(*acc)
        })
        .collect()
}

fn random_survival(rng: &mut ChaCha8Rng, ky: usize) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..ky - 1).map(|_| rng.random::<f64>()).collect();
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.push(0.0);
    cuts
}

/// Premise-satisfying instance: `h = f(y) + g(a) + u(y) v(a) + c(r)` with
/// nondecreasing parts, and survival curves raised pointwise along `a`.
pub fn random_lemma1(rng: &mut ChaCha8Rng, ky: usize, ka: usize, kr: usize) -> Lemma1Instance {
    let (f, g, u, v) = (increments(rng, ky), increments(rng, ka), increments(rng, ky), increments(rng, ka));
    let c: Vec<f64> = (0..kr).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut h = vec![0.0; ky * ka * kr];
    for y in 0..ky {
        for a in 0..ka {
            for r in 0..kr {
                h[(y * ka + a) * kr + r] = f[y] + g[a] + u[y] * v[a] + c[r];
            }
        }
    }
    let mut pmf = vec![0.0; ky * ka * kr];
    for r in 0..kr {
        let mut surv = random_survival(rng, ky);
        for a in 0..ka {
            if a > 0 && rng.random::<f64>() > 0.2 {
                let other = random_survival(rng, ky);
                surv.iter_mut().zip(other).for_each(|(s, o)| *s = s.max(o));
            }
            let start = (a * kr + r) * ky;
            let mut prev = 1.0;
            for y in 0..ky {
                pmf[start + y] = prev - surv[y];
                prev = surv[y];
            }
        }
    }
    Lemma1Instance { ky, ka, kr, h, pmf }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn identity_and_monotone_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let inst = random_lemma1(&mut rng, 4, 3, 2);
            let out = check_lemma1(&inst, 1e-12).unwrap();
            assert!(out.premises && out.monotone);
            assert!(out.identity_gap < 1e-12);
        }
    }

    #[test]
    fn constant_h_gives_constant_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut inst = random_lemma1(&mut rng, 3, 3, 1);
        inst.h.iter_mut().for_each(|v| *v = 2.5);
        for a in 0..3 {
            assert!((inst.direct(a, 0) - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        let inst = Lemma1Instance { ky: 2, ka: 2, kr: 1, h: vec![0.0; 3], pmf: vec![0.5; 4] };
        assert!(check_lemma1(&inst, 1e-12).is_err());
    }
}
