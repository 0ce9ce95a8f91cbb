//! Reference tables embedded verbatim.
//!
//! Variable order is always `(X, Y, Z)`: `X` the driver, `Y` the
//! intermediate (or stratifying) variable, `Z` the endpoint.

use serde::{Deserialize, Serialize};

use crate::dist::{compose_ci, CondFamily, CountTable, ProbTable, Variable};
use crate::error::{Error, Result};

/// Birch's three-way table: `X ⊥ Z | Y` and `X ⊥ Z` although `(X, Y)` and
/// `(Y, Z)` are both dependent.
pub fn birch_counts() -> CountTable {
    // cell order (x, y, z) row-major with z = 0, 1
    #[rustfmt::skip]
    let counts = vec![
        // X = 0
        1, 2,   2, 4,   4, 1,
        // X = 1
        2, 4,   1, 2,   4, 1,
    ];
    CountTable::new(
        vec![Variable::indexed("X", 2), Variable::indexed("Y", 3), Variable::indexed("Z", 2)],
        counts,
    )
    .expect("static fixture")
}

pub fn birch() -> ProbTable {
    birch_counts().normalize().expect("static fixture")
}

/// Women smokers by age group and twenty-year survival.
/// `X`: smoker (no, yes); `Y`: age group; `Z`: outcome (alive, dead).
pub fn smoke_counts() -> CountTable {
    #[rustfmt::skip]
    let counts = vec![
        // X = no:   (alive, dead) per age group
        213, 6,   180, 19,   81, 40,   28, 105,
        // X = yes
        174, 5,   198, 41,   64, 51,    7,  42,
    ];
    CountTable::new(
        vec![
            Variable::new("X", ["no", "yes"]),
            Variable::new("Y", ["18-34", "35-54", "55-64", "65+"]),
            Variable::new("Z", ["alive", "dead"]),
        ],
        counts,
    )
    .expect("static fixture")
}

pub fn smoke() -> ProbTable {
    smoke_counts().normalize().expect("static fixture")
}

/// The printed all-ages `(X, Z)` column of the smoking table.
///
/// It does not equal the collapse of [`smoke_counts`]: the nonsmoker deaths
/// sum to 170 across age groups but the column reads 230.
pub fn smoke_printed_margin() -> CountTable {
    CountTable::new(
        vec![Variable::new("X", ["no", "yes"]), Variable::new("Z", ["alive", "dead"])],
        vec![502, 230, 443, 139],
    )
    .expect("static fixture")
}

/// [`smoke_counts`] with 165 nonsmoker deaths at 65+ instead of 105. This one
/// cell change reproduces both the printed 65+ odds ratio (1.02) and the
/// printed all-ages column; it is not one of the named fixtures.
pub fn smoke_reconciled_counts() -> CountTable {
    let base = smoke_counts();
    let mut counts = base.counts().to_vec();
    // (X = no, Y = 65+, Z = dead)
    counts[7] = 165;
    CountTable::new(base.vars().to_vec(), counts).expect("static fixture")
}

/// A joint where `(X, Y)` and `(Y, Z)` are positively associated but `(X, Z)`
/// is negatively associated.
pub fn trans() -> ProbTable {
    #[rustfmt::skip]
    let probs = vec![
        // X = 0: (Y=0: Z=0, Z=1), (Y=1: Z=0, Z=1)
        0.15, 0.15,   0.08, 0.12,
        // X = 1
        0.12, 0.08,   0.15, 0.15,
    ];
    ProbTable::from_weights(
        vec![Variable::indexed("X", 2), Variable::indexed("Y", 2), Variable::indexed("Z", 2)],
        probs,
    )
    .expect("static fixture")
}

/// `X ~ Bernoulli(1/2)`, `e ~ Bernoulli(p)`, `Y = X + 2e(1 - X)`, `Z = 1{Y = 2}`.
pub fn ex1(p: f64) -> Result<ProbTable> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Invalid(format!("EX1 needs p in (0, 1/2), got {p}")));
    }
    let x = Variable::indexed("X", 2);
    let y = Variable::indexed("Y", 3);
    let z = Variable::indexed("Z", 2);
    let px = ProbTable::new(vec![x.clone()], vec![0.5, 0.5])?;
    let py_x = CondFamily::from_rows(y.clone(), x, vec![vec![1.0 - p, 0.0, p], vec![0.0, 1.0, 0.0]])?;
    let pz_y = CondFamily::from_rows(z, y, vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]])?;
    compose_ci(&px, &py_x, &pz_y)
}

/// A pair `p(y | x)`, `p(z | y)` to be composed under `X ⊥ Z | Y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPair {
    pub py_x: CondFamily,
    pub pz_y: CondFamily,
}

impl ConditionalPair {
    /// Compose with `P(X = x)` uniform over the levels of `X`.
    pub fn joint_uniform_x(&self) -> Result<ProbTable> {
        let x = self.py_x.given()[0].clone();
        let k = x.len();
        let px = ProbTable::from_weights(vec![x], vec![1.0; k])?;
        compose_ci(&px, &self.py_x, &self.pz_y)
    }
}

pub fn ex2() -> ConditionalPair {
    let x = Variable::indexed("X", 2);
    let y = Variable::indexed("Y", 3);
    let z = Variable::indexed("Z", 2);
    ConditionalPair {
        py_x: CondFamily::from_rows(y.clone(), x, vec![vec![0.6, 0.0, 0.4], vec![0.0, 1.0, 0.0]])
            .expect("static fixture"),
        pz_y: CondFamily::from_rows(z, y, vec![vec![0.9, 0.1], vec![0.9, 0.1], vec![0.1, 0.9]])
            .expect("static fixture"),
    }
}

pub fn ex3() -> ConditionalPair {
    let x = Variable::indexed("X", 2);
    let y = Variable::indexed("Y", 3);
    let z = Variable::indexed("Z", 2);
    ConditionalPair {
        py_x: CondFamily::from_rows(y.clone(), x, vec![vec![0.1, 0.1, 0.8], vec![0.05, 0.05, 0.9]])
            .expect("static fixture"),
        pz_y: CondFamily::from_rows(z, y, vec![vec![0.3, 0.7], vec![0.0, 1.0], vec![0.2, 0.8]])
            .expect("static fixture"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixtureName {
    Birch,
    Smoke,
    Trans,
    Ex1,
    Ex2,
    Ex3,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixtureInfo {
    pub name: &'static str,
    pub provenance: &'static str,
    pub description: &'static str,
}

pub const FIXTURES: [FixtureInfo; 6] = [
    FixtureInfo {
        name: "BIRCH",
        provenance: "published three-way count table with a collapsible null (X, Z) association",
        description: "X, Z independent marginally and given Y; (X,Y) and (Y,Z) dependent",
    },
    FixtureInfo {
        name: "SMOKE",
        provenance: "smoking status by 20-year survival counts in four age groups",
        description: "Yule-Simpson reversal of the smoker/death odds ratio",
    },
    FixtureInfo {
        name: "TRANS",
        provenance: "three-way probability table without conditional independence",
        description: "positive (X,Y) and (Y,Z) expectation associations, negative (X,Z)",
    },
    FixtureInfo {
        name: "EX1",
        provenance: "generative family Y = X + 2e(1-X), Z = 1{Y=2}, parameter p in (0,1/2)",
        description: "expectation association of Y on X cannot replace the distribution premise",
    },
    FixtureInfo {
        name: "EX2",
        provenance: "conditional pair p(y|x), p(z|y) with structural zeros",
        description: "E(Z|X=1)-E(Z|X=0) = -0.32 despite positive (Y on X) mean shift",
    },
    FixtureInfo {
        name: "EX3",
        provenance: "conditional pair p(y|x), p(z|y) with cov(Y,Z) > 0",
        description: "positive correlation does not transmit: E(Z|X=1)-E(Z|X=0) = -0.005",
    },
];

impl std::str::FromStr for FixtureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().trim_start_matches("FIX_") {
            "BIRCH" => Self::Birch,
            "SMOKE" => Self::Smoke,
            "TRANS" => Self::Trans,
            "EX1" => Self::Ex1,
            "EX2" => Self::Ex2,
            "EX3" => Self::Ex3,
            other => return Err(Error::Parse(format!("unknown fixture `{other}`"))),
        })
    }
}

/// Resolve a fixture spec such as `SMOKE`, `EX2` or `EX1:0.3` to a joint
/// table. Conditional-pair fixtures are composed with uniform `X`.
pub fn load(spec: &str) -> Result<ProbTable> {
    let (name, param) = match spec.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (spec, None),
    };
    let name: FixtureName = name.parse()?;
    if param.is_some() && name != FixtureName::Ex1 {
        return Err(Error::Parse(format!("fixture `{spec}` takes no parameter")));
    }
    match name {
        FixtureName::Birch => Ok(birch()),
        FixtureName::Smoke => Ok(smoke()),
        FixtureName::Trans => Ok(trans()),
        FixtureName::Ex1 => {
            let p = match param {
                Some(p) => p.parse().map_err(|_| Error::Parse(format!("bad EX1 parameter `{p}`")))?,
                None => 0.3,
            };
            ex1(p)
        }
        FixtureName::Ex2 => ex2().joint_uniform_x(),
        FixtureName::Ex3 => ex3().joint_uniform_x(),
    }
}
