use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty distribution")]
    EmptyDistribution,

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("empty variable selection")]
    EmptySelection,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("incompatible supports: {0}")]
    IncompatibleSupport(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("constraint too tight for {rule}: {rejected} proposals rejected without acceptance (acceptance rate so far {rate:.2e})")]
    ConstraintTooTight {
        rule: String,
        rejected: usize,
        rate: f64,
    },

    #[error("rank-deficient design: collinear columns {0:?}")]
    RankDeficient(Vec<String>),

    #[error("contradictory knowledge: {0}")]
    Contradiction(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
