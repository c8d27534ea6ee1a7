use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("domain error: {0}")]
    Domain(String),
    /// An exact computation would leave the rationals.
    #[error("result is not rational: {0}")]
    Inexact(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("base point mismatch: {0} vs {1}")]
    BaseMismatch(String, String),
    #[error("critical point: first derivative vanishes at {0}")]
    CriticalPoint(String),
    #[error("jet order too small: need {needed}, have {have}")]
    OrderShortfall { needed: usize, have: usize },
    #[error("resonant weights: {0}")]
    Resonance(String),
    #[error("root not bracketed: {0}")]
    Bracket(String),
    #[error("excluded weight: {0}")]
    ExcludedWeight(String),
    #[error("no real root: {0}")]
    NoRealRoot(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
