use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    Dimension { what: &'static str, got: usize, expected: usize },

    #[error("matrix {name} is not symmetric: |M[{i},{j}] - M[{j},{i}]| = {deviation:e}")]
    NotSymmetric { name: &'static str, i: usize, j: usize, deviation: f64 },

    #[error("width matrix B is not positive definite: Cholesky pivot {index} = {pivot:e}, smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveDefinite { index: usize, pivot: f64, min_eigenvalue: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown {kind} '{name}' (available: {available})")]
    Unknown { kind: &'static str, name: String, available: String },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
