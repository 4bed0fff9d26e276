use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimensions n = {n}, m = {m}: the model requires n - m >= 2")]
    InvalidDimensions { n: usize, m: usize },

    #[error("dimension mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    DimensionMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pole in the denominator Pochhammer symbol (b = {b}, row {row}, column {col})")]
    Pole { b: f64, row: usize, col: usize },

    #[error("hypergeometric series did not converge (terms used: {terms_used}){}", point_note(.point))]
    NonConvergence {
        terms_used: usize,
        point: Option<String>,
    },

    #[error("matrix is rank deficient")]
    RankDeficient,

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("degenerate point: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),
}

fn point_note(point: &Option<String>) -> String {
    match point {
        Some(p) => format!(" at {p}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
