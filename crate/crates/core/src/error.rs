//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph '{name}' is invalid: {violations:?}")]
    InvalidGraph {
        name: String,
        violations: Vec<String>,
    },

    #[error("flat index {alpha} out of range for a {n}x{m} matrix")]
    IndexOutOfRange { alpha: u64, n: u64, m: u64 },

    #[error("index arithmetic overflow for a {n}x{m} matrix")]
    IndexOverflow { n: u64, m: u64 },

    #[error("bank layout incomplete: {missing} slot(s) unwritten, first missing flat position {first}")]
    IncompleteLayout { missing: usize, first: u64 },

    #[error("write targets masked column {col} of APU (pe {pe}, row {apu_row}, col {apu_col})")]
    MaskedColumnWrite {
        pe: u32,
        apu_row: u32,
        apu_col: u32,
        col: u32,
    },

    #[error("binding infeasible: {0}")]
    PlanInfeasible(String),

    #[error("reports not comparable: {0}")]
    ReportMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
