use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside its mathematical domain.
    #[error("parameter domain: {0}")]
    ParamDomain(String),

    /// A data file failed to parse; carries the offending line when known.
    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A loaded model violated a structural invariant (e.g. radiality).
    #[error("validation: {0}")]
    Validation(String),

    /// Inconsistent or unsatisfiable configuration.
    #[error("configuration: {0}")]
    Config(String),

    /// A numerical routine failed to converge or produced non-finite values.
    #[error("numerical: {0}")]
    Numerical(String),

    /// An API contract was broken by the caller (infeasible action, shape mismatch).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
