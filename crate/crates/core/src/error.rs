use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("cell {cell} has zero mass")]
    ZeroMass { cell: String },
    #[error("cell {cell} is untrimmed: zero mass under both distributions")]
    Untrimmed { cell: String },
    #[error("instance size {size} exceeds cap {cap}")]
    CapExceeded { size: u64, cap: u64 },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("not a booster: {0}")]
    NotABooster(String),
    #[error("guarantee violated: {0}")]
    GuaranteeViolated(String),
    #[error("tester sides have no probability gap")]
    NoGap,
    #[error("enumeration needs {needed} candidates, budget is {budget}")]
    EnumerationCapExceeded { needed: u64, budget: u64 },
    #[error("booster oracle returned depth {depth}, limit is {limit}")]
    OracleDepthExceeded { depth: usize, limit: usize },
    #[error("no booster available for cell {cell}")]
    OracleMissing { cell: String },
    #[error("phase booster fails its certificate: {0}")]
    OracleNotBooster(String),
    #[error("degenerate truncation parameters: {0}")]
    DegenerateParams(String),
    #[error("tree queries settled sample {sample}")]
    QueriesSettledSample { sample: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { file: file.into(), line, msg: msg.into() }
    }

    /// Process exit code for the CLI: 2 parse, 3 cap, 4 guarantee, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::CapExceeded { .. } | Error::EnumerationCapExceeded { .. } => 3,
            Error::GuaranteeViolated(_)
            | Error::NotABooster(_)
            | Error::OracleNotBooster(_)
            | Error::NoGap => 4,
            _ => 1,
        }
    }
}
