use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator D not invertible")]
    OperatorNotInvertible,

    #[error("auxiliary problem not solvable (inf-sup violated)")]
    AuxiliaryNotSolvable,

    #[error("constraint operator not surjective")]
    ConstraintNotSurjective,

    #[error("singular linear system ({0})")]
    SingularSystem(&'static str),

    #[error("inconsistent initial value: constraint defect {defect:e} exceeds tolerance {tol:e}")]
    InconsistentInitialValue { defect: f64, tol: f64 },

    #[error("use solve_limit_system for eps = 0 (got eps = {0})")]
    NonPositiveEpsilon(f64),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("oracle requires pure-mode data (exponential coefficients must vanish)")]
    OracleRequiresPureModes,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step residual {residual:e} exceeds tolerance {tol:e} at t = {t}")]
    StepResidual { residual: f64, tol: f64, t: f64 },

    #[error("measure {measure} requires a {reference} reference trajectory")]
    MissingReference {
        measure: &'static str,
        reference: &'static str,
    },

    #[error(
        "insufficient data for rate estimate (n = {n}, measure {measure}: {valid} valid points)"
    )]
    InsufficientData {
        n: usize,
        measure: &'static str,
        valid: usize,
    },

    #[error("solve failed for n = {n}, eps = {eps}: {source}")]
    Sweep {
        n: usize,
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
