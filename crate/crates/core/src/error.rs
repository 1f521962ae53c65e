//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors reported by marginal construction, cost assembly, the solvers, the
/// exact oracle, and the bounds drivers.
///
/// Input-validation failures (bad weights, schema violations, oversized
/// instances) are distinguished from numerical failures (non-finite
/// intermediates, pivot limits) so a caller can map them to different exit
/// statuses.
#[derive(Debug, Error)]
pub enum Error {
    // ---- marginals -----------------------------------------------------
    #[error("sample list is empty")]
    EmptySamples,
    #[error("point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("weights invalid: {0}")]
    InvalidWeights(String),
    #[error("marginal system needs at least 2 margins, got {0}")]
    TooFewMargins(usize),
    #[error("margins must share one outcome dimension; margin {index} has d={found}, expected {expected}")]
    MixedDimensions {
        index: usize,
        expected: usize,
        found: usize,
    },

    // ---- CSV ingestion -------------------------------------------------
    #[error("csv schema: {0}")]
    Schema(String),
    #[error("unknown arm label '{0}' in arm ordering")]
    UnknownArm(String),
    #[error("row {row}: non-numeric outcome '{value}' in column {column}")]
    NonNumericOutcome {
        row: usize,
        column: String,
        value: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv parse: {0}")]
    Csv(#[from] csv::Error),

    // ---- cost specs and tensors ---------------------------------------
    #[error("cost spec invalid: {0}")]
    InvalidSpec(String),
    #[error("cost expression: {0}")]
    Expr(String),
    #[error("cost tensor would need {required} cells, cap is {cap}")]
    CellCapExceeded { required: usize, cap: usize },
    #[error("cost cell at index {index:?} is not finite")]
    NonFiniteCost { index: Vec<usize> },

    // ---- solvers -------------------------------------------------------
    #[error("cost tensor shape {cost:?} does not match marginal sizes {marginals:?}")]
    ShapeMismatch {
        cost: Vec<usize>,
        marginals: Vec<usize>,
    },
    #[error("non-finite intermediate at iteration {iteration}, margin {margin}")]
    NonFinite { iteration: u64, margin: usize },
    #[error("solver config invalid: {0}")]
    InvalidConfig(String),

    // ---- oracle --------------------------------------------------------
    #[error("exact LP limited to {cap} cells, instance has {required}")]
    OracleTooLarge { required: usize, cap: usize },
    #[error("exact LP did not terminate within {0} pivots")]
    PivotLimit(u64),
    #[error("exact LP reports an infeasible marginal system")]
    LpInfeasible,
    #[error("standard deviations must be positive, got {0}")]
    NonPositiveSigma(f64),

    // ---- bounds --------------------------------------------------------
    #[error("baseline bound requires an mw2, qmw, or contrast spec")]
    UnsupportedBaselineSpec,
    #[error("arm {index} needs at least 2 observations for a variance, got {found}")]
    TooFewObservations { index: usize, found: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    /// True when the error reflects a numerical failure inside an algorithm
    /// rather than invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::PivotLimit(_) | Error::LpInfeasible
        )
    }
}
