use thiserror::Error;

use crate::model::Basis;

/// Errors surfaced by the estimation and bound computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rotation angle {0} outside [0, pi)")]
    AngleOutOfRange(f64),
    #[error("visibility {0} outside [0, 1]")]
    VisibilityOutOfRange(f64),
    #[error("control values must be positive and strictly increasing")]
    InvalidControls,
    #[error("outcome must be +1 or -1, got {0}")]
    InvalidOutcome(i8),
    #[error("ensemble needs at least 2 particles, got {0}")]
    TooFewParticles(usize),
    #[error("particle weights must be non-negative and not all zero")]
    InvalidWeights,
    #[error("posterior weights underflowed to zero; resample or abort")]
    DegeneratePosterior,
    #[error("circular mean undefined: resultant length {0:.3e} below threshold")]
    UndefinedMean(f64),
    #[error("weight matrix entries must be finite and non-negative")]
    InvalidWeightMatrix,
    #[error("weight matrix must have at least one positive entry")]
    ZeroWeightMatrix,
    #[error(
        "visibility {value} on the boundary with {uses} uses: closed-form information is singular"
    )]
    SingularInformation { value: f64, uses: f64 },
    #[error("objective unbounded: a weighted parameter carries no information anywhere on the feasible set")]
    UnboundedObjective,
    #[error("allocation must be non-negative with sum_i s_i x_i = 1")]
    InvalidAllocation,
    #[error("calibration needs at least 2 experiments per polarization, got {0}")]
    InvalidCalibrationCount(u64),
    #[error("frequency {0} outside [0, 1]")]
    FrequencyOutOfRange(f64),
    #[error("outcome source exhausted for s={s} basis={basis:?}")]
    SourceExhausted { s: u32, basis: Basis },
    #[error("confidence interval undefined for fewer than 2 values")]
    UndefinedCi,
    #[error("{0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
