//! Adaptive Bayesian multiparameter estimation for a noisy photonic
//! rotation sensor.
//!
//! The sensor measures a rotation angle `theta` in `[0, pi)` through
//! interference fringes whose frequency is set by a selectable total
//! angular momentum `s` and whose contrast is an unknown per-control
//! visibility `V_s`. This crate provides:
//!
//! - the outcome likelihood model and resource accounting ([`model`]),
//! - a sequential Monte Carlo posterior over all five parameters with
//!   circular handling of the angle ([`ensemble`]),
//! - greedy adaptive selection of the next experiment by expected posterior
//!   variance ([`design`]),
//! - Fisher information, the optimized bound constant `C_G`, the
//!   median-to-mean factor `xi`, and reference precision curves
//!   ([`bounds`]),
//! - the estimation loop and precision sampling ([`estimate`]),
//! - resource-window clustering with bootstrap confidence intervals
//!   ([`cluster`]),
//! - frequency-based visibility calibration ([`calibrate`]).
//!
//! The crate is `no_std`-compatible (requires `alloc`); IO, file formats,
//! and the command-line front end live in the companion `qrot-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// Small fixed-size matrix and particle-array code reads better with
// indexed loops.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod bounds;
pub mod calibrate;
pub mod cluster;
pub mod design;
pub mod ensemble;
pub mod error;
pub mod estimate;
pub mod math;
pub mod model;

pub use bounds::{
    averaged_fisher, fisher_matrix, reference_curves, solve_c_g, xi_constant, AllocationVector,
    BoundSpec, FisherMatrix, ReferenceRow, XiMethod,
};
pub use calibrate::{visibility_estimate, FrequencyRecord, VisibilityEstimate};
pub use cluster::{
    bootstrap_ci, cluster, median_inplace, ClusterParams, ClusterWindow, CurveBuilder,
    TaggedSample, WindowCells,
};
pub use design::{
    evaluate_candidates, expected_variance, greedy_select, predictive_probability,
    CandidateEvaluation, DesignCache, WeightMatrix,
};
pub use ensemble::{Ensemble, PosteriorSummary, DEFAULT_PARTICLES, DEFAULT_SHRINKAGE};
pub use error::{Error, Result};
pub use estimate::{
    run_estimation, weighted_error, AbortReason, EstimationRun, OutcomeSource, PrecisionSample,
    RunOptions, SimulatedSource,
};
pub use model::{
    likelihood, resource_cost, sample_outcome, Basis, ControlSet, ControlSetting, ExperimentRecord,
    Outcome, ParameterPoint, ResourceLedger, RotationAngle, RunRecord, Visibility, CONTROL_COUNT,
};
