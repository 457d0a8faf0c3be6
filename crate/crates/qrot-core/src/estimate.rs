//! The adaptive estimation loop.
//!
//! One run alternates greedy experiment selection, outcome acquisition
//! (simulated or replayed), Bayesian weight update, conditional resampling,
//! and precision sampling, until the resource budget or the photon cap is
//! reached. Aborted runs keep their partial data and carry a flag; they are
//! reported rather than silently dropped.

use alloc::vec::Vec;
use rand::Rng;

use crate::design::{greedy_select, DesignCache, WeightMatrix};
use crate::ensemble::{Ensemble, DEFAULT_PARTICLES, DEFAULT_SHRINKAGE, RESAMPLE_ESS_FRACTION};
use crate::error::{Error, Result};
use crate::math;
use crate::model::{
    sample_outcome, ControlSet, ControlSetting, ExperimentRecord, Outcome, ParameterPoint,
    ResourceLedger, RunRecord, CONTROL_COUNT,
};

/// Where outcomes come from: the simulator or a recorded pool.
pub trait OutcomeSource {
    fn next_outcome(&mut self, setting: &ControlSetting) -> Result<Outcome>;
}

/// Draws outcomes from the measurement model at a fixed true point.
pub struct SimulatedSource<R: Rng> {
    truth: ParameterPoint,
    rng: R,
}

impl<R: Rng> SimulatedSource<R> {
    pub fn new(truth: ParameterPoint, rng: R) -> Self {
        SimulatedSource { truth, rng }
    }
}

impl<R: Rng> OutcomeSource for SimulatedSource<R> {
    fn next_outcome(&mut self, setting: &ControlSetting) -> Result<Outcome> {
        Ok(sample_outcome(&mut self.rng, *setting, &self.truth))
    }
}

/// Knobs of a single estimation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub n_particles: usize,
    /// Resource budget `N_max`: the run stops at the first sample with
    /// `n >= budget`.
    pub budget: u64,
    /// Photon cap `K_max`.
    pub photon_cap: u64,
    pub shrinkage: f64,
    pub ess_fraction: f64,
}

impl RunOptions {
    pub fn new(budget: u64) -> Self {
        RunOptions {
            n_particles: DEFAULT_PARTICLES,
            budget,
            photon_cap: budget,
            shrinkage: DEFAULT_SHRINKAGE,
            ess_fraction: RESAMPLE_ESS_FRACTION,
        }
    }
}

/// Why a run ended early.
#[derive(Debug, Clone, PartialEq)]
pub enum AbortReason {
    DegeneratePosterior,
    UndefinedMean,
    SourceExhausted { s: u32, basis: crate::model::Basis },
}

/// One `(weighted squared error, cumulative resources)` pair, with the
/// per-control use counts at sampling time for usage profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionSample {
    pub delta_sq: f64,
    pub n: u64,
    pub nu: [u64; CONTROL_COUNT],
}

/// Output of one estimation run.
#[derive(Debug, Clone)]
pub struct EstimationRun {
    pub record: RunRecord,
    pub samples: Vec<PrecisionSample>,
    /// Point estimate after each photon, parallel to `samples`.
    pub estimates: Vec<ParameterPoint>,
    pub ledger: ResourceLedger,
    /// Final point estimate, when the posterior was still usable.
    pub estimate: Option<ParameterPoint>,
    pub abort: Option<AbortReason>,
}

/// G-weighted squared error with the wrapped angular metric:
/// `G_00 d(theta_hat, theta)^2 + sum_i G_ii (V_hat_i - V_i)^2`.
pub fn weighted_error(estimate: &ParameterPoint, truth: &ParameterPoint, g: &WeightMatrix) -> f64 {
    let d = math::signed_angle_delta(estimate.theta.radians(), truth.theta.radians());
    let mut total = g.entry(0) * d * d;
    for i in 0..CONTROL_COUNT {
        let dv = estimate.visibilities[i].value() - truth.visibilities[i].value();
        total += g.entry(i + 1) * dv * dv;
    }
    total
}

/// Runs one adaptive estimation against an outcome source.
///
/// `rng` drives the prior draw and the resampling noise; simulated outcomes
/// use the source's own stream, so a replay with the same `rng` reproduces
/// the greedy trajectory of the original run exactly.
pub fn run_estimation<S: OutcomeSource, R: Rng + ?Sized>(
    truth: &ParameterPoint,
    g: &WeightMatrix,
    controls: &ControlSet,
    options: &RunOptions,
    source: &mut S,
    rng: &mut R,
) -> Result<EstimationRun> {
    if options.budget == 0 {
        return Err(Error::InvalidParameter("budget must be positive"));
    }
    if !(0.0 < options.ess_fraction && options.ess_fraction <= 1.0) {
        return Err(Error::InvalidParameter("ess_fraction must be in (0, 1]"));
    }
    let mut ensemble = Ensemble::init_prior(options.n_particles, rng)?;
    let mut cache = DesignCache::new();
    let mut ledger = ResourceLedger::new(*controls);
    let mut records: Vec<ExperimentRecord> = Vec::new();
    let mut samples: Vec<PrecisionSample> = Vec::new();
    let mut estimates: Vec<ParameterPoint> = Vec::new();
    let mut estimate: Option<ParameterPoint> = None;
    let ess_threshold = options.ess_fraction * options.n_particles as f64;

    let mut abort: Option<AbortReason> = None;
    while ledger.total() < options.budget && (records.len() as u64) < options.photon_cap {
        let setting = match greedy_select(&ensemble, controls, g, &mut cache) {
            Ok(setting) => setting,
            Err(Error::UndefinedMean(_)) => {
                abort = Some(AbortReason::UndefinedMean);
                break;
            }
            Err(e) => return Err(e),
        };
        let outcome = match source.next_outcome(&setting) {
            Ok(outcome) => outcome,
            Err(Error::SourceExhausted { s, basis }) => {
                abort = Some(AbortReason::SourceExhausted { s, basis });
                break;
            }
            Err(e) => return Err(e),
        };
        let record = ExperimentRecord { setting, outcome };
        records.push(record);
        // greedy_select just validated the cache for these positions, so the
        // fringe table is present and equals fresh evaluation bitwise
        let updated = match cache.fringe_table(&ensemble, controls, setting) {
            Some(fringe) => ensemble.bayes_update_with_fringe(&record, fringe),
            None => ensemble.bayes_update(&record),
        };
        if updated.is_err() {
            abort = Some(AbortReason::DegeneratePosterior);
            break;
        }
        if ensemble.effective_sample_size() < ess_threshold {
            if let Err(e) = ensemble.resample(rng, options.shrinkage) {
                abort = match e {
                    Error::UndefinedMean(_) => Some(AbortReason::UndefinedMean),
                    _ => return Err(e),
                };
                break;
            }
        }
        ledger.record(&setting);
        let point = match ensemble.posterior_point() {
            Ok(point) => point,
            Err(Error::UndefinedMean(_)) => {
                abort = Some(AbortReason::UndefinedMean);
                break;
            }
            Err(e) => return Err(e),
        };
        samples.push(PrecisionSample {
            delta_sq: weighted_error(&point, truth, g),
            n: ledger.total(),
            nu: *ledger.nu(),
        });
        estimates.push(point);
        estimate = Some(point);
    }

    Ok(EstimationRun {
        record: RunRecord {
            records,
            true_point: Some(*truth),
        },
        samples,
        estimates,
        ledger,
        estimate,
        abort,
    })
}
