//! Greedy adaptive experiment design.
//!
//! Before each photon the controller simulates all eight candidate
//! experiments (four controls times two bases), computes the expected
//! posterior scalar variance `Tr[G Cov]` under each, and picks the
//! candidate with the lowest expectation. The two-outcome expectation is
//! enumerated exactly; nothing is sampled.
//!
//! Particle positions are fixed between resamplings, so the per-candidate
//! fringe values and the circular-mean phases are cached in a
//! [`DesignCache`] and reused across photons. The cached path performs the
//! same floating-point operations in the same order as
//! `bayes_update` + `summarize`, so its variances agree bitwise with a
//! clone-and-recompute evaluation.

use alloc::vec;
use alloc::vec::Vec;

use crate::ensemble::{Ensemble, DIM, MEAN_RESULTANT_FLOOR};
use crate::error::{Error, Result};
use crate::math;
use crate::model::{
    fringe_phase, plus_probability, ControlSet, ControlSetting, Outcome, CONTROL_COUNT,
};

/// Diagonal weight matrix selecting which parameters count in the error.
///
/// Entry 0 weighs the rotation angle, entry `i + 1` the visibility of
/// control `i`. A zero entry marks a nuisance parameter. The all-zero
/// matrix is representable (it makes every variance vanish); layers that
/// need a non-trivial objective reject it separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMatrix {
    diag: [f64; DIM],
}

impl WeightMatrix {
    pub fn new(diag: [f64; DIM]) -> Result<Self> {
        if diag.iter().any(|&g| !g.is_finite() || g < 0.0) {
            return Err(Error::InvalidWeightMatrix);
        }
        Ok(WeightMatrix { diag })
    }

    /// Phase of interest, all visibilities nuisance.
    pub fn phase_only() -> Self {
        let mut diag = [0.0; DIM];
        diag[0] = 1.0;
        WeightMatrix { diag }
    }

    /// Phase plus the visibility of one control.
    pub fn phase_and_visibility(index: usize) -> Self {
        let mut diag = [0.0; DIM];
        diag[0] = 1.0;
        diag[index + 1] = 1.0;
        WeightMatrix { diag }
    }

    /// A single visibility of interest, everything else nuisance.
    pub fn visibility_only(index: usize) -> Self {
        let mut diag = [0.0; DIM];
        diag[index + 1] = 1.0;
        WeightMatrix { diag }
    }

    /// All five parameters weighted equally.
    pub fn all_parameters() -> Self {
        WeightMatrix { diag: [1.0; DIM] }
    }

    #[inline]
    pub fn diag(&self) -> &[f64; DIM] {
        &self.diag
    }

    #[inline]
    pub fn entry(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn has_positive_entry(&self) -> bool {
        self.diag.iter().any(|&g| g > 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        WeightMatrix::new(self.diag.map(|g| g * factor))
    }
}

/// Outcome of evaluating one candidate experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateEvaluation {
    pub setting: ControlSetting,
    pub expected_variance: f64,
    /// Predictive probabilities of `Plus` and `Minus`, in that order.
    pub predictive: [f64; 2],
}

/// Position-dependent tables reused across greedy steps.
#[derive(Debug, Default)]
pub struct DesignCache {
    stamp: Option<(u64, usize, [u32; CONTROL_COUNT])>,
    cos_fringe: [Vec<f64>; CONTROL_COUNT],
    sin_fringe: [Vec<f64>; CONTROL_COUNT],
    cos_mean: Vec<f64>,
    sin_mean: Vec<f64>,
    scratch: Vec<f64>,
}

impl DesignCache {
    pub fn new() -> Self {
        DesignCache::default()
    }

    /// Cached fringe values for a setting, when the cache matches the
    /// ensemble's current positions. Each value equals a fresh
    /// `cos/sin(2 s theta_k)` bitwise.
    pub fn fringe_table(
        &self,
        ensemble: &Ensemble,
        controls: &ControlSet,
        setting: ControlSetting,
    ) -> Option<&[f64]> {
        if self.stamp != Some((ensemble.revision(), ensemble.len(), controls.values())) {
            return None;
        }
        Some(match setting.basis {
            crate::model::Basis::B1 => &self.cos_fringe[setting.index],
            crate::model::Basis::B2 => &self.sin_fringe[setting.index],
        })
    }

    fn ensure(&mut self, ensemble: &Ensemble, controls: &ControlSet) {
        let stamp = (ensemble.revision(), ensemble.len(), controls.values());
        if self.stamp == Some(stamp) {
            return;
        }
        let thetas = ensemble.thetas();
        let n = thetas.len();
        for i in 0..CONTROL_COUNT {
            let s = controls.s(i);
            self.cos_fringe[i].clear();
            self.sin_fringe[i].clear();
            self.cos_fringe[i].reserve(n);
            self.sin_fringe[i].reserve(n);
            for &t in thetas {
                let phase = fringe_phase(s, t);
                self.cos_fringe[i].push(math::cos(phase));
                self.sin_fringe[i].push(math::sin(phase));
            }
        }
        self.cos_mean.clear();
        self.sin_mean.clear();
        self.cos_mean.reserve(n);
        self.sin_mean.reserve(n);
        for &t in thetas {
            let phase = 2.0 * t;
            self.cos_mean.push(math::cos(phase));
            self.sin_mean.push(math::sin(phase));
        }
        self.scratch = vec![0.0; n];
        self.stamp = Some(stamp);
    }
}

/// Marginal likelihood of an outcome under the current posterior,
/// `sum_k w_k p(o | setting, x_k)`.
pub fn predictive_probability(
    ensemble: &Ensemble,
    setting: ControlSetting,
    outcome: Outcome,
) -> f64 {
    let column = ensemble.visibilities(setting.index);
    let thetas = ensemble.thetas();
    let weights = ensemble.weights();
    let use_cos = matches!(setting.basis, crate::model::Basis::B1);
    let plus = matches!(outcome, Outcome::Plus);
    let mut total = 0.0;
    for k in 0..weights.len() {
        let phase = fringe_phase(setting.s, thetas[k]);
        let f = if use_cos {
            math::cos(phase)
        } else {
            math::sin(phase)
        };
        let p_plus = plus_probability(column[k], f);
        total += weights[k] * if plus { p_plus } else { 1.0 - p_plus };
    }
    total
}

/// One-step Bayes risk of the scalar variance for a single candidate:
/// `sum_o p(o) Tr[G Cov(posterior | o)]`. The ensemble is not mutated.
pub fn expected_variance(
    ensemble: &Ensemble,
    setting: ControlSetting,
    g: &WeightMatrix,
) -> Result<f64> {
    let thetas = ensemble.thetas();
    let n = thetas.len();
    let mut fringe = Vec::with_capacity(n);
    let use_cos = matches!(setting.basis, crate::model::Basis::B1);
    for &t in thetas {
        let phase = fringe_phase(setting.s, t);
        fringe.push(if use_cos {
            math::cos(phase)
        } else {
            math::sin(phase)
        });
    }
    let mut cos_mean = Vec::with_capacity(n);
    let mut sin_mean = Vec::with_capacity(n);
    for &t in thetas {
        let phase = 2.0 * t;
        cos_mean.push(math::cos(phase));
        sin_mean.push(math::sin(phase));
    }
    let mut scratch = vec![0.0; n];
    let eval = candidate_evaluation(
        ensemble,
        setting,
        g,
        &fringe,
        &cos_mean,
        &sin_mean,
        &mut scratch,
    )?;
    Ok(eval.expected_variance)
}

/// Evaluates all eight candidates in tie-break order.
pub fn evaluate_candidates(
    ensemble: &Ensemble,
    controls: &ControlSet,
    g: &WeightMatrix,
    cache: &mut DesignCache,
) -> Result<Vec<CandidateEvaluation>> {
    cache.ensure(ensemble, controls);
    let mut out = Vec::with_capacity(2 * CONTROL_COUNT);
    for setting in controls.candidates() {
        let fringe = match setting.basis {
            crate::model::Basis::B1 => &cache.cos_fringe[setting.index],
            crate::model::Basis::B2 => &cache.sin_fringe[setting.index],
        };
        out.push(candidate_evaluation(
            ensemble,
            setting,
            g,
            fringe,
            &cache.cos_mean,
            &cache.sin_mean,
            &mut cache.scratch,
        )?);
    }
    Ok(out)
}

/// Picks the candidate with the lowest expected variance. Ties break toward
/// the smaller control value, then basis `B1` (the candidate order).
pub fn greedy_select(
    ensemble: &Ensemble,
    controls: &ControlSet,
    g: &WeightMatrix,
    cache: &mut DesignCache,
) -> Result<ControlSetting> {
    cache.ensure(ensemble, controls);
    let mut best: Option<(f64, ControlSetting)> = None;
    for setting in controls.candidates() {
        let fringe = match setting.basis {
            crate::model::Basis::B1 => &cache.cos_fringe[setting.index],
            crate::model::Basis::B2 => &cache.sin_fringe[setting.index],
        };
        let eval = candidate_evaluation(
            ensemble,
            setting,
            g,
            fringe,
            &cache.cos_mean,
            &cache.sin_mean,
            &mut cache.scratch,
        )?;
        match best {
            Some((value, _)) if eval.expected_variance >= value => {}
            _ => best = Some((eval.expected_variance, setting)),
        }
    }
    Ok(best.expect("candidate set is never empty").1)
}

/// Shared kernel: posterior weights, predictive probabilities, and the
/// G-weighted variance for both hypothetical outcomes of one candidate.
///
/// Mirrors `bayes_update` followed by `summarize` operation for operation
/// (products, normalization by reciprocal multiply, accumulation order), so
/// the returned variance is bitwise identical to the clone-and-recompute
/// route. Coordinates with zero G-weight contribute exactly zero there and
/// are skipped here.
fn candidate_evaluation(
    ensemble: &Ensemble,
    setting: ControlSetting,
    g: &WeightMatrix,
    fringe: &[f64],
    cos_mean: &[f64],
    sin_mean: &[f64],
    scratch: &mut [f64],
) -> Result<CandidateEvaluation> {
    let weights = ensemble.weights();
    let thetas = ensemble.thetas();
    let column = ensemble.visibilities(setting.index);
    let n = weights.len();

    let mut predictive = [0.0; 2];
    let mut expected = 0.0;
    for (slot, outcome) in [(0usize, Outcome::Plus), (1usize, Outcome::Minus)] {
        let plus = matches!(outcome, Outcome::Plus);
        let mut total = 0.0;
        for k in 0..n {
            let p_plus = plus_probability(column[k], fringe[k]);
            let p = if plus { p_plus } else { 1.0 - p_plus };
            let q = weights[k] * p;
            scratch[k] = q;
            total += q;
        }
        predictive[slot] = total;
        if total <= 0.0 {
            // This outcome cannot occur under the posterior; it contributes
            // nothing to the expectation.
            continue;
        }
        let inv = 1.0 / total;
        for q in scratch.iter_mut() {
            *q *= inv;
        }

        let mut sigma2 = 0.0;
        let g0 = g.entry(0);
        if g0 > 0.0 {
            let mut c = 0.0;
            let mut s = 0.0;
            for k in 0..n {
                c += scratch[k] * cos_mean[k];
                s += scratch[k] * sin_mean[k];
            }
            let resultant = math::hypot(c, s);
            if resultant <= MEAN_RESULTANT_FLOOR {
                return Err(Error::UndefinedMean(resultant));
            }
            let mu = math::wrap_angle(0.5 * math::atan2(s, c));
            let mut var = 0.0;
            for k in 0..n {
                let d = math::signed_angle_delta(thetas[k], mu);
                var += scratch[k] * d * d;
            }
            sigma2 += g0 * var;
        }
        for i in 0..CONTROL_COUNT {
            let gi = g.entry(i + 1);
            if gi <= 0.0 {
                continue;
            }
            let values = ensemble.visibilities(i);
            let mut mean = 0.0;
            for k in 0..n {
                mean += scratch[k] * values[k];
            }
            let mut var = 0.0;
            for k in 0..n {
                let d = values[k] - mean;
                var += scratch[k] * d * d;
            }
            sigma2 += gi * var;
        }
        expected += total * sigma2;
    }

    Ok(CandidateEvaluation {
        setting,
        expected_variance: expected,
        predictive,
    })
}
