//! Measurement model of the noisy rotation sensor.
//!
//! A probe photon prepared with total angular momentum `s` and measured in
//! one of two polarization bases produces a binary outcome whose fringe
//! oscillates as `cos(2 s theta)` or `sin(2 s theta)`, with contrast given
//! by the visibility `V_s` of the active control. Each photon at control
//! `s` costs `s` resources.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math;

/// Number of selectable controls (q-plate configurations).
pub const CONTROL_COUNT: usize = 4;

/// Polarization measurement basis.
///
/// `B1` projects on the cosine fringe, `B2` on the sine fringe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    B1,
    B2,
}

/// Binary measurement outcome, encoded as +1 / -1 everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    #[inline]
    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_value(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(Error::InvalidOutcome(other)),
        }
    }
}

/// Rotation angle in `[0, pi)`, the periodicity interval of the sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationAngle(f64);

impl RotationAngle {
    pub fn new(radians: f64) -> Result<Self> {
        if radians.is_finite() && (0.0..core::f64::consts::PI).contains(&radians) {
            Ok(RotationAngle(radians))
        } else {
            Err(Error::AngleOutOfRange(radians))
        }
    }

    /// Wraps an arbitrary finite angle into the fundamental interval.
    pub fn wrapped(radians: f64) -> Self {
        RotationAngle(math::wrap_angle(radians))
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }
}

/// Fringe visibility in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visibility(f64);

impl Visibility {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Visibility(value))
        } else {
            Err(Error::VisibilityOutOfRange(value))
        }
    }

    /// Clamps an arbitrary finite value into `[0, 1]`.
    pub fn clamped(value: f64) -> Self {
        Visibility(value.clamp(0.0, 1.0))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// The five unknowns: rotation angle plus one visibility per control,
/// ordered by control index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterPoint {
    pub theta: RotationAngle,
    pub visibilities: [Visibility; CONTROL_COUNT],
}

impl ParameterPoint {
    pub fn new(theta: RotationAngle, visibilities: [Visibility; CONTROL_COUNT]) -> Self {
        ParameterPoint {
            theta,
            visibilities,
        }
    }

    #[inline]
    pub fn visibility(&self, index: usize) -> Visibility {
        self.visibilities[index]
    }
}

/// The fixed list of available total angular momenta, one per control index.
///
/// The default set matches the hardware this model was built around; bound
/// and design computations read the values from here rather than hard-coding
/// them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlSet {
    s: [u32; CONTROL_COUNT],
}

impl ControlSet {
    pub const DEFAULT: ControlSet = ControlSet { s: [1, 2, 11, 51] };

    /// Values must be positive and strictly increasing so that "smaller s"
    /// coincides with "smaller index" in tie-breaking.
    pub fn new(s: [u32; CONTROL_COUNT]) -> Result<Self> {
        if s[0] == 0 || s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidControls);
        }
        Ok(ControlSet { s })
    }

    #[inline]
    pub fn s(&self, index: usize) -> u32 {
        self.s[index]
    }

    #[inline]
    pub fn values(&self) -> [u32; CONTROL_COUNT] {
        self.s
    }

    /// Index of a given `s` value, if it belongs to the set.
    pub fn index_of(&self, s: u32) -> Option<usize> {
        self.s.iter().position(|&v| v == s)
    }

    #[inline]
    pub fn setting(&self, index: usize, basis: Basis) -> ControlSetting {
        ControlSetting {
            index,
            s: self.s[index],
            basis,
        }
    }

    /// The eight candidate experiments, ordered by control index, `B1`
    /// before `B2`. This is also the tie-break order of the greedy design.
    pub fn candidates(&self) -> impl Iterator<Item = ControlSetting> + '_ {
        (0..CONTROL_COUNT)
            .flat_map(move |i| [self.setting(i, Basis::B1), self.setting(i, Basis::B2)].into_iter())
    }
}

impl Default for ControlSet {
    fn default() -> Self {
        ControlSet::DEFAULT
    }
}

/// One chosen experiment: which control and which polarization basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlSetting {
    pub index: usize,
    pub s: u32,
    pub basis: Basis,
}

/// One photon's experiment choice and measured outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentRecord {
    pub setting: ControlSetting,
    pub outcome: Outcome,
}

/// An ordered run of experiments, optionally carrying the simulation truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub records: Vec<ExperimentRecord>,
    pub true_point: Option<ParameterPoint>,
}

impl RunRecord {
    /// Total resources `N = sum_k s_k` consumed by the run.
    pub fn resource_cost(&self) -> u64 {
        resource_cost(&self.records)
    }

    /// Number of photons `K` in the run.
    pub fn photon_count(&self) -> usize {
        self.records.len()
    }
}

/// Total resources of a record sequence; zero for an empty slice.
pub fn resource_cost(records: &[ExperimentRecord]) -> u64 {
    records.iter().map(|r| u64::from(r.setting.s)).sum()
}

/// Running per-control use counts with the exact resource total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceLedger {
    controls: ControlSet,
    nu: [u64; CONTROL_COUNT],
    total: u64,
}

impl ResourceLedger {
    pub fn new(controls: ControlSet) -> Self {
        ResourceLedger {
            controls,
            nu: [0; CONTROL_COUNT],
            total: 0,
        }
    }

    pub fn record(&mut self, setting: &ControlSetting) {
        self.nu[setting.index] += 1;
        self.total += u64::from(setting.s);
        debug_assert_eq!(self.total, self.recompute_total());
    }

    /// Recomputes `sum_i nu_i s_i` from scratch.
    pub fn recompute_total(&self) -> u64 {
        self.nu
            .iter()
            .zip(self.controls.values())
            .map(|(&n, s)| n * u64::from(s))
            .sum()
    }

    #[inline]
    pub fn nu(&self) -> &[u64; CONTROL_COUNT] {
        &self.nu
    }

    #[inline]
    pub fn total(&self) -> u64 {
        self.total
    }

    #[inline]
    pub fn photon_count(&self) -> u64 {
        self.nu.iter().sum()
    }
}

/// Fringe phase argument; every likelihood evaluation in the crate goes
/// through this single expression so cached and direct paths agree bitwise.
#[inline]
pub(crate) fn fringe_phase(s: u32, theta: f64) -> f64 {
    2.0 * s as f64 * theta
}

/// Fringe value for a setting at angle `theta`: the cosine of the phase in
/// basis `B1`, the sine in `B2`.
#[inline]
pub(crate) fn fringe(setting: ControlSetting, theta: f64) -> f64 {
    let phase = fringe_phase(setting.s, theta);
    match setting.basis {
        Basis::B1 => math::cos(phase),
        Basis::B2 => math::sin(phase),
    }
}

/// Probability of `Outcome::Plus` given visibility and fringe value.
///
/// The minus probability is defined as `1 - plus`, which makes the two
/// outcome probabilities sum to exactly 1.0 in floating point.
#[inline]
pub(crate) fn plus_probability(visibility: f64, fringe: f64) -> f64 {
    0.5 + 0.5 * (visibility * fringe)
}

/// Outcome likelihood `p(o | setting, point) = (1 + o V_s fringe) / 2`.
pub fn likelihood(outcome: Outcome, setting: ControlSetting, point: &ParameterPoint) -> f64 {
    let v = point.visibilities[setting.index].value();
    let plus = plus_probability(v, fringe(setting, point.theta.radians()));
    match outcome {
        Outcome::Plus => plus,
        Outcome::Minus => 1.0 - plus,
    }
}

/// Draws one outcome from the model. Deterministic given the RNG state.
pub fn sample_outcome<R: Rng + ?Sized>(
    rng: &mut R,
    setting: ControlSetting,
    point: &ParameterPoint,
) -> Outcome {
    let plus = plus_probability(
        point.visibilities[setting.index].value(),
        fringe(setting, point.theta.radians()),
    );
    if rng.random::<f64>() < plus {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}
