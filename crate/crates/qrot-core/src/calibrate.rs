//! Non-Bayesian visibility estimation from raw outcome frequencies.
//!
//! For a fixed angle and control, `nu` measurements per polarization basis
//! yield the frequencies `f0` (of the +1-labelled outcome in the cosine
//! basis) and `f_plus` (in the sine basis). The estimator
//! `sqrt((nu [(2 f0 - 1)^2 + (2 f+ - 1)^2] - 1) / (nu - 1))` removes the
//! finite-sample bias of the squared frequencies; its radicand can leave
//! `[0, 1]` by fluctuation, in which case the value clips to the boundary
//! and the estimate is flagged.

use crate::error::{Error, Result};
use crate::math;
use crate::model::Visibility;

/// Outcome frequencies for one (angle, control) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyRecord {
    pub f0: f64,
    pub f_plus: f64,
    /// Experiments per polarization basis.
    pub nu: u64,
}

impl FrequencyRecord {
    pub fn new(f0: f64, f_plus: f64, nu: u64) -> Result<Self> {
        for f in [f0, f_plus] {
            if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                return Err(Error::FrequencyOutOfRange(f));
            }
        }
        if nu < 2 {
            return Err(Error::InvalidCalibrationCount(nu));
        }
        Ok(FrequencyRecord { f0, f_plus, nu })
    }
}

/// A visibility estimate, flagged when the radicand fell outside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityEstimate {
    pub value: Visibility,
    pub clipped: bool,
}

/// Evaluates the frequency estimator; see the module docs for the formula.
pub fn visibility_estimate(record: &FrequencyRecord) -> Result<VisibilityEstimate> {
    if record.nu < 2 {
        return Err(Error::InvalidCalibrationCount(record.nu));
    }
    let nu = record.nu as f64;
    let c = 2.0 * record.f0 - 1.0;
    let s = 2.0 * record.f_plus - 1.0;
    let radicand = (nu * (c * c + s * s) - 1.0) / (nu - 1.0);
    if radicand < 0.0 {
        return Ok(VisibilityEstimate {
            value: Visibility::new(0.0)?,
            clipped: true,
        });
    }
    if radicand > 1.0 {
        return Ok(VisibilityEstimate {
            value: Visibility::new(1.0)?,
            clipped: true,
        });
    }
    Ok(VisibilityEstimate {
        value: Visibility::new(math::sqrt(radicand))?,
        clipped: false,
    })
}
