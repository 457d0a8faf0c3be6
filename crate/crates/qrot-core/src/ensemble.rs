//! Weighted particle representation of the Bayesian posterior.
//!
//! The angular coordinate lives on a circle of circumference pi, so the
//! circular mean is computed from `exp(2 i theta)` and deviations use the
//! signed wrapped difference on that circle. Visibilities are plain bounded
//! coordinates. Particle positions only change on resampling; Bayes updates
//! touch weights alone, which the experiment-design cache relies on.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;
use crate::model::{
    likelihood, ExperimentRecord, ParameterPoint, RotationAngle, Visibility, CONTROL_COUNT,
};

/// Particle count used by default throughout.
pub const DEFAULT_PARTICLES: usize = 5000;

/// Liu-West shrinkage factor used by the estimation loop.
pub const DEFAULT_SHRINKAGE: f64 = 0.98;

/// Resampling triggers when the effective sample size drops below this
/// fraction of the particle count.
pub const RESAMPLE_ESS_FRACTION: f64 = 0.5;

/// Below this resultant length the circular mean is considered undefined.
pub const MEAN_RESULTANT_FLOOR: f64 = 1e-12;

/// Dimension of the parameter vector (theta plus four visibilities).
pub const DIM: usize = 1 + CONTROL_COUNT;

/// Posterior moments under a weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: ParameterPoint,
    pub covariance: [[f64; DIM]; DIM],
    pub scalar_variance: f64,
}

/// Weighted particle ensemble over `(theta, V_1..V_4)`.
#[derive(Debug, Clone)]
pub struct Ensemble {
    theta: Vec<f64>,
    vis: [Vec<f64>; CONTROL_COUNT],
    weights: Vec<f64>,
    /// Bumped whenever particle positions change; lets caches detect staleness.
    revision: u64,
    /// Reusable update buffer.
    scratch: Vec<f64>,
}

impl Ensemble {
    /// Draws `n_p` particles i.i.d. from the uniform prior on
    /// `[0, pi) x [0, 1]^4` with uniform weights.
    pub fn init_prior<R: Rng + ?Sized>(n_p: usize, rng: &mut R) -> Result<Self> {
        if n_p < 2 {
            return Err(Error::TooFewParticles(n_p));
        }
        let mut theta = Vec::with_capacity(n_p);
        let mut vis: [Vec<f64>; CONTROL_COUNT] = core::array::from_fn(|_| Vec::with_capacity(n_p));
        for _ in 0..n_p {
            theta.push(core::f64::consts::PI * rng.random::<f64>());
            for column in vis.iter_mut() {
                column.push(rng.random::<f64>());
            }
        }
        let w = 1.0 / n_p as f64;
        Ok(Ensemble {
            theta,
            vis,
            weights: vec![w; n_p],
            revision: 0,
            scratch: Vec::new(),
        })
    }

    /// Builds an ensemble from explicit particles, e.g. a deterministic grid.
    /// Weights default to uniform and are normalized to sum to one.
    pub fn from_particles(points: &[ParameterPoint], weights: Option<&[f64]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewParticles(points.len()));
        }
        let n = points.len();
        let mut w = match weights {
            Some(w) => {
                if w.len() != n || w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                    return Err(Error::InvalidWeights);
                }
                w.to_vec()
            }
            None => vec![1.0; n],
        };
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidWeights);
        }
        let inv = 1.0 / total;
        for x in &mut w {
            *x *= inv;
        }
        Ok(Ensemble {
            theta: points.iter().map(|p| p.theta.radians()).collect(),
            vis: core::array::from_fn(|i| {
                points.iter().map(|p| p.visibilities[i].value()).collect()
            }),
            weights: w,
            revision: 0,
            scratch: Vec::new(),
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn thetas(&self) -> &[f64] {
        &self.theta
    }

    #[inline]
    pub fn visibilities(&self, index: usize) -> &[f64] {
        &self.vis[index]
    }

    #[inline]
    pub(crate) fn revision(&self) -> u64 {
        self.revision
    }

    pub fn particle(&self, k: usize) -> ParameterPoint {
        ParameterPoint::new(
            RotationAngle::wrapped(self.theta[k]),
            core::array::from_fn(|i| Visibility::clamped(self.vis[i][k])),
        )
    }

    /// Iterates over `(point, weight)` pairs, e.g. for snapshots.
    pub fn particles(&self) -> impl Iterator<Item = (ParameterPoint, f64)> + '_ {
        (0..self.len()).map(move |k| (self.particle(k), self.weights[k]))
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Multiplies weights by the record's likelihood and renormalizes.
    ///
    /// On total-weight underflow the update is retried in log space; if the
    /// posterior is still degenerate the ensemble is left unchanged and an
    /// error is returned so the caller can abort and flag the run.
    pub fn bayes_update(&mut self, record: &ExperimentRecord) -> Result<()> {
        let setting = record.setting;
        let use_cos = matches!(setting.basis, crate::model::Basis::B1);
        let mut fringe = Vec::with_capacity(self.theta.len());
        for &t in &self.theta {
            let phase = crate::model::fringe_phase(setting.s, t);
            fringe.push(if use_cos {
                math::cos(phase)
            } else {
                math::sin(phase)
            });
        }
        self.bayes_update_with_fringe(record, &fringe)
    }

    /// `bayes_update` with the per-particle fringe values supplied by the
    /// caller (e.g. from a design cache). The values must equal
    /// `cos/sin(2 s theta_k)` for the record's setting; the result is then
    /// bitwise identical to `bayes_update`.
    pub fn bayes_update_with_fringe(
        &mut self,
        record: &ExperimentRecord,
        fringe: &[f64],
    ) -> Result<()> {
        assert_eq!(fringe.len(), self.weights.len());
        let column = &self.vis[record.setting.index];
        let plus = matches!(record.outcome, crate::model::Outcome::Plus);

        let mut scratch = core::mem::take(&mut self.scratch);
        scratch.resize(self.weights.len(), 0.0);
        let mut total = 0.0;
        for k in 0..self.weights.len() {
            let p_plus = crate::model::plus_probability(column[k], fringe[k]);
            let p = if plus { p_plus } else { 1.0 - p_plus };
            let q = self.weights[k] * p;
            scratch[k] = q;
            total += q;
        }

        if total > 0.0 && total.is_finite() {
            let inv = 1.0 / total;
            for (w, &q) in self.weights.iter_mut().zip(scratch.iter()) {
                *w = q * inv;
            }
            self.scratch = scratch;
            return Ok(());
        }

        // Log-space retry: immune to product underflow, not to exact zeros.
        let mut max_lw = f64::NEG_INFINITY;
        for k in 0..self.weights.len() {
            let p_plus = crate::model::plus_probability(column[k], fringe[k]);
            let p = if plus { p_plus } else { 1.0 - p_plus };
            let lw = math::ln(self.weights[k]) + math::ln(p);
            scratch[k] = lw;
            if lw > max_lw {
                max_lw = lw;
            }
        }
        if !max_lw.is_finite() {
            self.scratch = scratch;
            return Err(Error::DegeneratePosterior);
        }
        let mut total = 0.0;
        for lw in scratch.iter_mut() {
            *lw = math::exp(*lw - max_lw);
            total += *lw;
        }
        if total <= 0.0 || !total.is_finite() {
            self.scratch = scratch;
            return Err(Error::DegeneratePosterior);
        }
        let inv = 1.0 / total;
        for (w, &q) in self.weights.iter_mut().zip(scratch.iter()) {
            *w = q * inv;
        }
        self.scratch = scratch;
        Ok(())
    }

    /// `1 / sum w_k^2`, between 1 and the particle count for normalized
    /// weights.
    pub fn effective_sample_size(&self) -> f64 {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for &w in &self.weights {
            sum += w;
            sum_sq += w * w;
        }
        (sum * sum) / sum_sq
    }

    /// Weighted circular mean of the angular coordinate on the pi-circle,
    /// `arg(sum_k w_k exp(2 i theta_k)) / 2` wrapped into `[0, pi)`.
    pub fn circular_mean(&self) -> Result<RotationAngle> {
        let (c, s) = self.mean_resultant();
        let resultant = math::hypot(c, s);
        if resultant <= MEAN_RESULTANT_FLOOR {
            return Err(Error::UndefinedMean(resultant));
        }
        Ok(RotationAngle::wrapped(0.5 * math::atan2(s, c)))
    }

    fn mean_resultant(&self) -> (f64, f64) {
        let mut c = 0.0;
        let mut s = 0.0;
        for k in 0..self.theta.len() {
            let phase = 2.0 * self.theta[k];
            c += self.weights[k] * math::cos(phase);
            s += self.weights[k] * math::sin(phase);
        }
        (c, s)
    }

    /// Weighted mean of one visibility coordinate.
    pub fn visibility_mean(&self, index: usize) -> f64 {
        let column = &self.vis[index];
        let mut m = 0.0;
        for k in 0..column.len() {
            m += self.weights[k] * column[k];
        }
        m
    }

    /// Current point estimate: circular mean for theta, weighted means for
    /// the visibilities.
    pub fn posterior_point(&self) -> Result<ParameterPoint> {
        let theta = self.circular_mean()?;
        Ok(ParameterPoint::new(
            theta,
            core::array::from_fn(|i| Visibility::clamped(self.visibility_mean(i))),
        ))
    }

    /// Mean vector and full covariance with wrapped angular deviations.
    pub(crate) fn moments(&self) -> Result<([f64; DIM], [[f64; DIM]; DIM])> {
        let mut mean = [0.0; DIM];
        mean[0] = self.circular_mean()?.radians();
        for i in 0..CONTROL_COUNT {
            mean[i + 1] = self.visibility_mean(i);
        }
        let mut cov = [[0.0; DIM]; DIM];
        let n = self.len();
        let mut dev = [0.0; DIM];
        for k in 0..n {
            let w = self.weights[k];
            dev[0] = math::signed_angle_delta(self.theta[k], mean[0]);
            for i in 0..CONTROL_COUNT {
                dev[i + 1] = self.vis[i][k] - mean[i + 1];
            }
            for i in 0..DIM {
                for j in i..DIM {
                    cov[i][j] += w * dev[i] * dev[j];
                }
            }
        }
        for i in 0..DIM {
            for j in 0..i {
                cov[i][j] = cov[j][i];
            }
        }
        Ok((mean, cov))
    }

    /// Posterior summary under a diagonal weight matrix: the scalar variance
    /// is `sum_i G_ii Cov_ii`.
    pub fn summarize(&self, g: &crate::design::WeightMatrix) -> Result<PosteriorSummary> {
        let (mean, cov) = self.moments()?;
        let mut scalar = 0.0;
        for (i, &gi) in g.diag().iter().enumerate() {
            scalar += gi * cov[i][i];
        }
        Ok(PosteriorSummary {
            mean: ParameterPoint::new(
                RotationAngle::wrapped(mean[0]),
                core::array::from_fn(|i| Visibility::clamped(mean[i + 1])),
            ),
            covariance: cov,
            scalar_variance: scalar,
        })
    }

    /// Liu-West resampling: parents drawn proportionally to the weights,
    /// shrunk toward the mean by `a` and perturbed with Gaussian noise of
    /// covariance `(1 - a^2) Cov`. The angular coordinate combines along the
    /// shortest wrapped path; visibilities reflect back into `[0, 1]`.
    /// Weights reset to uniform.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R, shrinkage: f64) -> Result<()> {
        if !(0.0 < shrinkage && shrinkage < 1.0) {
            return Err(Error::InvalidParameter("shrinkage must be in (0, 1)"));
        }
        let (mean, cov) = self.moments()?;
        let spread = 1.0 - shrinkage * shrinkage;
        let mut scaled = [[0.0; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                scaled[i][j] = spread * cov[i][j];
            }
        }
        let chol = cholesky(&scaled);

        let n = self.len();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            cumulative.push(acc);
        }
        let total = acc;

        let mut new_theta = Vec::with_capacity(n);
        let mut new_vis: [Vec<f64>; CONTROL_COUNT] =
            core::array::from_fn(|_| Vec::with_capacity(n));
        let mut z = [0.0; DIM];
        for _ in 0..n {
            let u = rng.random::<f64>() * total;
            let parent = cumulative.partition_point(|&c| c <= u).min(n - 1);
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(rng);
            }
            let mut noise = [0.0; DIM];
            for i in 0..DIM {
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += chol[i][j] * z[j];
                }
                noise[i] = acc;
            }
            let centered = math::signed_angle_delta(self.theta[parent], mean[0]);
            new_theta.push(math::wrap_angle(mean[0] + shrinkage * centered + noise[0]));
            for i in 0..CONTROL_COUNT {
                let v = mean[i + 1] + shrinkage * (self.vis[i][parent] - mean[i + 1]);
                new_vis[i].push(math::reflect_unit(v + noise[i + 1]));
            }
        }
        self.theta = new_theta;
        self.vis = new_vis;
        let w = 1.0 / n as f64;
        self.weights.iter_mut().for_each(|x| *x = w);
        self.revision += 1;
        Ok(())
    }

    /// Likelihood of an outcome at a single particle; used by oracles and
    /// debugging tools.
    pub fn particle_likelihood(&self, k: usize, record: &ExperimentRecord) -> f64 {
        likelihood(record.outcome, record.setting, &self.particle(k))
    }
}

/// Lower-triangular Cholesky factor with non-positive pivots zeroed, so a
/// semidefinite (or slightly indefinite from rounding) matrix maps to a
/// valid factor of a nearby PSD matrix.
fn cholesky(m: &[[f64; DIM]; DIM]) -> [[f64; DIM]; DIM] {
    let mut l = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in 0..=i {
            let mut acc = m[i][j];
            for k in 0..j {
                acc -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][j] = if acc > 0.0 { math::sqrt(acc) } else { 0.0 };
            } else {
                l[i][j] = if l[j][j] > 0.0 { acc / l[j][j] } else { 0.0 };
            }
        }
    }
    l
}
