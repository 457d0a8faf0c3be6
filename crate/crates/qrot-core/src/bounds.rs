//! Fisher information and precision bounds.
//!
//! `fisher_matrix` evaluates the closed-form Fisher information of the
//! binary fringe model at a fixed parameter point, with the per-control
//! measurement budget split evenly between the two polarization bases. Its
//! entries agree with the exact two-outcome summation
//! `I_ab = sum_basis (nu/2) sum_o (d_a p)(d_b p)/p` to rounding error.
//!
//! `averaged_fisher` and `solve_c_g` implement the published theta-averaged
//! information and the allocation optimization behind the median-error
//! reference bound `xi C_G / N`. Note that the published averaged
//! visibility entry is four times the theta-average of the per-theta
//! Fisher information above; the bound keeps the published normalization
//! (making it a looser, still valid, reference line) so the resulting
//! curves match the published ones.

use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::design::WeightMatrix;
use crate::ensemble::DIM;
use crate::error::{Error, Result};
use crate::math;
use crate::model::{fringe_phase, ControlSet, ParameterPoint, Visibility, CONTROL_COUNT};

/// Visibilities are clamped into this open interval inside bound formulas,
/// which are singular at 0 and 1.
const VISIBILITY_CLAMP: f64 = 1e-9;

/// Symmetric 5x5 Fisher information matrix over `(theta, V_1..V_4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    m: [[f64; DIM]; DIM],
}

impl FisherMatrix {
    pub fn zero() -> Self {
        FisherMatrix {
            m: [[0.0; DIM]; DIM],
        }
    }

    #[inline]
    pub fn entries(&self) -> &[[f64; DIM]; DIM] {
        &self.m
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = 0.0;
        for row in &self.m {
            for &v in row {
                acc += v * v;
            }
        }
        math::sqrt(acc)
    }

    /// Smallest eigenvalue by cyclic Jacobi rotations; the matrix is tiny so
    /// this converges in a handful of sweeps.
    pub fn min_eigenvalue(&self) -> f64 {
        let mut a = self.m;
        for _ in 0..60 {
            let mut off = 0.0;
            for i in 0..DIM {
                for j in (i + 1)..DIM {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..DIM {
                for q in (p + 1)..DIM {
                    if a[p][q] == 0.0 {
                        continue;
                    }
                    let diff = a[q][q] - a[p][p];
                    let t = if diff == 0.0 {
                        1.0
                    } else {
                        let phi = diff / (2.0 * a[p][q]);
                        let sign = if phi >= 0.0 { 1.0 } else { -1.0 };
                        sign / (math::abs(phi) + math::sqrt(phi * phi + 1.0))
                    };
                    let c = 1.0 / math::sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..DIM {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..DIM {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut min = a[0][0];
        for i in 1..DIM {
            if a[i][i] < min {
                min = a[i][i];
            }
        }
        min
    }
}

/// Closed-form Fisher information at `point` for `counts[i]` measurements
/// at control `i`, split evenly between the two bases. Counts may be
/// fractional (normalized allocations).
///
/// Controls with zero count contribute nothing. A visibility exactly on the
/// boundary `{0, 1}` with a positive count is rejected: the closed form is
/// not valid there and callers should clamp first.
pub fn fisher_matrix(
    point: &ParameterPoint,
    counts: &[f64; CONTROL_COUNT],
    controls: &ControlSet,
) -> Result<FisherMatrix> {
    for (i, &nu) in counts.iter().enumerate() {
        if !nu.is_finite() || nu < 0.0 {
            return Err(Error::InvalidParameter("counts must be non-negative"));
        }
        let v = point.visibilities[i].value();
        if nu > 0.0 && (v == 0.0 || v == 1.0) {
            return Err(Error::SingularInformation { value: v, uses: nu });
        }
    }
    let theta = point.theta.radians();
    let mut m = [[0.0; DIM]; DIM];
    for i in 0..CONTROL_COUNT {
        let nu = counts[i];
        if nu == 0.0 {
            continue;
        }
        let s = controls.s(i) as f64;
        let v = point.visibilities[i].value();
        let v2 = v * v;
        let phase = fringe_phase(controls.s(i), theta);
        let sn = math::sin(phase);
        let cs = math::cos(phase);
        let sn2 = sn * sn;
        let cs2 = cs * cs;
        let d1 = 1.0 - v2 * cs2; // cosine-basis denominator
        let d2 = 1.0 - v2 * sn2; // sine-basis denominator
        m[0][0] += 2.0 * nu * v2 * s * s * (sn2 / d1 + cs2 / d2);
        let cross = nu * v2 * v * s * sn * cs * (sn2 - cs2) / (d1 * d2);
        m[0][i + 1] = cross;
        m[i + 1][0] = cross;
        m[i + 1][i + 1] = 0.5 * nu * (cs2 / d1 + sn2 / d2);
    }
    Ok(FisherMatrix { m })
}

/// `1 - sqrt(1 - v^2)` evaluated without cancellation.
#[inline]
fn one_minus_root(v: f64) -> f64 {
    let root = math::sqrt(1.0 - v * v);
    (v * v) / (1.0 + root)
}

/// Published theta-averaged information, diagonal:
/// `E[I_11] = 4 sum_i x_i s_i^2 (1 - sqrt(1 - V_i^2))` and
/// `E[I_{i+1,i+1}] = 4 x_i (1 - sqrt(1 - V_i^2)) / (V_i^2 sqrt(1 - V_i^2))`.
///
/// The visibility entry is computed in the algebraically identical form
/// `4 x_i / ((1 + sqrt(1 - V^2)) sqrt(1 - V^2))`, which has no 0/0 at
/// `V = 0` and evaluates to the exact limit `2 x_i` there. `V = 1` with a
/// positive allocation is rejected (the information diverges).
pub fn averaged_fisher(
    x: &[f64; CONTROL_COUNT],
    visibilities: &[Visibility; CONTROL_COUNT],
    controls: &ControlSet,
) -> Result<FisherMatrix> {
    for (i, &xi) in x.iter().enumerate() {
        if !xi.is_finite() || xi < 0.0 {
            return Err(Error::InvalidParameter("allocations must be non-negative"));
        }
        if xi > 0.0 && visibilities[i].value() == 1.0 {
            return Err(Error::SingularInformation {
                value: 1.0,
                uses: xi,
            });
        }
    }
    let mut m = [[0.0; DIM]; DIM];
    for i in 0..CONTROL_COUNT {
        if x[i] == 0.0 {
            continue;
        }
        let v = visibilities[i].value();
        let s = controls.s(i) as f64;
        let root = math::sqrt(1.0 - v * v);
        m[0][0] += 4.0 * x[i] * s * s * one_minus_root(v);
        m[i + 1][i + 1] = 4.0 * x[i] / ((1.0 + root) * root);
    }
    Ok(FisherMatrix { m })
}

/// Normalized resource allocation: `x_i >= 0` with `sum_i s_i x_i = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationVector {
    x: [f64; CONTROL_COUNT],
}

impl AllocationVector {
    pub fn new(x: [f64; CONTROL_COUNT], controls: &ControlSet) -> Result<Self> {
        if x.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidAllocation);
        }
        let constraint: f64 = x
            .iter()
            .zip(controls.values())
            .map(|(&xi, s)| xi * s as f64)
            .sum();
        if math::abs(constraint - 1.0) > 1e-10 {
            return Err(Error::InvalidAllocation);
        }
        Ok(AllocationVector { x })
    }

    #[inline]
    pub fn values(&self) -> &[f64; CONTROL_COUNT] {
        &self.x
    }
}

/// The optimized bound constant together with its allocation and the
/// median-to-mean factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    pub c_g: f64,
    pub xi: f64,
    pub allocation: AllocationVector,
}

/// Minimizes `Tr(G E[I]^{-1})` over allocations `x >= 0` with
/// `sum_i s_i x_i = 1`, skipping zero-weight parameters in the trace.
///
/// The substitution `y_i = s_i x_i` turns the feasible set into the unit
/// simplex; the objective is convex there, so a coarse grid scan followed
/// by pairwise coordinate-descent refinement finds the global optimum. The
/// grid step is 0.02 and refinement runs to ~1e-12.
pub fn solve_c_g(
    g: &WeightMatrix,
    visibilities: &[Visibility; CONTROL_COUNT],
    controls: &ControlSet,
) -> Result<BoundSpec> {
    if !g.has_positive_entry() {
        return Err(Error::ZeroWeightMatrix);
    }
    // A weighted phase with no fringe contrast anywhere has identically zero
    // information over the whole feasible set.
    if g.entry(0) > 0.0 && visibilities.iter().all(|v| v.value() == 0.0) {
        return Err(Error::UnboundedObjective);
    }
    let clamped: [f64; CONTROL_COUNT] = core::array::from_fn(|i| {
        visibilities[i]
            .value()
            .clamp(VISIBILITY_CLAMP, 1.0 - VISIBILITY_CLAMP)
    });
    // phase information per unit y_i: 4 s_i a_i
    // visibility information per unit y_i: c_i = 4 / (s_i (1 + root) root)
    let phase_coef: [f64; CONTROL_COUNT] =
        core::array::from_fn(|i| 4.0 * controls.s(i) as f64 * one_minus_root(clamped[i]));
    let vis_coef: [f64; CONTROL_COUNT] = core::array::from_fn(|i| {
        let root = math::sqrt(1.0 - clamped[i] * clamped[i]);
        4.0 / (controls.s(i) as f64 * (1.0 + root) * root)
    });
    let g0 = g.entry(0);
    let objective = |y: &[f64; CONTROL_COUNT]| -> f64 {
        let mut total = 0.0;
        if g0 > 0.0 {
            let mut info = 0.0;
            for i in 0..CONTROL_COUNT {
                info += y[i] * phase_coef[i];
            }
            if info <= 0.0 {
                return f64::INFINITY;
            }
            total += g0 / info;
        }
        for i in 0..CONTROL_COUNT {
            let gi = g.entry(i + 1);
            if gi > 0.0 {
                let info = y[i] * vis_coef[i];
                if info <= 0.0 {
                    return f64::INFINITY;
                }
                total += gi / info;
            }
        }
        total
    };

    // coarse simplex grid
    let steps = 50usize;
    let mut best_y = [0.25; CONTROL_COUNT];
    let mut best = f64::INFINITY;
    for k1 in 0..=steps {
        for k2 in 0..=(steps - k1) {
            for k3 in 0..=(steps - k1 - k2) {
                let k4 = steps - k1 - k2 - k3;
                let y = [
                    k1 as f64 / steps as f64,
                    k2 as f64 / steps as f64,
                    k3 as f64 / steps as f64,
                    k4 as f64 / steps as f64,
                ];
                let f = objective(&y);
                if f < best {
                    best = f;
                    best_y = y;
                }
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::UnboundedObjective);
    }

    // pairwise mass-transfer refinement (golden-section line searches)
    let golden = 0.618_033_988_749_894_9;
    let mut y = best_y;
    for _ in 0..400 {
        let before = best;
        for i in 0..CONTROL_COUNT {
            for j in 0..CONTROL_COUNT {
                if i == j {
                    continue;
                }
                // move t of mass from j to i, t in [-y[i], y[j]]
                let mut lo = -y[i];
                let mut hi = y[j];
                if hi - lo < 1e-15 {
                    continue;
                }
                let eval = |t: f64, y: &[f64; CONTROL_COUNT]| {
                    let mut trial = *y;
                    trial[i] = (trial[i] + t).max(0.0);
                    trial[j] = (trial[j] - t).max(0.0);
                    (objective(&trial), trial)
                };
                let mut m1 = hi - golden * (hi - lo);
                let mut m2 = lo + golden * (hi - lo);
                let (mut f1, _) = eval(m1, &y);
                let (mut f2, _) = eval(m2, &y);
                for _ in 0..120 {
                    if f1 <= f2 {
                        hi = m2;
                        m2 = m1;
                        f2 = f1;
                        m1 = hi - golden * (hi - lo);
                        f1 = eval(m1, &y).0;
                    } else {
                        lo = m1;
                        m1 = m2;
                        f1 = f2;
                        m2 = lo + golden * (hi - lo);
                        f2 = eval(m2, &y).0;
                    }
                    if hi - lo < 1e-14 {
                        break;
                    }
                }
                let t = 0.5 * (lo + hi);
                let (f, trial) = eval(t, &y);
                if f < best {
                    best = f;
                    y = trial;
                }
            }
        }
        if before - best < 1e-13 * (1.0 + math::abs(best)) {
            break;
        }
    }

    // snap and renormalize so the constraint holds exactly
    let mut sum = 0.0;
    for yi in y.iter_mut() {
        if *yi < 1e-12 {
            *yi = 0.0;
        }
        sum += *yi;
    }
    for yi in y.iter_mut() {
        *yi /= sum;
    }
    let c_g = objective(&y);
    let x: [f64; CONTROL_COUNT] = core::array::from_fn(|i| y[i] / controls.s(i) as f64);
    Ok(BoundSpec {
        c_g,
        xi: xi_constant(XiMethod::ClosedForm),
        allocation: AllocationVector::new(x, controls)?,
    })
}

/// How to evaluate the median-to-mean conversion factor for a squared
/// centered Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XiMethod {
    /// Square of the standard normal quantile at 3/4. The primary path.
    ClosedForm,
    /// Empirical median of `draws` squared standard normal samples.
    MonteCarlo { draws: u64, seed: u64 },
}

/// Median of Z^2 for standard normal Z; approximately 0.4549.
pub fn xi_constant(method: XiMethod) -> f64 {
    match method {
        XiMethod::ClosedForm => {
            let q = math::normal_quantile(0.75);
            q * q
        }
        XiMethod::MonteCarlo { draws, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut samples: Vec<f64> = (0..draws)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * z
                })
                .collect();
            crate::cluster::median_inplace(&mut samples).expect("draws must be positive")
        }
    }
}

/// One row of the reference table: the median bound `xi C_G / N`, the
/// standard quantum limit `1/N`, and the Heisenberg limit `pi^2 / N^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub n: u64,
    pub bound: f64,
    pub sql: f64,
    pub hl: f64,
}

/// Evaluates the three reference curves on a grid of resource counts.
pub fn reference_curves(
    n_grid: &[u64],
    g: &WeightMatrix,
    visibilities: &[Visibility; CONTROL_COUNT],
    controls: &ControlSet,
) -> Result<Vec<ReferenceRow>> {
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::InvalidParameter("N grid must be positive"));
    }
    let spec = solve_c_g(g, visibilities, controls)?;
    let scale = spec.xi * spec.c_g;
    let pi2 = core::f64::consts::PI * core::f64::consts::PI;
    Ok(n_grid
        .iter()
        .map(|&n| {
            let nf = n as f64;
            ReferenceRow {
                n,
                bound: scale / nf,
                sql: 1.0 / nf,
                hl: pi2 / (nf * nf),
            }
        })
        .collect())
}
