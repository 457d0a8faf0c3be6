//! Clustering of precision samples into resource windows and the median
//! figure of merit with bootstrap confidence intervals.
//!
//! Runs emit one `(error, n)` sample per photon at stochastic resource
//! counts, so samples are grouped into windows of width `delta_n` above a
//! cutoff. Within a window each run's per-angle samples are averaged, the
//! per-run values are averaged across angles (a run only contributes where
//! every angle contributed), and the reported error is the median of those
//! per-run values.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};

/// Window layout: width `delta_n`, samples at `n <= min_n` excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterParams {
    pub delta_n: u64,
    pub min_n: u64,
}

impl ClusterParams {
    pub const DEFAULT: ClusterParams = ClusterParams {
        delta_n: 50,
        min_n: 100,
    };

    pub fn new(delta_n: u64, min_n: u64) -> Result<Self> {
        if delta_n == 0 {
            return Err(Error::InvalidParameter("delta_n must be at least 1"));
        }
        Ok(ClusterParams { delta_n, min_n })
    }

    /// Window holding resource count `n`, or `None` when excluded. Window
    /// `k` spans `[min_n + k delta_n, min_n + (k+1) delta_n)`, with the
    /// `n <= min_n` exclusion carving the left edge off window 0.
    pub fn window_index(&self, n: u64) -> Option<usize> {
        if n <= self.min_n {
            return None;
        }
        Some(((n - self.min_n) / self.delta_n) as usize)
    }

    pub fn window_center(&self, index: usize) -> f64 {
        (self.min_n + index as u64 * self.delta_n) as f64 + self.delta_n as f64 / 2.0
    }
}

/// One precision sample tagged with its run and angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedSample {
    pub run_id: u32,
    pub angle_id: u32,
    pub n: u64,
    pub delta_sq: f64,
}

/// One clustered window before/after confidence intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterWindow {
    pub index: usize,
    pub n_center: f64,
    /// Per-run values: within-window mean per angle, averaged over angles.
    pub values: Vec<f64>,
    pub median: f64,
    /// Raw retained samples that landed in this window.
    pub raw_count: usize,
}

/// Within-window sums for one `(run, angle)` precision series: the unit of
/// aggregation that campaigns can build in parallel and merge later.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowCells {
    cells: BTreeMap<usize, (f64, u32)>,
}

impl WindowCells {
    pub fn new() -> Self {
        WindowCells::default()
    }

    /// Adds one `(delta_sq, n)` sample; excluded samples are dropped.
    pub fn add(&mut self, params: ClusterParams, n: u64, delta_sq: f64) {
        if let Some(window) = params.window_index(n) {
            let cell = self.cells.entry(window).or_insert((0.0, 0));
            cell.0 += delta_sq;
            cell.1 += 1;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Retained raw sample count.
    pub fn raw_count(&self) -> usize {
        self.cells.values().map(|&(_, c)| c as usize).sum()
    }
}

/// Merges per-(run, angle) series into the clustered median curve.
pub struct CurveBuilder {
    params: ClusterParams,
    n_angles: u32,
    /// (window, run) -> (sum of per-angle means, contributing angles)
    composites: BTreeMap<(usize, u32), (f64, u32)>,
    raw_counts: BTreeMap<usize, usize>,
}

impl CurveBuilder {
    pub fn new(params: ClusterParams, n_angles: u32) -> Self {
        CurveBuilder {
            params,
            n_angles,
            composites: BTreeMap::new(),
            raw_counts: BTreeMap::new(),
        }
    }

    /// Feeds one run/angle series. Call in a fixed order for reproducible
    /// floating-point accumulation.
    pub fn add_series(&mut self, run_id: u32, angle_id: u32, cells: &WindowCells) {
        let _ = angle_id;
        for (&window, &(sum, count)) in &cells.cells {
            let entry = self.composites.entry((window, run_id)).or_insert((0.0, 0));
            entry.0 += sum / count as f64;
            entry.1 += 1;
            *self.raw_counts.entry(window).or_insert(0) += count as usize;
        }
    }

    /// Produces the ordered window list. A run contributes to a window only
    /// when all of its angles did; empty windows are omitted.
    pub fn finish(self) -> Vec<ClusterWindow> {
        let mut windows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for ((window, _run), (sum, angles)) in &self.composites {
            if *angles == self.n_angles {
                windows
                    .entry(*window)
                    .or_default()
                    .push(sum / self.n_angles as f64);
            }
        }
        windows
            .into_iter()
            .map(|(index, values)| {
                let mut copy = values.clone();
                let median = median_inplace(&mut copy).expect("window is non-empty");
                ClusterWindow {
                    index,
                    n_center: self.params.window_center(index),
                    values,
                    median,
                    raw_count: self.raw_counts.get(&index).copied().unwrap_or(0),
                }
            })
            .collect()
    }
}

/// Groups samples into windows and computes per-window medians.
///
/// A run contributes one value to a window only when all `n_angles` of its
/// per-angle series have at least one sample there; empty windows are
/// omitted.
pub fn cluster(
    samples: &[TaggedSample],
    n_angles: u32,
    params: ClusterParams,
) -> Vec<ClusterWindow> {
    let mut series: BTreeMap<(u32, u32), WindowCells> = BTreeMap::new();
    for s in samples {
        series
            .entry((s.run_id, s.angle_id))
            .or_default()
            .add(params, s.n, s.delta_sq);
    }
    let mut builder = CurveBuilder::new(params, n_angles);
    for ((run, angle), cells) in &series {
        builder.add_series(*run, *angle, cells);
    }
    builder.finish()
}

/// Median (average of the two central order statistics for even lengths).
/// Reorders the slice. Returns `None` on empty input or any NaN.
pub fn median_inplace(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mid = n / 2;
    let (low, upper_mid, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        Some(*upper_mid)
    } else {
        let lower_mid = low.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (lower_mid + *upper_mid))
    }
}

/// Percentile-bootstrap confidence interval for the median.
///
/// Resamples with replacement, recomputes the median each time, and returns
/// the empirical `(1-confidence)/2` and `1-(1-confidence)/2` quantiles.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    values: &[f64],
    resamples: u32,
    confidence: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::UndefinedCi);
    }
    if !(0.0 < confidence && confidence < 1.0) {
        return Err(Error::InvalidParameter("confidence must be in (0, 1)"));
    }
    if resamples == 0 {
        return Err(Error::InvalidParameter("resamples must be positive"));
    }
    let n = values.len();
    let mut medians = Vec::with_capacity(resamples as usize);
    let mut draw = alloc::vec![0.0; n];
    for _ in 0..resamples {
        for slot in draw.iter_mut() {
            *slot = values[rng.random_range(0..n)];
        }
        medians.push(median_inplace(&mut draw).expect("non-empty resample"));
    }
    medians.sort_unstable_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    Ok((
        quantile_sorted(&medians, alpha / 2.0),
        quantile_sorted(&medians, 1.0 - alpha / 2.0),
    ))
}

/// Linear-interpolation quantile (type 7) of an already-sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
