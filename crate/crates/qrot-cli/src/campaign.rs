//! Campaign orchestration: J angles times M runs, executed in parallel with
//! per-run derived seeds, aggregated into the clustered median curve,
//! per-window usage shares, and a failure report.
//!
//! Determinism: every run draws from RNG streams derived from
//! `(seed, angle_id, run_id, stream)` alone, results are merged in
//! `(angle_id, run_id)` order, and bootstrap streams are derived per
//! window, so outputs are a pure function of the config regardless of the
//! worker count.

use std::collections::BTreeMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use qrot_core::{
    bootstrap_ci, run_estimation, AbortReason, CurveBuilder, EstimationRun, ExperimentRecord,
    RunOptions, RunRecord, SimulatedSource, WindowCells, CONTROL_COUNT,
};

use crate::config::CampaignConfig;
use crate::error::{CliError, Result};
use crate::replay::{PoolLine, ReplayPool, RunPool};

/// Independent RNG streams per `(seed, angle, run)`.
pub const STREAM_RUN: u8 = 0;
pub const STREAM_OUTCOMES: u8 = 1;
pub const STREAM_BOOTSTRAP: u8 = 2;

/// Deterministic stream derivation; injective in all four arguments.
pub fn derive_rng(seed: u64, angle_id: u32, run_id: u32, stream: u8) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..12].copy_from_slice(&angle_id.to_le_bytes());
    bytes[12..16].copy_from_slice(&run_id.to_le_bytes());
    bytes[16] = stream;
    ChaCha8Rng::from_seed(bytes)
}

/// Where a campaign's outcomes come from.
pub enum CampaignMode {
    Simulate,
    Replay(ReplayPool),
}

/// One row of the clustered error curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub n_center: f64,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Runs contributing to the median.
    pub count: usize,
    /// Flagged (aborted) runs in the whole campaign, excluded from medians.
    pub flagged_runs: usize,
}

/// Per-window mean usage share of each control (fraction of photons spent
/// on it so far).
#[derive(Debug, Clone, PartialEq)]
pub struct UsageRow {
    pub n_center: f64,
    pub shares: [f64; CONTROL_COUNT],
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub angle_id: u32,
    pub run_id: u32,
    pub reason: String,
    pub n_at_abort: u64,
    pub photons: u64,
}

#[derive(Debug)]
pub struct CampaignOutput {
    pub curve: Vec<CurveRow>,
    pub usage: Vec<UsageRow>,
    pub failures: Vec<RunFailure>,
    /// Every consumed record in replay-pool format (simulate mode only).
    pub pool_lines: Option<Vec<PoolLine>>,
    /// Per-run records for the records directory, when requested.
    pub run_records: Vec<(u32, u32, RunRecord)>,
    /// Emitted samples whose `n` disagreed with the recomputed record sum;
    /// always zero unless the estimation loop is broken.
    pub ledger_violations: u64,
    pub total_runs: usize,
}

struct TaskOutput {
    angle_id: u32,
    run_id: u32,
    cells: WindowCells,
    usage: BTreeMap<usize, ([f64; CONTROL_COUNT], u32)>,
    abort: Option<AbortReason>,
    records: Vec<ExperimentRecord>,
    final_n: u64,
    ledger_violations: u64,
}

fn abort_label(reason: &AbortReason) -> String {
    match reason {
        AbortReason::DegeneratePosterior => "degenerate posterior".to_string(),
        AbortReason::UndefinedMean => "undefined circular mean".to_string(),
        AbortReason::SourceExhausted { s, basis } => {
            format!("pool exhausted for s={s} basis={basis:?}")
        }
    }
}

fn digest_run(
    config: &CampaignConfig,
    angle_id: u32,
    run_id: u32,
    run: EstimationRun,
) -> TaskOutput {
    // resource-ledger exactness: every emitted n must equal the recomputed
    // prefix sum of consumed records
    let mut ledger_violations = 0u64;
    let mut prefix = 0u64;
    for (record, sample) in run.record.records.iter().zip(&run.samples) {
        prefix += u64::from(record.setting.s);
        if sample.n != prefix {
            ledger_violations += 1;
        }
    }
    if run.ledger.total() != run.record.resource_cost() {
        ledger_violations += 1;
    }

    let mut cells = WindowCells::new();
    let mut usage: BTreeMap<usize, ([f64; CONTROL_COUNT], u32)> = BTreeMap::new();
    for sample in &run.samples {
        cells.add(config.cluster, sample.n, sample.delta_sq);
        if let Some(window) = config.cluster.window_index(sample.n) {
            let photons: u64 = sample.nu.iter().sum();
            let entry = usage.entry(window).or_insert(([0.0; CONTROL_COUNT], 0));
            for (slot, &nu) in entry.0.iter_mut().zip(&sample.nu) {
                *slot += nu as f64 / photons as f64;
            }
            entry.1 += 1;
        }
    }

    TaskOutput {
        angle_id,
        run_id,
        cells,
        usage,
        abort: run.abort,
        records: run.record.records,
        final_n: run.ledger.total(),
        ledger_violations,
    }
}

/// Executes the full campaign described by `config`.
pub fn run_campaign(config: &CampaignConfig, mode: CampaignMode) -> Result<CampaignOutput> {
    config.validate()?;
    let n_angles = config.n_angles();
    let tasks: Vec<(u32, u32)> = (0..n_angles)
        .flat_map(|a| (0..config.runs_per_angle).map(move |m| (a, m)))
        .collect();

    // replay pools are partitioned per run up front: single consumer each
    let (simulate, mut pools): (bool, Vec<Option<RunPool>>) = match mode {
        CampaignMode::Simulate => (true, Vec::new()),
        CampaignMode::Replay(mut pool) => {
            let pools = tasks
                .iter()
                .map(|&(a, m)| Some(pool.take_run(a, m)))
                .collect();
            (false, pools)
        }
    };

    let options = RunOptions {
        n_particles: config.n_particles,
        budget: config.budget,
        photon_cap: config.photon_cap,
        ..RunOptions::new(config.budget)
    };

    let jobs: Vec<((u32, u32), Option<RunPool>)> = if simulate {
        tasks.iter().map(|&t| (t, None)).collect()
    } else {
        tasks
            .iter()
            .zip(pools.iter_mut())
            .map(|(&t, p)| (t, p.take()))
            .collect()
    };

    let outputs: std::result::Result<Vec<TaskOutput>, qrot_core::Error> = jobs
        .into_par_iter()
        .map(|((angle_id, run_id), pool)| {
            let truth = config.true_points[angle_id as usize];
            let mut rng = derive_rng(config.seed, angle_id, run_id, STREAM_RUN);
            let run = match pool {
                None => {
                    let mut source = SimulatedSource::new(
                        truth,
                        derive_rng(config.seed, angle_id, run_id, STREAM_OUTCOMES),
                    );
                    run_estimation(
                        &truth,
                        &config.g,
                        &config.controls,
                        &options,
                        &mut source,
                        &mut rng,
                    )?
                }
                Some(mut pool) => run_estimation(
                    &truth,
                    &config.g,
                    &config.controls,
                    &options,
                    &mut pool,
                    &mut rng,
                )?,
            };
            Ok(digest_run(config, angle_id, run_id, run))
        })
        .collect();
    let mut outputs = outputs.map_err(CliError::from)?;
    outputs.sort_by_key(|t| (t.angle_id, t.run_id));

    let mut failures = Vec::new();
    let mut builder = CurveBuilder::new(config.cluster, n_angles);
    let mut usage_acc: BTreeMap<usize, ([f64; CONTROL_COUNT], u32)> = BTreeMap::new();
    let mut ledger_violations = 0u64;
    for task in &outputs {
        ledger_violations += task.ledger_violations;
        if let Some(reason) = &task.abort {
            failures.push(RunFailure {
                angle_id: task.angle_id,
                run_id: task.run_id,
                reason: abort_label(reason),
                n_at_abort: task.final_n,
                photons: task.records.len() as u64,
            });
            continue;
        }
        builder.add_series(task.run_id, task.angle_id, &task.cells);
        for (&window, (shares, count)) in &task.usage {
            let entry = usage_acc.entry(window).or_insert(([0.0; CONTROL_COUNT], 0));
            for (slot, &share) in entry.0.iter_mut().zip(shares) {
                *slot += share;
            }
            entry.1 += count;
        }
    }

    let flagged = failures.len();
    let windows = builder.finish();
    let mut curve = Vec::with_capacity(windows.len());
    for window in &windows {
        let (ci_low, ci_high) = if window.values.len() >= 2 {
            let mut rng = derive_rng(config.seed, window.index as u32, 0, STREAM_BOOTSTRAP);
            bootstrap_ci(
                &window.values,
                config.bootstrap_resamples,
                config.confidence,
                &mut rng,
            )
            .map_err(CliError::from)?
        } else {
            (window.median, window.median)
        };
        curve.push(CurveRow {
            n_center: window.n_center,
            median: window.median,
            ci_low,
            ci_high,
            count: window.values.len(),
            flagged_runs: flagged,
        });
    }

    let usage = usage_acc
        .into_iter()
        .map(|(window, (sums, count))| UsageRow {
            n_center: config.cluster.window_center(window),
            shares: sums.map(|s| s / count as f64),
            samples: count as usize,
        })
        .collect();

    let pool_lines = simulate.then(|| {
        outputs
            .iter()
            .flat_map(|task| {
                task.records.iter().map(|record| PoolLine {
                    angle_id: task.angle_id,
                    run_id: task.run_id,
                    s: record.setting.s,
                    basis: record.setting.basis,
                    outcome: record.outcome,
                })
            })
            .collect()
    });

    let run_records = if config.emit_run_records {
        outputs
            .iter()
            .map(|task| {
                (
                    task.angle_id,
                    task.run_id,
                    RunRecord {
                        records: task.records.clone(),
                        true_point: Some(config.true_points[task.angle_id as usize]),
                    },
                )
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(CampaignOutput {
        curve,
        usage,
        failures,
        pool_lines,
        run_records,
        ledger_violations,
        total_runs: outputs.len(),
    })
}

/// Convenience wrapper: run every `(angle, run)` estimation of a campaign
/// and hand the raw runs to a consumer, in deterministic order. Used by
/// verification suites that need per-sample data without the aggregation.
pub fn run_campaign_raw(config: &CampaignConfig) -> Result<Vec<(u32, u32, EstimationRun)>> {
    config.validate()?;
    let tasks: Vec<(u32, u32)> = (0..config.n_angles())
        .flat_map(|a| (0..config.runs_per_angle).map(move |m| (a, m)))
        .collect();
    let options = RunOptions {
        n_particles: config.n_particles,
        budget: config.budget,
        photon_cap: config.photon_cap,
        ..RunOptions::new(config.budget)
    };
    let runs: std::result::Result<Vec<_>, qrot_core::Error> = tasks
        .into_par_iter()
        .map(|(angle_id, run_id)| {
            let truth = config.true_points[angle_id as usize];
            let mut rng = derive_rng(config.seed, angle_id, run_id, STREAM_RUN);
            let mut source = SimulatedSource::new(
                truth,
                derive_rng(config.seed, angle_id, run_id, STREAM_OUTCOMES),
            );
            let run = run_estimation(
                &truth,
                &config.g,
                &config.controls,
                &options,
                &mut source,
                &mut rng,
            )?;
            Ok((angle_id, run_id, run))
        })
        .collect();
    let mut runs = runs.map_err(CliError::from)?;
    runs.sort_by_key(|(a, m, _)| (*a, *m));
    Ok(runs)
}
