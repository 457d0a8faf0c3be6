//! Configuration files and their resolution into validated run parameters.
//!
//! Configs are TOML with a flat key set; unknown keys are rejected. Every
//! subcommand reads the same file format and picks the fields it needs, so
//! one config can drive a whole analysis.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qrot_core::{ClusterParams, ControlSet, ParameterPoint, WeightMatrix};

use crate::error::{CliError, Result};
use crate::table::{builtin_table, parse_table, ReferenceTable};

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_RUNS_PER_ANGLE: u32 = 200;
pub const DEFAULT_BUDGET: u64 = 5000;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: u32 = 10_000;
pub const DEFAULT_CONFIDENCE: f64 = 0.99;
pub const DEFAULT_XI_DRAWS: u64 = 10_000_000;

/// Raw config file contents before validation.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    /// Weight matrix diagonal: `[theta, v1, v2, v3, v4]`.
    pub g: Option<[f64; 5]>,
    pub runs_per_angle: Option<u32>,
    pub n_particles: Option<usize>,
    pub budget: Option<u64>,
    pub photon_cap: Option<u64>,
    pub cluster_width: Option<u64>,
    pub cluster_min_n: Option<u64>,
    pub bootstrap_resamples: Option<u32>,
    pub confidence: Option<f64>,
    pub controls: Option<[u32; 4]>,
    pub emit_run_records: Option<bool>,
    /// Replay pool path (replay subcommand).
    pub pool: Option<String>,
    /// Frequency table path (calibrate subcommand).
    pub frequencies: Option<String>,
    /// Visibilities for bound computations; defaults to the truth table's
    /// mean row.
    pub visibilities: Option<[f64; 4]>,
    pub bound_n_min: Option<u64>,
    pub bound_n_max: Option<u64>,
    pub bound_points: Option<u32>,
    pub xi_draws: Option<u64>,
    /// `"si-table"`, a path to a table in the same format, or inline rows.
    pub true_points: Option<TruthSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TruthSpec {
    Named(String),
    Inline(Vec<TruthRow>),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRow {
    pub theta: f64,
    pub visibilities: [f64; 4],
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<u32>,
    pub budget: Option<u64>,
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::validation(format!("config: {e}")))
}

/// Fully validated campaign parameters.
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub seed: u64,
    pub g: WeightMatrix,
    pub runs_per_angle: u32,
    pub n_particles: usize,
    pub budget: u64,
    pub photon_cap: u64,
    pub cluster: ClusterParams,
    pub bootstrap_resamples: u32,
    pub confidence: f64,
    pub controls: ControlSet,
    pub true_points: Vec<ParameterPoint>,
    pub emit_run_records: bool,
}

impl CampaignConfig {
    pub fn n_angles(&self) -> u32 {
        self.true_points.len() as u32
    }

    /// Programmatic constructor used by tests and library consumers;
    /// applies the same invariants as config-file resolution.
    pub fn new(
        seed: u64,
        g: WeightMatrix,
        runs_per_angle: u32,
        budget: u64,
        true_points: Vec<ParameterPoint>,
    ) -> Result<Self> {
        let config = CampaignConfig {
            seed,
            g,
            runs_per_angle,
            n_particles: qrot_core::DEFAULT_PARTICLES,
            budget,
            photon_cap: budget,
            cluster: ClusterParams::DEFAULT,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            confidence: DEFAULT_CONFIDENCE,
            controls: ControlSet::DEFAULT,
            true_points,
            emit_run_records: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_points.is_empty() {
            return Err(CliError::validation("true_points: need at least one angle"));
        }
        if self.runs_per_angle == 0 {
            return Err(CliError::validation("runs_per_angle: must be at least 1"));
        }
        if self.budget == 0 {
            return Err(CliError::validation("budget: must be at least 1"));
        }
        if self.photon_cap == 0 {
            return Err(CliError::validation("photon_cap: must be at least 1"));
        }
        if self.n_particles < 2 {
            return Err(CliError::validation("n_particles: must be at least 2"));
        }
        if !(0.0 < self.confidence && self.confidence < 1.0) {
            return Err(CliError::validation("confidence: must be in (0, 1)"));
        }
        if self.bootstrap_resamples == 0 {
            return Err(CliError::validation(
                "bootstrap_resamples: must be positive",
            ));
        }
        if !self.g.has_positive_entry() {
            return Err(CliError::validation("g: needs at least one positive entry"));
        }
        Ok(())
    }
}

fn resolve_truths(spec: Option<&TruthSpec>) -> Result<ReferenceTable> {
    match spec {
        None => Ok(builtin_table()),
        Some(TruthSpec::Named(name)) if name == "si-table" => Ok(builtin_table()),
        Some(TruthSpec::Named(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::validation(format!("true_points: cannot read {path}: {e}"))
            })?;
            parse_table(&text)
        }
        Some(TruthSpec::Inline(rows)) => {
            let mut points = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                let theta = qrot_core::RotationAngle::new(row.theta)
                    .map_err(|e| CliError::validation(format!("true_points[{i}].theta: {e}")))?;
                let mut vis = [qrot_core::Visibility::new(0.0).unwrap(); 4];
                for (slot, &v) in vis.iter_mut().zip(&row.visibilities) {
                    *slot = qrot_core::Visibility::new(v).map_err(|e| {
                        CliError::validation(format!("true_points[{i}].visibilities: {e}"))
                    })?;
                }
                points.push(ParameterPoint::new(theta, vis));
            }
            if points.is_empty() {
                return Err(CliError::validation("true_points: inline list is empty"));
            }
            Ok(ReferenceTable {
                points,
                mean_visibilities: None,
            })
        }
    }
}

fn resolve_weight_matrix(file: &ConfigFile) -> Result<WeightMatrix> {
    let diag = file
        .g
        .ok_or_else(|| CliError::validation("g: required (weight matrix diagonal)"))?;
    WeightMatrix::new(diag).map_err(|e| CliError::validation(format!("g: {e}")))
}

fn resolve_controls(file: &ConfigFile) -> Result<ControlSet> {
    match file.controls {
        None => Ok(ControlSet::DEFAULT),
        Some(values) => {
            ControlSet::new(values).map_err(|e| CliError::validation(format!("controls: {e}")))
        }
    }
}

/// Resolves a campaign config (simulate / replay) with CLI overrides.
pub fn resolve_campaign(file: &ConfigFile, overrides: &Overrides) -> Result<CampaignConfig> {
    let g = resolve_weight_matrix(file)?;
    let controls = resolve_controls(file)?;
    let table = resolve_truths(file.true_points.as_ref())?;
    let budget = overrides.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET);
    let cluster = ClusterParams::new(
        file.cluster_width.unwrap_or(ClusterParams::DEFAULT.delta_n),
        file.cluster_min_n.unwrap_or(ClusterParams::DEFAULT.min_n),
    )
    .map_err(|e| CliError::validation(format!("cluster_width: {e}")))?;
    let config = CampaignConfig {
        seed: overrides.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        g,
        runs_per_angle: overrides
            .runs
            .or(file.runs_per_angle)
            .unwrap_or(DEFAULT_RUNS_PER_ANGLE),
        n_particles: file.n_particles.unwrap_or(qrot_core::DEFAULT_PARTICLES),
        budget,
        photon_cap: file.photon_cap.unwrap_or(budget),
        cluster,
        bootstrap_resamples: file
            .bootstrap_resamples
            .unwrap_or(DEFAULT_BOOTSTRAP_RESAMPLES),
        confidence: file.confidence.unwrap_or(DEFAULT_CONFIDENCE),
        controls,
        true_points: table.points,
        emit_run_records: file.emit_run_records.unwrap_or(false),
    };
    config.validate()?;
    Ok(config)
}

impl CampaignConfig {
    /// Canonical TOML rendering of the fully resolved campaign; hashed into
    /// the manifest.
    pub fn canonical_toml(&self) -> String {
        #[derive(Serialize)]
        struct Canonical {
            seed: u64,
            g: [f64; 5],
            runs_per_angle: u32,
            n_particles: usize,
            budget: u64,
            photon_cap: u64,
            cluster_width: u64,
            cluster_min_n: u64,
            bootstrap_resamples: u32,
            confidence: f64,
            controls: [u32; 4],
            emit_run_records: bool,
            true_points: Vec<TruthRow>,
        }
        let canonical = Canonical {
            seed: self.seed,
            g: *self.g.diag(),
            runs_per_angle: self.runs_per_angle,
            n_particles: self.n_particles,
            budget: self.budget,
            photon_cap: self.photon_cap,
            cluster_width: self.cluster.delta_n,
            cluster_min_n: self.cluster.min_n,
            bootstrap_resamples: self.bootstrap_resamples,
            confidence: self.confidence,
            controls: self.controls.values(),
            emit_run_records: self.emit_run_records,
            true_points: self
                .true_points
                .iter()
                .map(|p| TruthRow {
                    theta: p.theta.radians(),
                    visibilities: core::array::from_fn(|i| p.visibilities[i].value()),
                })
                .collect(),
        };
        toml::to_string(&canonical).expect("canonical config serializes")
    }
}

/// Parameters of the `bound` subcommand.
#[derive(Debug, Clone)]
pub struct BoundConfig {
    pub g: WeightMatrix,
    pub controls: ControlSet,
    pub visibilities: [qrot_core::Visibility; 4],
    pub grid: Vec<u64>,
    pub n_min: u64,
    pub n_max: u64,
    pub points: u32,
}

impl BoundConfig {
    pub fn canonical_toml(&self) -> String {
        #[derive(Serialize)]
        struct Canonical {
            g: [f64; 5],
            controls: [u32; 4],
            visibilities: [f64; 4],
            bound_n_min: u64,
            bound_n_max: u64,
            bound_points: u32,
        }
        let canonical = Canonical {
            g: *self.g.diag(),
            controls: self.controls.values(),
            visibilities: core::array::from_fn(|i| self.visibilities[i].value()),
            bound_n_min: self.n_min,
            bound_n_max: self.n_max,
            bound_points: self.points,
        };
        toml::to_string(&canonical).expect("canonical config serializes")
    }
}

pub fn resolve_bound(file: &ConfigFile, overrides: &Overrides) -> Result<BoundConfig> {
    let g = resolve_weight_matrix(file)?;
    let controls = resolve_controls(file)?;
    let vis_values = match file.visibilities {
        Some(v) => v,
        None => resolve_truths(file.true_points.as_ref())?.visibility_means(),
    };
    let mut visibilities = [qrot_core::Visibility::new(0.0).unwrap(); 4];
    for (slot, &v) in visibilities.iter_mut().zip(&vis_values) {
        *slot = qrot_core::Visibility::new(v)
            .map_err(|e| CliError::validation(format!("visibilities: {e}")))?;
    }
    let n_min = file.bound_n_min.unwrap_or(100);
    let n_max = file
        .bound_n_max
        .or(overrides.budget)
        .or(file.budget)
        .unwrap_or(DEFAULT_BUDGET);
    let points = file.bound_points.unwrap_or(200).max(2);
    if n_min == 0 || n_max < n_min {
        return Err(CliError::validation(
            "bound_n_min/bound_n_max: need 0 < n_min <= n_max",
        ));
    }
    // log-spaced integer grid, deduplicated
    let mut grid = Vec::with_capacity(points as usize);
    let (lo, hi) = ((n_min as f64).ln(), (n_max as f64).ln());
    for k in 0..points {
        let t = k as f64 / (points - 1) as f64;
        let n = (lo + t * (hi - lo)).exp().round() as u64;
        grid.push(n.clamp(n_min, n_max));
    }
    grid.dedup();
    Ok(BoundConfig {
        g,
        controls,
        visibilities,
        grid,
        n_min,
        n_max,
        points,
    })
}
