use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qrot_cli::campaign::{run_campaign, CampaignMode};
use qrot_cli::config::{
    load_config_file, resolve_bound, resolve_campaign, ConfigFile, Overrides, DEFAULT_SEED,
    DEFAULT_XI_DRAWS,
};
use qrot_cli::error::{CliError, Result};
use qrot_cli::frequency::read_frequency_table;
use qrot_cli::output::{sha256_hex, write_campaign_outputs, write_manifest, write_reference_csv};
use qrot_cli::replay::ReplayPool;
use qrot_core::{reference_curves, solve_c_g, visibility_estimate, xi_constant, XiMethod};

/// Simulation, estimation, and bound computation for an adaptive photonic
/// rotation sensor.
#[derive(Parser)]
#[command(name = "qrot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides runs per angle (M).
    #[arg(long)]
    runs: Option<u32>,
    /// Overrides the resource budget per run (N_max).
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated estimation campaign and emit clustered error curves.
    Simulate(CommonArgs),
    /// Re-run the analysis against a recorded outcome pool.
    Replay {
        #[command(flatten)]
        common: CommonArgs,
        /// Pool CSV (overrides the config `pool` key).
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Compute the optimized bound constant and reference curves.
    Bound(CommonArgs),
    /// Estimate visibilities from a frequency table.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        /// Frequency CSV (overrides the config `frequencies` key).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Report the median-to-mean conversion factor.
    Xi {
        #[command(flatten)]
        common: CommonArgs,
        /// Monte Carlo draws (overrides the config `xi_draws` key).
        #[arg(long)]
        draws: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_optional_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(path) => load_config_file(path),
        None => Ok(ConfigFile::default()),
    }
}

fn require_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(path) => load_config_file(path),
        None => Err(CliError::validation("--config is required")),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn overrides(common: &CommonArgs) -> Overrides {
    Overrides {
        seed: common.seed,
        runs: common.runs,
        budget: common.budget,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let file = require_config(&common.config)?;
            let config = resolve_campaign(&file, &overrides(&common))?;
            ensure_out_dir(&common.out)?;
            let output = run_campaign(&config, CampaignMode::Simulate)?;
            write_campaign_outputs(&common.out, &output, &config.controls, config.seed)?;
            write_manifest(
                &common.out,
                "simulate",
                Some(config.seed),
                &config.canonical_toml(),
            )?;
            println!(
                "simulate: {} runs, {} curve windows, {} flagged -> {}",
                output.total_runs,
                output.curve.len(),
                output.failures.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Replay { common, pool } => {
            let file = require_config(&common.config)?;
            let config = resolve_campaign(&file, &overrides(&common))?;
            let pool_path = pool
                .or_else(|| file.pool.as_ref().map(PathBuf::from))
                .ok_or_else(|| {
                    CliError::validation("replay needs --pool or a `pool` config key")
                })?;
            let pool_text = fs::read_to_string(&pool_path).map_err(|e| {
                CliError::validation(format!("cannot read pool {}: {e}", pool_path.display()))
            })?;
            let pool = ReplayPool::read(BufReader::new(pool_text.as_bytes()), &config.controls)?;
            ensure_out_dir(&common.out)?;
            let output = run_campaign(&config, CampaignMode::Replay(pool))?;
            write_campaign_outputs(&common.out, &output, &config.controls, config.seed)?;
            let canonical = format!(
                "{}pool_sha256 = \"{}\"\n",
                config.canonical_toml(),
                sha256_hex(&pool_text)
            );
            write_manifest(&common.out, "replay", Some(config.seed), &canonical)?;
            println!(
                "replay: {} runs, {} curve windows, {} flagged -> {}",
                output.total_runs,
                output.curve.len(),
                output.failures.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Bound(common) => {
            let file = require_config(&common.config)?;
            let bound = resolve_bound(&file, &overrides(&common))?;
            ensure_out_dir(&common.out)?;
            let spec = solve_c_g(&bound.g, &bound.visibilities, &bound.controls)
                .map_err(|e| CliError::validation(format!("bound: {e}")))?;
            let rows =
                reference_curves(&bound.grid, &bound.g, &bound.visibilities, &bound.controls)?;
            write_reference_csv(&common.out.join("curves.csv"), &rows)?;
            let mut report = String::new();
            report.push_str(&format!("c_g = {}\n", spec.c_g));
            report.push_str(&format!("xi = {}\n", spec.xi));
            report.push_str(&format!("xi_c_g = {}\n", spec.xi * spec.c_g));
            let x = spec.allocation.values();
            report.push_str(&format!(
                "allocation = [{}, {}, {}, {}]\n",
                x[0], x[1], x[2], x[3]
            ));
            let constraint: f64 = x
                .iter()
                .zip(bound.controls.values())
                .map(|(&xi, s)| xi * s as f64)
                .sum();
            report.push_str(&format!("allocation_constraint = {constraint}\n"));
            report.push_str(&format!("g = {:?}\n", bound.g.diag()));
            report.push_str(&format!(
                "visibilities = [{}, {}, {}, {}]\n",
                bound.visibilities[0].value(),
                bound.visibilities[1].value(),
                bound.visibilities[2].value(),
                bound.visibilities[3].value()
            ));
            fs::write(common.out.join("bound_report.txt"), report)?;
            write_manifest(&common.out, "bound", None, &bound.canonical_toml())?;
            println!(
                "bound: C_G = {:.6}, xi C_G = {:.6}",
                spec.c_g,
                spec.xi * spec.c_g
            );
            Ok(())
        }
        Command::Calibrate { common, data } => {
            let file = require_config(&common.config)?;
            let controls = match file.controls {
                None => qrot_core::ControlSet::DEFAULT,
                Some(values) => qrot_core::ControlSet::new(values)
                    .map_err(|e| CliError::validation(format!("controls: {e}")))?,
            };
            let data_path = data
                .or_else(|| file.frequencies.as_ref().map(PathBuf::from))
                .ok_or_else(|| {
                    CliError::validation("calibrate needs --data or a `frequencies` config key")
                })?;
            let text = fs::read_to_string(&data_path).map_err(|e| {
                CliError::validation(format!(
                    "cannot read frequencies {}: {e}",
                    data_path.display()
                ))
            })?;
            let rows = read_frequency_table(BufReader::new(text.as_bytes()), &controls)?;
            ensure_out_dir(&common.out)?;
            let mut out = String::from("angle_id,s,v_hat,clipped\n");
            let mut clipped = 0usize;
            for row in &rows {
                let est = visibility_estimate(&row.record)?;
                if est.clipped {
                    clipped += 1;
                }
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    row.angle_id,
                    row.s,
                    est.value.value(),
                    est.clipped
                ));
            }
            fs::write(common.out.join("visibilities.csv"), out)?;
            let canonical = format!(
                "controls = {:?}\nfrequencies_sha256 = \"{}\"\n",
                controls.values(),
                sha256_hex(&text)
            );
            write_manifest(&common.out, "calibrate", None, &canonical)?;
            println!(
                "calibrate: {} cells estimated, {clipped} clipped -> {}",
                rows.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Xi { common, draws } => {
            let file = load_optional_config(&common.config)?;
            let seed = common.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
            let draws = draws.or(file.xi_draws).unwrap_or(DEFAULT_XI_DRAWS);
            if draws == 0 {
                return Err(CliError::validation("draws: must be positive"));
            }
            ensure_out_dir(&common.out)?;
            let closed = xi_constant(XiMethod::ClosedForm);
            let monte_carlo = xi_constant(XiMethod::MonteCarlo { draws, seed });
            let mut report = String::new();
            report.push_str(&format!("xi_closed_form = {closed}\n"));
            report.push_str(&format!("xi_monte_carlo = {monte_carlo}\n"));
            report.push_str(&format!("draws = {draws}\n"));
            report.push_str(&format!("seed = {seed}\n"));
            report.push_str(&format!(
                "abs_difference = {}\n",
                (closed - monte_carlo).abs()
            ));
            fs::write(common.out.join("xi.txt"), report)?;
            let canonical = format!("seed = {seed}\ndraws = {draws}\n");
            write_manifest(&common.out, "xi", Some(seed), &canonical)?;
            println!("xi (closed form) = {closed:.4}");
            println!("xi (monte carlo, {draws} draws) = {monte_carlo:.4}");
            Ok(())
        }
    }
}
