//! Output files: CSV tables, failure reports, and reproducibility
//! manifests. All writers are deterministic (no timestamps, fixed orders,
//! shortest-round-trip float formatting).

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use qrot_core::{ControlSet, ReferenceRow};

use crate::campaign::{CampaignOutput, CurveRow, RunFailure, UsageRow};
use crate::error::Result;
use crate::records::{write_run_record, RunMeta};
use crate::replay::write_pool;

pub fn sha256_hex(data: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Manifest: tool version, subcommand, seed, config hash, and the resolved
/// config itself, which together reproduce the outputs exactly.
pub fn render_manifest(subcommand: &str, seed: Option<u64>, canonical_config: &str) -> String {
    let mut text = String::new();
    text.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("subcommand = {subcommand}\n"));
    if let Some(seed) = seed {
        text.push_str(&format!("seed = {seed}\n"));
    }
    text.push_str(&format!(
        "config_sha256 = {}\n---\n{canonical_config}",
        sha256_hex(canonical_config)
    ));
    text
}

pub fn write_manifest(
    dir: &Path,
    subcommand: &str,
    seed: Option<u64>,
    canonical_config: &str,
) -> Result<()> {
    fs::write(
        dir.join("manifest.txt"),
        render_manifest(subcommand, seed, canonical_config),
    )?;
    Ok(())
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut out = String::from("n_center,median,ci_low,ci_high,count,flagged_runs\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.n_center, row.median, row.ci_low, row.ci_high, row.count, row.flagged_runs
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_usage_csv(path: &Path, rows: &[UsageRow], controls: &ControlSet) -> Result<()> {
    let values = controls.values();
    let mut out = format!(
        "n_center,share_s{},share_s{},share_s{},share_s{},samples\n",
        values[0], values[1], values[2], values[3]
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.n_center, row.shares[0], row.shares[1], row.shares[2], row.shares[3], row.samples
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_failures(
    path: &Path,
    failures: &[RunFailure],
    total_runs: usize,
    ledger_violations: u64,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("total_runs = {total_runs}\n"));
    out.push_str(&format!("flagged_runs = {}\n", failures.len()));
    out.push_str(&format!("ledger_violations = {ledger_violations}\n"));
    for f in failures {
        out.push_str(&format!(
            "angle {} run {}: {} (n = {}, photons = {})\n",
            f.angle_id, f.run_id, f.reason, f.n_at_abort, f.photons
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_reference_csv(path: &Path, rows: &[ReferenceRow]) -> Result<()> {
    let mut out = String::from("n,bound,sql,hl\n");
    for row in rows {
        out.push_str(&format!("{},{},{},{}\n", row.n, row.bound, row.sql, row.hl));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes every campaign artifact into `dir`.
pub fn write_campaign_outputs(
    dir: &Path,
    output: &CampaignOutput,
    controls: &ControlSet,
    seed: u64,
) -> Result<()> {
    write_curve_csv(&dir.join("curve.csv"), &output.curve)?;
    write_usage_csv(&dir.join("usage.csv"), &output.usage, controls)?;
    write_failures(
        &dir.join("failures.txt"),
        &output.failures,
        output.total_runs,
        output.ledger_violations,
    )?;
    if let Some(lines) = &output.pool_lines {
        let mut buffer = Vec::new();
        write_pool(&mut buffer, lines)?;
        fs::write(dir.join("pool.csv"), buffer)?;
    }
    if !output.run_records.is_empty() {
        let records_dir = dir.join("records");
        fs::create_dir_all(&records_dir)?;
        for (angle_id, run_id, run) in &output.run_records {
            let mut buffer = Vec::new();
            write_run_record(
                &mut buffer,
                run,
                &RunMeta {
                    seed: Some(seed),
                    angle_id: Some(*angle_id),
                    run_id: Some(*run_id),
                },
            )?;
            fs::write(
                records_dir.join(format!("angle{angle_id}_run{run_id}.txt")),
                buffer,
            )?;
        }
    }
    Ok(())
}
