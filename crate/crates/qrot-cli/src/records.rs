//! Line-oriented run-record serialization.
//!
//! One experiment per line as `s,basis,outcome` (outcome `1` or `-1`), with
//! `# key = value` header lines carrying run metadata. Round-trips are
//! lossless.

use std::io::{BufRead, Write};

use qrot_core::{
    Basis, ControlSet, ExperimentRecord, Outcome, ParameterPoint, RotationAngle, RunRecord,
    Visibility,
};

use crate::error::{CliError, Result};

/// Metadata carried in a run-record header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMeta {
    pub seed: Option<u64>,
    pub angle_id: Option<u32>,
    pub run_id: Option<u32>,
}

pub fn basis_label(basis: Basis) -> &'static str {
    match basis {
        Basis::B1 => "B1",
        Basis::B2 => "B2",
    }
}

pub fn parse_basis(text: &str) -> Option<Basis> {
    match text {
        "B1" => Some(Basis::B1),
        "B2" => Some(Basis::B2),
        _ => None,
    }
}

pub fn write_run_record(
    sink: &mut impl Write,
    run: &RunRecord,
    meta: &RunMeta,
) -> std::io::Result<()> {
    if let Some(seed) = meta.seed {
        writeln!(sink, "# seed = {seed}")?;
    }
    if let Some(angle) = meta.angle_id {
        writeln!(sink, "# angle_id = {angle}")?;
    }
    if let Some(run_id) = meta.run_id {
        writeln!(sink, "# run_id = {run_id}")?;
    }
    if let Some(truth) = &run.true_point {
        writeln!(
            sink,
            "# truth = {},{},{},{},{}",
            truth.theta.radians(),
            truth.visibilities[0].value(),
            truth.visibilities[1].value(),
            truth.visibilities[2].value(),
            truth.visibilities[3].value()
        )?;
    }
    for record in &run.records {
        writeln!(
            sink,
            "{},{},{}",
            record.setting.s,
            basis_label(record.setting.basis),
            record.outcome.value()
        )?;
    }
    Ok(())
}

pub fn read_run_record(
    source: impl BufRead,
    controls: &ControlSet,
) -> Result<(RunRecord, RunMeta)> {
    let mut meta = RunMeta::default();
    let mut truth: Option<ParameterPoint> = None;
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let Some((key, value)) = rest.split_once('=') else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "seed" => {
                    meta.seed = Some(value.parse().map_err(|_| {
                        CliError::validation(format!("line {line_no}: bad seed '{value}'"))
                    })?)
                }
                "angle_id" => {
                    meta.angle_id = Some(value.parse().map_err(|_| {
                        CliError::validation(format!("line {line_no}: bad angle_id '{value}'"))
                    })?)
                }
                "run_id" => {
                    meta.run_id = Some(value.parse().map_err(|_| {
                        CliError::validation(format!("line {line_no}: bad run_id '{value}'"))
                    })?)
                }
                "truth" => truth = Some(parse_truth(value, line_no)?),
                _ => {}
            }
            continue;
        }
        records.push(parse_record_line(line, line_no, controls)?);
    }
    Ok((
        RunRecord {
            records,
            true_point: truth,
        },
        meta,
    ))
}

fn parse_truth(value: &str, line_no: usize) -> Result<ParameterPoint> {
    let fields: Vec<&str> = value.split(',').collect();
    if fields.len() != 5 {
        return Err(CliError::validation(format!(
            "line {line_no}: truth needs 5 comma-separated values"
        )));
    }
    let mut parsed = [0.0f64; 5];
    for (slot, field) in parsed.iter_mut().zip(&fields) {
        *slot = field.trim().parse().map_err(|_| {
            CliError::validation(format!("line {line_no}: bad truth value '{field}'"))
        })?;
    }
    let theta = RotationAngle::new(parsed[0])
        .map_err(|e| CliError::validation(format!("line {line_no}: {e}")))?;
    let mut vis = [Visibility::new(0.0).unwrap(); 4];
    for (slot, &v) in vis.iter_mut().zip(&parsed[1..]) {
        *slot =
            Visibility::new(v).map_err(|e| CliError::validation(format!("line {line_no}: {e}")))?;
    }
    Ok(ParameterPoint::new(theta, vis))
}

pub fn parse_record_line(
    line: &str,
    line_no: usize,
    controls: &ControlSet,
) -> Result<ExperimentRecord> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 3 {
        return Err(CliError::validation(format!(
            "line {line_no}: expected 's,basis,outcome', got '{line}'"
        )));
    }
    let s: u32 = fields[0].trim().parse().map_err(|_| {
        CliError::validation(format!("line {line_no}: bad control value '{}'", fields[0]))
    })?;
    let index = controls.index_of(s).ok_or_else(|| {
        CliError::validation(format!(
            "line {line_no}: control s={s} not in the configured set"
        ))
    })?;
    let basis = parse_basis(fields[1].trim()).ok_or_else(|| {
        CliError::validation(format!("line {line_no}: bad basis '{}'", fields[1]))
    })?;
    let outcome_value: i8 = fields[2].trim().parse().map_err(|_| {
        CliError::validation(format!("line {line_no}: bad outcome '{}'", fields[2]))
    })?;
    let outcome = Outcome::from_value(outcome_value)
        .map_err(|e| CliError::validation(format!("line {line_no}: {e}")))?;
    Ok(ExperimentRecord {
        setting: controls.setting(index, basis),
        outcome,
    })
}
