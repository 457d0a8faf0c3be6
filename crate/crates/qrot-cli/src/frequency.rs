//! Frequency tables feeding the visibility calibration:
//! `angle_id,s,f0,f_plus,nu` per line.

use std::io::BufRead;

use qrot_core::{ControlSet, FrequencyRecord};

use crate::error::{CliError, Result};

pub const FREQUENCY_HEADER: &str = "angle_id,s,f0,f_plus,nu";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyRow {
    pub angle_id: u32,
    pub s: u32,
    pub record: FrequencyRecord,
}

pub fn read_frequency_table(
    source: impl BufRead,
    controls: &ControlSet,
) -> Result<Vec<FrequencyRow>> {
    let mut lines = source.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CliError::validation("frequency table is empty"))?
        .1?;
    if header.trim() != FREQUENCY_HEADER {
        return Err(CliError::validation(format!(
            "frequency table header must be '{FREQUENCY_HEADER}'"
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::validation(format!(
                "frequency line {line_no}: expected 5 fields"
            )));
        }
        let angle_id: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("frequency line {line_no}: bad angle_id")))?;
        let s: u32 = fields[1].trim().parse().map_err(|_| {
            CliError::validation(format!("frequency line {line_no}: bad control value"))
        })?;
        if controls.index_of(s).is_none() {
            return Err(CliError::validation(format!(
                "frequency line {line_no}: control s={s} not in the configured set"
            )));
        }
        let f0: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("frequency line {line_no}: bad f0")))?;
        let f_plus: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("frequency line {line_no}: bad f_plus")))?;
        let nu: u64 = fields[4]
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("frequency line {line_no}: bad nu")))?;
        let record = FrequencyRecord::new(f0, f_plus, nu)
            .map_err(|e| CliError::validation(format!("frequency line {line_no}: {e}")))?;
        rows.push(FrequencyRow {
            angle_id,
            s,
            record,
        });
    }
    if rows.is_empty() {
        return Err(CliError::validation("frequency table has no data rows"));
    }
    Ok(rows)
}
