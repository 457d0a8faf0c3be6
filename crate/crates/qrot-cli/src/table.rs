//! The bundled reference table of calibrated angles and visibilities.
//!
//! The table has one row per measured angle with the four per-control
//! visibilities, plus a final row (`theta = "-"`) holding the mean
//! visibilities. It ships embedded in the binary and doubles as the file
//! format for user-provided truth tables.

use qrot_core::{ParameterPoint, RotationAngle, Visibility};

use crate::error::{CliError, Result};

/// Embedded copy of `data/si_table.csv`.
pub const BUILTIN_TABLE: &str = include_str!("../data/si_table.csv");

/// Parsed truth table: the angle rows and the mean-visibility row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub points: Vec<ParameterPoint>,
    pub mean_visibilities: Option<[f64; 4]>,
}

impl ReferenceTable {
    /// Mean visibilities: the dedicated row when present, otherwise the
    /// arithmetic mean over the angle rows.
    pub fn visibility_means(&self) -> [f64; 4] {
        if let Some(m) = self.mean_visibilities {
            return m;
        }
        let mut acc = [0.0f64; 4];
        for p in &self.points {
            for (slot, v) in acc.iter_mut().zip(p.visibilities.iter()) {
                *slot += v.value();
            }
        }
        acc.map(|v| v / self.points.len() as f64)
    }
}

/// Parses the `theta,v1,v2,v3,v4` table format.
pub fn parse_table(text: &str) -> Result<ReferenceTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::validation("truth table is empty"))?;
    if header.trim() != "theta,v1,v2,v3,v4" {
        return Err(CliError::validation(format!(
            "truth table header must be 'theta,v1,v2,v3,v4', got '{header}'"
        )));
    }
    let mut points = Vec::new();
    let mut mean = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::validation(format!(
                "truth table line {line_no}: expected 5 fields, got {}",
                fields.len()
            )));
        }
        let mut vis = [0.0f64; 4];
        for (slot, field) in vis.iter_mut().zip(&fields[1..]) {
            *slot = field.trim().parse::<f64>().map_err(|_| {
                CliError::validation(format!(
                    "truth table line {line_no}: bad visibility '{field}'"
                ))
            })?;
        }
        if fields[0].trim() == "-" {
            if mean.is_some() {
                return Err(CliError::validation(format!(
                    "truth table line {line_no}: duplicate mean row"
                )));
            }
            mean = Some(vis);
            continue;
        }
        let theta = fields[0].trim().parse::<f64>().map_err(|_| {
            CliError::validation(format!(
                "truth table line {line_no}: bad angle '{}'",
                fields[0]
            ))
        })?;
        let theta = RotationAngle::new(theta)
            .map_err(|e| CliError::validation(format!("truth table line {line_no}: {e}")))?;
        let mut visibilities = [Visibility::new(0.0).unwrap(); 4];
        for (slot, &v) in visibilities.iter_mut().zip(&vis) {
            *slot = Visibility::new(v)
                .map_err(|e| CliError::validation(format!("truth table line {line_no}: {e}")))?;
        }
        points.push(ParameterPoint::new(theta, visibilities));
    }
    if points.is_empty() {
        return Err(CliError::validation("truth table has no angle rows"));
    }
    Ok(ReferenceTable {
        points,
        mean_visibilities: mean,
    })
}

/// The embedded table; infallible by construction (checked in tests).
pub fn builtin_table() -> ReferenceTable {
    parse_table(BUILTIN_TABLE).expect("embedded table is valid")
}
