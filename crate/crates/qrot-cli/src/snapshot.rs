//! Columnar text snapshots of particle ensembles, one particle per line:
//! `theta,v1,v2,v3,v4,weight`. Used for debugging and test fixtures.

use std::io::{BufRead, Write};

use qrot_core::{Ensemble, ParameterPoint, RotationAngle, Visibility};

use crate::error::{CliError, Result};

pub const SNAPSHOT_HEADER: &str = "theta,v1,v2,v3,v4,weight";

pub fn write_snapshot(sink: &mut impl Write, ensemble: &Ensemble) -> std::io::Result<()> {
    writeln!(sink, "{SNAPSHOT_HEADER}")?;
    for (point, weight) in ensemble.particles() {
        writeln!(
            sink,
            "{},{},{},{},{},{}",
            point.theta.radians(),
            point.visibilities[0].value(),
            point.visibilities[1].value(),
            point.visibilities[2].value(),
            point.visibilities[3].value(),
            weight
        )?;
    }
    Ok(())
}

pub fn read_snapshot(source: impl BufRead) -> Result<Ensemble> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut lines = source.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CliError::validation("snapshot is empty"))?
        .1?;
    if header.trim() != SNAPSHOT_HEADER {
        return Err(CliError::validation(format!(
            "snapshot header must be '{SNAPSHOT_HEADER}'"
        )));
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::validation(format!(
                "snapshot line {line_no}: expected 6 fields"
            )));
        }
        let mut values = [0.0f64; 6];
        for (slot, field) in values.iter_mut().zip(&fields) {
            *slot = field.trim().parse().map_err(|_| {
                CliError::validation(format!("snapshot line {line_no}: bad number '{field}'"))
            })?;
        }
        let theta = RotationAngle::new(values[0])
            .map_err(|e| CliError::validation(format!("snapshot line {line_no}: {e}")))?;
        let mut vis = [Visibility::new(0.0).unwrap(); 4];
        for (slot, &v) in vis.iter_mut().zip(&values[1..5]) {
            *slot = Visibility::new(v)
                .map_err(|e| CliError::validation(format!("snapshot line {line_no}: {e}")))?;
        }
        points.push(ParameterPoint::new(theta, vis));
        weights.push(values[5]);
    }
    Ensemble::from_particles(&points, Some(&weights))
        .map_err(|e| CliError::validation(format!("snapshot: {e}")))
}
