//! Replay pools: recorded outcomes served back to the estimation loop.
//!
//! A pool holds per-key FIFO queues of outcomes keyed by
//! `(angle_id, run_id, s, basis)`. The `run_id` component partitions the
//! pool so that campaigns can hand each run its own single-consumer slice
//! up front. Consumption is strictly sequential per key.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::io::{BufRead, Write};

use qrot_core::{Basis, ControlSet, ControlSetting, Error as CoreError, Outcome, OutcomeSource};

use crate::error::{CliError, Result};
use crate::records::{basis_label, parse_basis};

pub const POOL_HEADER: &str = "angle_id,run_id,s,basis,outcome";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct PoolKey {
    angle_id: u32,
    run_id: u32,
    s: u32,
    basis: Basis,
}

/// All recorded outcomes of a campaign, ready to be partitioned per run.
#[derive(Debug, Clone, Default)]
pub struct ReplayPool {
    queues: HashMap<PoolKey, VecDeque<Outcome>>,
}

/// One line of the pool file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolLine {
    pub angle_id: u32,
    pub run_id: u32,
    pub s: u32,
    pub basis: Basis,
    pub outcome: Outcome,
}

impl ReplayPool {
    pub fn new() -> Self {
        ReplayPool::default()
    }

    pub fn push(&mut self, line: PoolLine) {
        self.queues
            .entry(PoolKey {
                angle_id: line.angle_id,
                run_id: line.run_id,
                s: line.s,
                basis: line.basis,
            })
            .or_default()
            .push_back(line.outcome);
    }

    pub fn read(source: impl BufRead, controls: &ControlSet) -> Result<Self> {
        let mut pool = ReplayPool::new();
        let mut lines = source.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| CliError::validation("pool file is empty"))?
            .1
            .map(|h| (0usize, h))
            .map_err(CliError::from)?;
        if header.trim() != POOL_HEADER {
            return Err(CliError::validation(format!(
                "pool header must be '{POOL_HEADER}', got '{header}'"
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
            if fields.len() != 5 {
                return Err(CliError::validation(format!(
                    "pool line {line_no}: expected 5 fields"
                )));
            }
            let angle_id: u32 = fields[0]
                .trim()
                .parse()
                .map_err(|_| CliError::validation(format!("pool line {line_no}: bad angle_id")))?;
            let run_id: u32 = fields[1]
                .trim()
                .parse()
                .map_err(|_| CliError::validation(format!("pool line {line_no}: bad run_id")))?;
            let s: u32 = fields[2].trim().parse().map_err(|_| {
                CliError::validation(format!("pool line {line_no}: bad control value"))
            })?;
            if controls.index_of(s).is_none() {
                return Err(CliError::validation(format!(
                    "pool line {line_no}: control s={s} not in the configured set"
                )));
            }
            let basis = parse_basis(fields[3].trim())
                .ok_or_else(|| CliError::validation(format!("pool line {line_no}: bad basis")))?;
            let value: i8 = fields[4]
                .trim()
                .parse()
                .map_err(|_| CliError::validation(format!("pool line {line_no}: bad outcome")))?;
            let outcome = Outcome::from_value(value)
                .map_err(|e| CliError::validation(format!("pool line {line_no}: {e}")))?;
            pool.push(PoolLine {
                angle_id,
                run_id,
                s,
                basis,
                outcome,
            });
        }
        Ok(pool)
    }

    /// Extracts the single-consumer slice for one `(angle, run)` pair.
    pub fn take_run(&mut self, angle_id: u32, run_id: u32) -> RunPool {
        let keys: Vec<PoolKey> = self
            .queues
            .keys()
            .filter(|k| k.angle_id == angle_id && k.run_id == run_id)
            .cloned()
            .collect();
        let mut queues = HashMap::new();
        for key in keys {
            if let Some(queue) = self.queues.remove(&key) {
                queues.insert((key.s, key.basis), queue);
            }
        }
        RunPool { queues }
    }

    pub fn is_empty(&self) -> bool {
        self.queues.values().all(|q| q.is_empty())
    }
}

/// The per-run slice of a pool; implements the outcome source contract.
#[derive(Debug, Clone, Default)]
pub struct RunPool {
    queues: HashMap<(u32, Basis), VecDeque<Outcome>>,
}

impl RunPool {
    pub fn remaining(&self) -> usize {
        self.queues.values().map(|q| q.len()).sum()
    }

    pub fn next_for(&mut self, setting: &ControlSetting) -> Option<Outcome> {
        self.queues
            .get_mut(&(setting.s, setting.basis))
            .and_then(|q| q.pop_front())
    }
}

impl OutcomeSource for RunPool {
    fn next_outcome(&mut self, setting: &ControlSetting) -> qrot_core::Result<Outcome> {
        self.next_for(setting).ok_or(CoreError::SourceExhausted {
            s: setting.s,
            basis: setting.basis,
        })
    }
}

pub fn write_pool(sink: &mut impl Write, lines: &[PoolLine]) -> std::io::Result<()> {
    writeln!(sink, "{POOL_HEADER}")?;
    for line in lines {
        writeln!(
            sink,
            "{},{},{},{},{}",
            line.angle_id,
            line.run_id,
            line.s,
            basis_label(line.basis),
            line.outcome.value()
        )?;
    }
    Ok(())
}
