use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::JamKind;

pub const LOG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionOutcome {
    /// No attempt this tick.
    OffSchedule,
    Detected,
    /// Attempt blocked by low ally SNR; the stale value is kept.
    Failed,
}

/// One line of the per-tick log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub v: u32,
    /// Global tick counter, starting at 1.
    pub tick: u64,
    pub episode: u64,
    /// Simulation time within the episode, seconds.
    pub t: f64,
    pub p_ally: [f64; 3],
    pub p_opp: [f64; 3],
    pub f_ally: f64,
    pub spread: bool,
    pub hop: bool,
    pub jam_type: Option<JamKind>,
    /// Jammer envelope `[lo, hi]` in MHz.
    pub jam_band: Option<[f64; 2]>,
    pub overlap: f64,
    pub snr: f64,
    pub capacity: f64,
    pub r_ally: f64,
    pub r_opp: f64,
    pub detected: Option<f64>,
    pub detect_event: DetectionOutcome,
}

impl TickRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("tick record serializes")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let rec: TickRecord = serde_json::from_str(line).map_err(|e| Error::Log(e.to_string()))?;
        if rec.v != LOG_VERSION {
            return Err(Error::Log(format!("log version {} is not supported (expected {LOG_VERSION})", rec.v)));
        }
        Ok(rec)
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[TickRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_line())?;
    }
    Ok(())
}

/// Reads a JSON-lines log, skipping blank lines.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<TickRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(TickRecord::from_line(&line).map_err(|e| Error::Log(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
