//! Run traces: complete per-phase records, strided round records, and the
//! summary. CSV schemas are versioned by their header line; appending to a
//! file with a different header is an error.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SimError};

pub const PHASE_SCHEMA_VERSION: u32 = 1;
pub const ROUND_SCHEMA_VERSION: u32 = 1;

pub const PHASE_HEADER: &str = "t,B_t,lambda_t,gap_avg,gap_last,fallback_x,fallback_y,N0_x,minNi_x,N0_y,minNi_y,delta_dual_x,delta_dual_y,conc_bound_x,conc_bound_y,conc_ok_x,conc_ok_y,resid_max_x,resid_max_y,u_inc_lhs_x,u_inc_rhs_x,u_inc_lhs_y,u_inc_rhs_y,rvu_slack_x,rvu_slack_y";
pub const ROUND_HEADER: &str = "k,t,s,reward,gap_last";

/// One player's slice of a phase record.
#[derive(Debug, Clone, Serialize)]
pub struct PlayerPhaseRecord {
    pub fallback: &'static str,
    pub n0: usize,
    pub min_ni: usize,
    /// `||theta_hat - theta_bar||_*` in the player's own dual norm.
    pub delta_dual: f64,
    /// `48 sqrt(n^3 / t^3)` for the player's own dimension.
    pub conc_bound: f64,
    pub conc_ok: bool,
    /// Largest transformed-reward residual `|r_hat - <z, theta_bar>|` of the
    /// phase (zero for fallback phases, which pair nothing).
    pub resid_max: f64,
    pub u_inc_lhs: f64,
    pub u_inc_rhs: f64,
    pub rvu_slack: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseRecord {
    pub t: usize,
    pub batch: usize,
    pub lambda: f64,
    /// Duality gap of the running averages played around during the phase.
    pub gap_avg: f64,
    /// Duality gap of the last pair actually played in the phase.
    pub gap_last: f64,
    pub row: PlayerPhaseRecord,
    pub col: PlayerPhaseRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    pub k: u64,
    pub t: usize,
    pub s: usize,
    pub reward: f64,
    /// Duality gap of the pair played this round.
    pub gap: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub phases: Vec<PhaseRecord>,
    pub rounds: Vec<RoundRecord>,
    pub meta: RunMeta,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Trace {
    pub fn total_rounds(&self) -> u64 {
        self.phases.iter().map(|p| p.batch as u64).sum()
    }

    pub fn phase_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(PHASE_HEADER);
        out.push('\n');
        for p in &self.phases {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.t,
                p.batch,
                p.lambda,
                p.gap_avg,
                p.gap_last,
                p.row.fallback,
                p.col.fallback,
                p.row.n0,
                p.row.min_ni,
                p.col.n0,
                p.col.min_ni,
                p.row.delta_dual,
                p.col.delta_dual,
                p.row.conc_bound,
                p.col.conc_bound,
                p.row.conc_ok,
                p.col.conc_ok,
                p.row.resid_max,
                p.col.resid_max,
                p.row.u_inc_lhs,
                p.row.u_inc_rhs,
                p.col.u_inc_lhs,
                p.col.u_inc_rhs,
                fmt_opt(p.row.rvu_slack),
                fmt_opt(p.col.rvu_slack),
            );
        }
        out
    }

    pub fn round_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(ROUND_HEADER);
        out.push('\n');
        for r in &self.rounds {
            let _ = writeln!(out, "{},{},{},{},{}", r.k, r.t, r.s, r.reward, r.gap);
        }
        out
    }

    /// Write (truncating) both CSVs into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("phase_log.csv"), &self.phase_csv())?;
        write_file(&dir.join("round_log.csv"), &self.round_csv())?;
        Ok(())
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Append CSV rows to `path`, writing the header first on a fresh file and
/// refusing to append under a mismatched header.
pub fn append_csv_checked(path: &Path, header: &str, rows: &str) -> Result<()> {
    let existing = match fs::read_to_string(path) {
        Ok(s) => Some(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(source) => {
            return Err(SimError::Io {
                path: path.display().to_string(),
                source,
            })
        }
    };
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
    match existing.as_deref().map(str::trim) {
        None | Some("") => {
            writeln!(file, "{header}").map_err(|source| SimError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Some(present) => {
            let first = present.lines().next().unwrap_or("");
            if first != header {
                return Err(SimError::Schema(format!(
                    "existing header {first:?} does not match {header:?}"
                )));
            }
        }
    }
    file.write_all(rows.as_bytes()).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Final `summary.json` payload.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub phase_schema_version: u32,
    pub round_schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub git_describe: String,
    pub phases: usize,
    pub rounds_total: u64,
    pub final_avg_gap: f64,
    pub final_last_gap: f64,
    pub slope_avg_gap: Option<f64>,
    pub slope_last_gap_rounds: Option<f64>,
    pub concentration_violations: usize,
    pub nonfallback_phases: usize,
    pub u_increment_violations: usize,
    pub min_rvu_slack: Option<f64>,
    pub elapsed_seconds: f64,
}

/// FNV-1a over the raw config bytes; stable fingerprint for replay checks.
pub fn config_hash(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}
