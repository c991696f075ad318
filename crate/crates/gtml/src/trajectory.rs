//! Trajectories and their line-oriented text format.
//!
//! The on-disk format is one comma-separated record per time step,
//!
//! ```text
//! t,behavior,signal,query,c1,c2
//! ```
//!
//! preceded by that header row. Lines starting with `#` are comments and
//! carry run metadata (they are excluded from reproducibility comparisons).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::spaces::{BehaviorSpace, SignalSpace, UserDistribution, UserSample};

/// One simulated time step: the behavior played, the signal emitted, and
/// the user that arrived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub behavior: usize,
    pub signal: usize,
    pub user: UserSample,
}

/// A time-ordered simulation record under one fixed mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub mechanism: Mechanism,
    pub seed: u64,
}

impl Trajectory {
    pub fn new(records: Vec<TrajectoryRecord>, mechanism: Mechanism, seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("trajectory must have at least one record".into()));
        }
        Ok(Self { records, mechanism, seed })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub const TRAJECTORY_HEADER: &str = "t,behavior,signal,query,c1,c2";

/// Serializes a trajectory in the line format, resolving indices to labels.
pub fn write_trajectory<W: Write>(
    mut w: W,
    traj: &Trajectory,
    behaviors: &BehaviorSpace,
    signals: &SignalSpace,
    users: &UserDistribution,
) -> Result<()> {
    writeln!(
        w,
        "# gtml trajectory schema_version=1 seed={} mechanism={}",
        traj.seed,
        traj.mechanism.key()
    )?;
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (t, r) in traj.records.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            t + 1,
            behaviors.label(r.behavior),
            signals.label(r.signal),
            users.query_name(r.user.query),
            u8::from(r.user.clicks[0]),
            u8::from(r.user.clicks[1]),
        )?;
    }
    Ok(())
}

pub fn save_trajectory(
    path: &Path,
    traj: &Trajectory,
    behaviors: &BehaviorSpace,
    signals: &SignalSpace,
    users: &UserDistribution,
) -> Result<()> {
    let mut buf = Vec::new();
    write_trajectory(&mut buf, traj, behaviors, signals, users)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Parses the line format back into a trajectory. The mechanism identity is
/// not recoverable from labels alone, so the caller supplies it (metadata
/// comments are informational only).
pub fn load_trajectory(
    path: &Path,
    behaviors: &BehaviorSpace,
    signals: &SignalSpace,
    users: &UserDistribution,
    mechanism: Mechanism,
) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    let mut seed = 0u64;
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            for field in meta.split_whitespace() {
                if let Some(s) = field.strip_prefix("seed=") {
                    seed = s.parse().unwrap_or(0);
                }
            }
            continue;
        }
        if !saw_header {
            if line != TRAJECTORY_HEADER {
                return Err(Error::Parse {
                    line: lineno + 1,
                    detail: format!("expected header {TRAJECTORY_HEADER:?}, got {line:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: lineno + 1,
                detail: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let behavior = behaviors.index_of(fields[1]).ok_or_else(|| Error::Parse {
            line: lineno + 1,
            detail: format!("unknown behavior label {:?}", fields[1]),
        })?;
        let signal = signals.index_of(fields[2]).ok_or_else(|| Error::Parse {
            line: lineno + 1,
            detail: format!("unknown signal label {:?}", fields[2]),
        })?;
        let query = users.query_index(fields[3]).ok_or_else(|| Error::Parse {
            line: lineno + 1,
            detail: format!("unknown query {:?}", fields[3]),
        })?;
        let parse_click = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Parse {
                line: lineno + 1,
                detail: format!("click field must be 0 or 1, got {other:?}"),
            }),
        };
        let clicks = [parse_click(fields[4])?, parse_click(fields[5])?];
        records.push(TrajectoryRecord { behavior, signal, user: UserSample { query, clicks } });
    }
    Trajectory::new(records, mechanism, seed)
}
