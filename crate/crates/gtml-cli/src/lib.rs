//! Experiment harness behind the `gtml` binary.
//!
//! Each command reads one TOML config, runs a reproducible experiment and
//! writes CSV (plus JSON for the end-to-end run) into the output
//! directory. Every CSV starts with a `#` metadata comment (the only
//! non-deterministic line; reproducibility comparisons strip `#` lines)
//! followed by the schema row.

pub mod csvout;
pub mod experiments;
