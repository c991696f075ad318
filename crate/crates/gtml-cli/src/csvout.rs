//! CSV writing with the shared output conventions.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use gtml::Result;

fn meta_line(command: &str) -> String {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# gtml {command} schema_version=1 generated_at_unix={ts}")
}

/// Writes a CSV: metadata comment, schema row, then the data rows.
pub fn write_csv(path: &Path, command: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 48 + header.len() + 64);
    text.push_str(&meta_line(command));
    text.push('\n');
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Shortest round-trip decimal form; deterministic across runs.
pub fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
