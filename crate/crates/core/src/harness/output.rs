// SPDX-License-Identifier: Apache-2.0

//! Result serialization. Every float is written with 17 significant digits
//! so that a value read back is bit-identical to the one written.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{SimulationResult, TrialResult};
use crate::error::{Error, Result};

/// Quantile levels reported for the max-error distribution.
pub const QUANTILE_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// Across-trial statistics of the max error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub median_max_abs_error: f64,
    /// `(level, value)` pairs for [`QUANTILE_LEVELS`].
    pub max_abs_error_quantiles: Vec<(f64, f64)>,
    pub fraction_within_bound: f64,
}

impl Summary {
    pub fn from_trials(trials: &[TrialResult]) -> Self {
        let mut errs: Vec<f64> = trials.iter().map(|t| t.max_abs_error).collect();
        errs.sort_by(f64::total_cmp);
        let within = trials.iter().filter(|t| t.bound_satisfied).count();
        Summary {
            trials: trials.len(),
            median_max_abs_error: quantile(&errs, 0.5),
            max_abs_error_quantiles: QUANTILE_LEVELS.iter().map(|&q| (q, quantile(&errs, q))).collect(),
            fraction_within_bound: within as f64 / trials.len().max(1) as f64,
        }
    }
}

/// Linear-interpolation quantile of sorted data (`(n - 1) q` positioning).
/// Returns NaN for empty input.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub(crate) fn format_float(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("cannot serialize non-finite value {x}")));
    }
    Ok(format!("{x:.16e}"))
}

fn write_value<W: Write>(w: &mut W, v: &Value, indent: Option<usize>) -> Result<()> {
    let Some(indent) = indent else {
        return write_compact(w, v);
    };
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Number(num) if num.is_f64() => {
            write!(w, "{}", format_float(num.as_f64().unwrap())?)?;
        }
        Value::Array(items) if items.is_empty() => write!(w, "[]")?,
        Value::Array(items) if items.iter().all(|i| !i.is_array() && !i.is_object()) => {
            write!(w, "[")?;
            for (j, item) in items.iter().enumerate() {
                if j > 0 {
                    write!(w, ", ")?;
                }
                write_value(w, item, Some(indent))?;
            }
            write!(w, "]")?;
        }
        Value::Array(items) => {
            writeln!(w, "[")?;
            for (j, item) in items.iter().enumerate() {
                write!(w, "{}", pad(indent + 1))?;
                write_value(w, item, Some(indent + 1))?;
                writeln!(w, "{}", if j + 1 < items.len() { "," } else { "" })?;
            }
            write!(w, "{}]", pad(indent))?;
        }
        Value::Object(map) if map.is_empty() => write!(w, "{{}}")?,
        Value::Object(map) => {
            writeln!(w, "{{")?;
            for (j, (key, item)) in map.iter().enumerate() {
                write!(w, "{}{}: ", pad(indent + 1), serde_json::to_string(key)?)?;
                write_value(w, item, Some(indent + 1))?;
                writeln!(w, "{}", if j + 1 < map.len() { "," } else { "" })?;
            }
            write!(w, "{}}}", pad(indent))?;
        }
        other => write!(w, "{}", serde_json::to_string(other)?)?,
    }
    Ok(())
}

fn write_compact<W: Write>(w: &mut W, v: &Value) -> Result<()> {
    match v {
        Value::Number(num) if num.is_f64() => write!(w, "{}", format_float(num.as_f64().unwrap())?)?,
        Value::Array(items) => {
            write!(w, "[")?;
            for (j, item) in items.iter().enumerate() {
                if j > 0 {
                    write!(w, ",")?;
                }
                write_compact(w, item)?;
            }
            write!(w, "]")?;
        }
        Value::Object(map) => {
            write!(w, "{{")?;
            for (j, (key, item)) in map.iter().enumerate() {
                if j > 0 {
                    write!(w, ",")?;
                }
                write!(w, "{}:", serde_json::to_string(key)?)?;
                write_compact(w, item)?;
            }
            write!(w, "}}")?;
        }
        other => write!(w, "{}", serde_json::to_string(other)?)?,
    }
    Ok(())
}

/// Pretty JSON with 17-significant-digit floats.
pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    let v = serde_json::to_value(value)?;
    write_value(&mut w, &v, Some(0))?;
    writeln!(w)?;
    Ok(())
}

/// One-line JSON with 17-significant-digit floats, newline-terminated.
pub fn write_json_line<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    let v = serde_json::to_value(value)?;
    write_value(&mut w, &v, None)?;
    writeln!(w)?;
    Ok(())
}

const CSV_HEADER: [&str; 16] = [
    "n",
    "d",
    "padded_d",
    "k",
    "epsilon",
    "beta",
    "seed",
    "input_model",
    "shuffle_mode",
    "trial",
    "max_abs_error",
    "theorem_bound",
    "bound_satisfied",
    "clipped_clients",
    "reports",
    "wall_time",
];

/// One CSV row per trial, each echoing the configuration.
pub fn write_trials_csv<W: Write>(w: W, result: &SimulationResult) -> Result<()> {
    let c = &result.config;
    let mut out = csv::Writer::from_writer(w);
    let map_csv = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(CSV_HEADER).map_err(map_csv)?;
    let shuffle = match c.shuffle_mode {
        super::ShuffleMode::None => "none",
        super::ShuffleMode::PostShuffle => "post-shuffle",
    };
    for t in &result.trials {
        let wall = match t.wall_time {
            Some(s) => format_float(s)?,
            None => String::new(),
        };
        out.write_record([
            c.n.to_string(),
            c.d.to_string(),
            result.padded_d.to_string(),
            c.k.to_string(),
            format_float(c.epsilon)?,
            format_float(c.beta)?,
            c.seed.to_string(),
            c.input_model.label().to_string(),
            shuffle.to_string(),
            t.trial.to_string(),
            format_float(t.max_abs_error)?,
            format_float(t.theorem_bound)?,
            t.bound_satisfied.to_string(),
            t.clipped_clients.to_string(),
            t.reports.to_string(),
            wall,
        ])
        .map_err(map_csv)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes CSV when `path` ends in `.csv`, JSON otherwise.
pub fn write_output(path: &Path, result: &SimulationResult) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_trials_csv(file, result)
    } else {
        write_json(file, result)
    }
}
