// SPDX-License-Identifier: Apache-2.0

//! Synthetic and file-backed client populations.

use std::io::BufRead;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::client::{clip_changes, pad_to_power_of_two, ChangeSequence};
use crate::error::{Error, Result};
use crate::randomizer::RandomSource;

/// How client change sequences are produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputModel {
    /// Every client changes at the same `k` evenly spaced steps, alternating
    /// on and off, starting with an on-switch at step 1.
    WorstCaseSparse,
    /// Each client switches on and off at `k` uniformly chosen distinct steps.
    RandomChanges,
    /// Every client switches on at step `at` and stays on.
    StepFunction { at: usize },
    /// One JSON array of changes per line, or `{"x": [...]}` objects.
    File { path: PathBuf },
}

impl InputModel {
    pub fn label(&self) -> &'static str {
        match self {
            InputModel::WorstCaseSparse => "worst-case-sparse",
            InputModel::RandomChanges => "random-changes",
            InputModel::StepFunction { .. } => "step-function",
            InputModel::File { .. } => "file",
        }
    }
}

/// Change sequences padded to a power-of-two horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    pub inputs: Vec<ChangeSequence>,
    /// Clients whose input had more than `k` changes and was clipped.
    pub clipped: usize,
}

impl Population {
    /// Running totals `f_t = sum_i st_i[t]`.
    pub fn ground_truth(&self) -> Vec<i64> {
        let d = self.inputs.first().map_or(0, ChangeSequence::len);
        let mut f = vec![0i64; d];
        for x in &self.inputs {
            for (acc, s) in f.iter_mut().zip(x.states()) {
                *acc += s;
            }
        }
        f
    }
}

fn alternating(positions: &[usize], d: usize) -> Vec<i8> {
    let mut x = vec![0i8; d];
    for (j, &p) in positions.iter().enumerate() {
        x[p] = if j % 2 == 0 { 1 } else { -1 };
    }
    x
}

/// Builds `n` change sequences of horizon `d` (padded to the next power of
/// two) under `model`, each with at most `k` changes.
pub fn generate_inputs<R: RandomSource + ?Sized>(
    n: usize,
    d: usize,
    k: usize,
    model: &InputModel,
    rng: &mut R,
) -> Result<Population> {
    if n == 0 || d == 0 || k == 0 {
        return Err(Error::invalid(format!(
            "need n, d, k >= 1, got n={n}, d={d}, k={k}"
        )));
    }
    let finish =
        |raw: Vec<i8>| -> Result<ChangeSequence> { ChangeSequence::new(pad_to_power_of_two(&raw), k) };
    match model {
        InputModel::WorstCaseSparse => {
            let changes = k.min(d);
            let positions: Vec<usize> = (0..changes).map(|j| j * d / changes).collect();
            let x = finish(alternating(&positions, d))?;
            Ok(Population {
                inputs: vec![x; n],
                clipped: 0,
            })
        }
        InputModel::RandomChanges => {
            let changes = k.min(d);
            let inputs = (0..n)
                .map(|_| {
                    // partial Fisher-Yates: first `changes` slots are a uniform subset
                    let mut slots: Vec<usize> = (0..d).collect();
                    for i in 0..changes {
                        let j = i + rng.uniform_index(d - i);
                        slots.swap(i, j);
                    }
                    let mut positions = slots[..changes].to_vec();
                    positions.sort_unstable();
                    finish(alternating(&positions, d))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Population { inputs, clipped: 0 })
        }
        InputModel::StepFunction { at } => {
            if *at == 0 || *at > d {
                return Err(Error::invalid(format!("step time {at} outside [1, {d}]")));
            }
            let mut raw = vec![0i8; d];
            raw[at - 1] = 1;
            let x = finish(raw)?;
            Ok(Population {
                inputs: vec![x; n],
                clipped: 0,
            })
        }
        InputModel::File { path } => {
            let file = std::fs::File::open(path)?;
            let population = read_inputs_jsonl(std::io::BufReader::new(file), d, k)?;
            if population.inputs.len() != n {
                return Err(Error::invalid(format!(
                    "input file holds {} clients but n = {n}",
                    population.inputs.len()
                )));
            }
            Ok(population)
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InputRow {
    Bare(Vec<i8>),
    Object { x: Vec<i8> },
}

/// Reads one client per line. Rows shorter than `d` are zero-padded, longer
/// rows are rejected, and rows with more than `k` changes are clipped.
pub fn read_inputs_jsonl<R: BufRead>(reader: R, d: usize, k: usize) -> Result<Population> {
    let mut inputs = Vec::new();
    let mut clipped = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let row: InputRow = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let mut x = match row {
            InputRow::Bare(x) | InputRow::Object { x } => x,
        };
        if x.len() > d {
            return Err(parse_err(format!("{} steps exceed horizon {d}", x.len())));
        }
        x.resize(d, 0);
        let seq = clip_changes(&x, k).map_err(|e| parse_err(e.to_string()))?;
        if seq.nonzeros() < x.iter().filter(|&&v| v != 0).count() {
            clipped += 1;
        }
        inputs.push(ChangeSequence::new(pad_to_power_of_two(seq.changes()), k)?);
    }
    if inputs.is_empty() {
        return Err(Error::invalid("input file holds no clients"));
    }
    Ok(Population { inputs, clipped })
}
