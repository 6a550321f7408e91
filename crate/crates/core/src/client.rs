// SPDX-License-Identifier: Apache-2.0

//! Client side of the longitudinal counting protocol.
//!
//! Each client tracks at most `k` changes of a boolean state over a horizon of
//! `d` steps (a power of two). At setup it samples which change it will ever
//! report on (`kappa_star`) and which level of the dyadic tree it reports at
//! (`h_star`). It then emits exactly `d / 2^(h_star-1)` reports, one at the end
//! of every level-`h_star` block: a randomized-response copy of the chosen
//! change in the block that contains it, a uniform sign everywhere else.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::check_pos_epsilon;
use crate::randomizer::{binary_rr, uniform_sign, RandomSource};

/// Number of tree levels for horizon `d`: `log2(d) + 1`.
pub fn level_count(d: usize) -> u32 {
    d.trailing_zeros() + 1
}

pub(crate) fn check_horizon(d: usize) -> Result<()> {
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::invalid(format!(
            "horizon d must be a positive power of two, got {d} (see pad_to_power_of_two)"
        )));
    }
    Ok(())
}

/// One emitted `(h, t, u)` triple. Carries no client identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Report {
    pub h: u32,
    pub t: usize,
    pub u: i8,
}

impl Report {
    /// Index `j` of the tree node `[h, j]` this report lands in.
    pub fn node(&self) -> usize {
        self.t >> (self.h - 1)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |reason: String| Error::MalformedReport {
            h: self.h,
            t: self.t,
            u: self.u,
            reason,
        };
        if self.h == 0 || self.h > level_count(d) {
            return Err(bad(format!("level outside [1, {}]", level_count(d))));
        }
        if self.t == 0 || self.t > d {
            return Err(bad(format!("timestep outside [1, {d}]")));
        }
        if self.t % (1usize << (self.h - 1)) != 0 {
            return Err(bad(format!(
                "2^(h-1) = {} does not divide t",
                1usize << (self.h - 1)
            )));
        }
        if self.u != 1 && self.u != -1 {
            return Err(bad("value must be -1 or 1".into()));
        }
        Ok(())
    }
}

/// A report tagged with the emitting client. Only for debugging non-anonymized
/// runs; the extra field makes such streams easy to reject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebugReport {
    #[serde(flatten)]
    pub report: Report,
    pub debug_client_id: u64,
}

/// Per-step state changes `x[1..=d]` with entries in `{-1, 0, 1}` and at most `k` nonzeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSequence(Vec<i8>);

impl ChangeSequence {
    pub fn new(x: Vec<i8>, k: usize) -> Result<Self> {
        check_change_values(&x)?;
        let nnz = x.iter().filter(|&&v| v != 0).count();
        if nnz > k {
            return Err(Error::invalid(format!("{nnz} changes exceed the budget k = {k}")));
        }
        Ok(ChangeSequence(x))
    }

    pub fn changes(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn nonzeros(&self) -> usize {
        self.0.iter().filter(|&&v| v != 0).count()
    }

    /// Running state `st[t] = sum_{l <= t} x[l]`.
    pub fn states(&self) -> Vec<i64> {
        self.0
            .iter()
            .scan(0i64, |acc, &v| {
                *acc += v as i64;
                Some(*acc)
            })
            .collect()
    }

    /// Whether the running state stays boolean.
    pub fn is_boolean_state(&self) -> bool {
        self.states().iter().all(|&s| s == 0 || s == 1)
    }
}

fn check_change_values(x: &[i8]) -> Result<()> {
    match x.iter().position(|v| !(-1..=1).contains(v)) {
        Some(i) => Err(Error::invalid(format!(
            "change at step {} is {}, expected -1, 0 or 1",
            i + 1,
            x[i]
        ))),
        None => Ok(()),
    }
}

/// Keeps the first `k` nonzero changes and zeroes out the rest.
pub fn clip_changes(x: &[i8], k: usize) -> Result<ChangeSequence> {
    check_change_values(x)?;
    let mut seen = 0;
    let clipped = x
        .iter()
        .map(|&v| {
            if v == 0 {
                return 0;
            }
            seen += 1;
            if seen <= k {
                v
            } else {
                0
            }
        })
        .collect();
    Ok(ChangeSequence(clipped))
}

/// Extends `x` with zero changes up to the next power of two.
pub fn pad_to_power_of_two(x: &[i8]) -> Vec<i8> {
    let mut padded = x.to_vec();
    padded.resize(x.len().max(1).next_power_of_two(), 0);
    padded
}

/// The four counters a client keeps, plus bookkeeping for sequential updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    d: usize,
    k: usize,
    kappa_star: usize,
    h_star: u32,
    kappa: usize,
    c: i8,
    t_last: usize,
    epsilon: Option<f64>,
}

impl ClientState {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kappa_star(&self) -> usize {
        self.kappa_star
    }

    pub fn h_star(&self) -> u32 {
        self.h_star
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn pending(&self) -> i8 {
        self.c
    }

    pub fn t_last(&self) -> usize {
        self.t_last
    }

    /// Reports a full run emits: `d / 2^(h_star-1)`.
    pub fn report_count(&self) -> usize {
        self.d >> (self.h_star - 1)
    }

    /// State with fixed samples, for tests and hand traces.
    pub fn with_samples(d: usize, k: usize, kappa_star: usize, h_star: u32) -> Result<Self> {
        check_horizon(d)?;
        if k == 0 || kappa_star == 0 || kappa_star > k {
            return Err(Error::invalid(format!(
                "need 1 <= kappa_star <= k, got {kappa_star}, {k}"
            )));
        }
        if h_star == 0 || h_star > level_count(d) {
            return Err(Error::invalid(format!(
                "h_star {h_star} outside [1, {}]",
                level_count(d)
            )));
        }
        Ok(ClientState {
            d,
            k,
            kappa_star,
            h_star,
            kappa: 0,
            c: 0,
            t_last: 0,
            epsilon: None,
        })
    }

    /// Processes step `t` (which must be `t_last + 1`) with change `x_t`.
    pub fn update<R: RandomSource + ?Sized>(
        &mut self,
        t: usize,
        x_t: i8,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Option<Report>> {
        if t != self.t_last + 1 || t > self.d {
            return Err(Error::Protocol(format!(
                "expected timestep {} (horizon {}), got {t}",
                self.t_last + 1,
                self.d
            )));
        }
        if !(-1..=1).contains(&x_t) {
            return Err(Error::invalid(format!("change {x_t} not in {{-1, 0, 1}}")));
        }
        match self.epsilon {
            None => {
                check_pos_epsilon(epsilon)?;
                self.epsilon = Some(epsilon);
            }
            Some(e) if e != epsilon => {
                return Err(Error::Protocol(format!(
                    "budget changed mid-run from {e} to {epsilon}"
                )));
            }
            Some(_) => {}
        }
        self.t_last = t;

        if x_t != 0 {
            self.kappa += 1;
            if self.kappa == self.kappa_star {
                self.c = x_t;
            }
        }
        if t % (1usize << (self.h_star - 1)) != 0 {
            return Ok(None);
        }
        let u = if self.c == 0 {
            uniform_sign(rng)
        } else {
            let u = binary_rr(self.c, epsilon, rng)?;
            self.c = 0;
            u
        };
        Ok(Some(Report { h: self.h_star, t, u }))
    }
}

/// Samples `kappa_star` uniformly from `[k]` and `h_star` uniformly from `[log2(d) + 1]`.
pub fn client_setup<R: RandomSource + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<ClientState> {
    check_horizon(d)?;
    if k == 0 {
        return Err(Error::invalid("change budget k must be >= 1"));
    }
    let kappa_star = 1 + rng.uniform_index(k);
    let h_star = 1 + rng.uniform_index(level_count(d) as usize) as u32;
    ClientState::with_samples(d, k, kappa_star, h_star)
}

pub fn client_update<R: RandomSource + ?Sized>(
    state: &mut ClientState,
    t: usize,
    x_t: i8,
    epsilon: f64,
    rng: &mut R,
) -> Result<Option<Report>> {
    state.update(t, x_t, epsilon, rng)
}

/// Setup followed by one update per step of `x`; returns every emitted report.
pub fn run_client<R: RandomSource + ?Sized>(
    x: &ChangeSequence,
    k: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<Report>> {
    let mut state = client_setup(x.len(), k, rng)?;
    let mut reports = Vec::with_capacity(state.report_count());
    for (i, &x_t) in x.changes().iter().enumerate() {
        if let Some(r) = state.update(i + 1, x_t, epsilon, rng)? {
            reports.push(r);
        }
    }
    Ok(reports)
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON-lines report stream, skipping blank lines. Unknown fields
/// (such as a debug client id) are ignored.
pub fn read_reports_jsonl<R: BufRead>(r: R) -> Result<Vec<Report>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let report: Report = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(report);
    }
    Ok(out)
}
