// SPDX-License-Identifier: Apache-2.0

//! Closed-form central-DP guarantees for shuffled (or swapped) sequential
//! local protocols whose randomizers are each `eps0`-LDP.
//!
//! The per-step budget is `eps1 = 2 e^{2 eps0} (e^{eps0} - 1) / n` and the
//! general bound composes `n` such steps with advanced composition. Two
//! simplified forms hold in restricted regimes; the calculator evaluates all
//! forms that apply and reports the smallest, never exceeding `eps0` itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::check_pos_epsilon;

/// Which closed form produced the reported epsilon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    General,
    Moderate,
    Simplified,
    /// No bound beats the local budget; `eps0` is reported.
    NoAmplification,
}

/// Datasets over which the guarantee holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// Neighbouring datasets differing at any index.
    AnyIndex,
    /// Only datasets differing in their first element.
    IndexOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplificationResult {
    pub epsilon_central: f64,
    pub epsilon_1: f64,
    pub regime: Regime,
    pub delta: f64,
    pub scope: Scope,
    /// `eps1 sqrt(2 n log(1/delta)) + n eps1 (e^{eps1} - 1)`.
    pub general: f64,
    /// Present when `eps0 <= ln(n/4)/3`.
    pub moderate: Option<f64>,
    /// Present when `n >= 1000`, `eps0 < 1/2` and `delta < 1/100`.
    pub simplified: Option<f64>,
}

fn check_inputs(epsilon0: f64, n: u64, delta: f64) -> Result<()> {
    check_pos_epsilon(epsilon0)?;
    if n < 2 {
        return Err(Error::invalid(format!("amplification needs n > 1, got {n}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// `2 e^{2 eps0} (e^{eps0} - 1) / n`.
pub fn per_step_epsilon(epsilon0: f64, n: u64) -> f64 {
    2.0 * (2.0 * epsilon0).exp() * epsilon0.exp_m1() / n as f64
}

fn general_bound(epsilon0: f64, n: u64, delta: f64) -> (f64, f64) {
    let eps1 = per_step_epsilon(epsilon0, n);
    let nf = n as f64;
    let log_inv_delta = -delta.ln();
    (
        eps1,
        eps1 * (2.0 * nf * log_inv_delta).sqrt() + nf * eps1 * eps1.exp_m1(),
    )
}

fn moderate_bound(epsilon0: f64, n: u64, delta: f64) -> Option<f64> {
    let nf = n as f64;
    if epsilon0 > (nf / 4.0).ln() / 3.0 {
        return None;
    }
    let m = epsilon0.exp_m1();
    Some(
        (2.0 * epsilon0).exp() * m * (8.0 * -delta.ln() / nf).sqrt()
            + 6.0 * (4.0 * epsilon0).exp() * m * m / nf,
    )
}

fn simplified_applies(epsilon0: f64, n: u64, delta: f64) -> bool {
    n >= 1000 && epsilon0 < 0.5 && delta < 0.01
}

fn simplified_value(epsilon0: f64, n: u64, delta: f64) -> f64 {
    12.0 * epsilon0 * (-delta.ln() / n as f64).sqrt()
}

fn finish(epsilon0: f64, best: f64, regime: Regime) -> (f64, Regime) {
    if best.is_nan() || best >= epsilon0 {
        (epsilon0, Regime::NoAmplification)
    } else {
        (best, regime)
    }
}

/// Central `(eps, delta)` guarantee of shuffling `n` reports from
/// `eps0`-LDP randomizers, holding at every index.
pub fn amplify_shuffle(epsilon0: f64, n: u64, delta: f64) -> Result<AmplificationResult> {
    check_inputs(epsilon0, n, delta)?;
    let (eps1, general) = general_bound(epsilon0, n, delta);
    let moderate = moderate_bound(epsilon0, n, delta);
    let simplified = simplified_applies(epsilon0, n, delta).then(|| simplified_value(epsilon0, n, delta));

    let mut best = (general, Regime::General);
    for (value, regime) in [(moderate, Regime::Moderate), (simplified, Regime::Simplified)] {
        if let Some(v) = value {
            if v < best.0 {
                best = (v, regime);
            }
        }
    }
    let (epsilon_central, regime) = finish(epsilon0, best.0, best.1);
    Ok(AmplificationResult {
        epsilon_central,
        epsilon_1: eps1,
        regime,
        delta,
        scope: Scope::AnyIndex,
        general,
        moderate,
        simplified,
    })
}

/// Guarantee of swapping the first element with a uniform one before the
/// local pass. Holds only for neighbours differing at index 1.
pub fn amplify_swap(epsilon0: f64, n: u64, delta: f64) -> Result<AmplificationResult> {
    check_inputs(epsilon0, n, delta)?;
    let (eps1, general) = general_bound(epsilon0, n, delta);
    let (epsilon_central, regime) = finish(epsilon0, general, Regime::General);
    Ok(AmplificationResult {
        epsilon_central,
        epsilon_1: eps1,
        regime,
        delta,
        scope: Scope::IndexOne,
        general,
        moderate: None,
        simplified: None,
    })
}

/// `12 eps0 sqrt(log(1/delta) / |S|)` for a group of `group_size` reports that
/// share one randomizer and are shuffled among themselves.
///
/// Only valid for `|S| >= 1000`, `0 < eps0 < 1/2`, `0 < delta < 1/100`; other
/// inputs are rejected rather than extrapolated. Capped at `eps0` like
/// [`amplify_shuffle`].
pub fn amplify_group(epsilon0: f64, group_size: u64, delta: f64) -> Result<AmplificationResult> {
    check_pos_epsilon(epsilon0)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if group_size < 1000 || epsilon0 >= 0.5 || delta >= 0.01 {
        return Err(Error::OutOfRegime(format!(
            "group bound needs |S| >= 1000, eps0 < 1/2, delta < 1/100; got |S| = {group_size}, eps0 = {epsilon0}, delta = {delta}"
        )));
    }
    let value = simplified_value(epsilon0, group_size, delta);
    let (eps1, general) = general_bound(epsilon0, group_size, delta);
    let (epsilon_central, regime) = finish(epsilon0, value, Regime::Simplified);
    Ok(AmplificationResult {
        epsilon_central,
        epsilon_1: eps1,
        regime,
        delta,
        scope: Scope::AnyIndex,
        general,
        moderate: moderate_bound(epsilon0, group_size, delta),
        simplified: Some(value),
    })
}

/// Rényi-DP epsilon at order `alpha`: `2 alpha e^{4 eps0} (e^{eps0} - 1)^2 / n`.
pub fn rdp_bound(epsilon0: f64, n: u64, alpha: f64) -> Result<f64> {
    check_pos_epsilon(epsilon0)?;
    if n < 2 {
        return Err(Error::invalid(format!("amplification needs n > 1, got {n}")));
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("RDP order must be >= 1, got {alpha}")));
    }
    let m = epsilon0.exp_m1();
    Ok(2.0 * alpha * (4.0 * epsilon0).exp() * m * m / n as f64)
}

/// Reference curve `min(1, eps0) e^{eps0/2} sqrt(log(1/delta)/n)` for one-bit
/// randomized response. The true bound is only known up to a constant, so this
/// is for plotting and comparison, never a certified epsilon.
pub fn binary_case_bound(epsilon0: f64, n: u64, delta: f64) -> Result<f64> {
    check_inputs(epsilon0, n, delta)?;
    Ok(epsilon0.min(1.0) * (epsilon0 / 2.0).exp() * (-delta.ln() / n as f64).sqrt())
}
