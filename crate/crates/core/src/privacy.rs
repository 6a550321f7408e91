// SPDX-License-Identifier: Apache-2.0

//! Privacy-parameter arithmetic: randomized-response constants, advanced
//! composition, amplification by subsampling and the hockey-stick distance
//! between two discrete distributions.
//!
//! Every `e^x - 1` goes through [`f64::exp_m1`] and every `log(1 + y)` through
//! [`f64::ln_1p`] so that budgets around `1e-3` keep full precision.

use serde::{Deserialize, Serialize};

use crate::divergence::DiscreteDistribution;
use crate::error::{Error, Result};

/// An `(epsilon, delta)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        check_nonneg_epsilon(epsilon)?;
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(PrivacyParams { epsilon, delta })
    }

    /// Pure `epsilon`-DP.
    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }
}

/// Weight of the sensitive component in a subsampling mixture; `0 < q < 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SubsampleRate(f64);

impl SubsampleRate {
    pub fn new(q: f64) -> Result<Self> {
        if q > 0.0 && q < 0.5 {
            Ok(SubsampleRate(q))
        } else {
            Err(Error::invalid(format!(
                "subsample rate must lie in (0, 1/2), got {q}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

pub(crate) fn check_nonneg_epsilon(epsilon: f64) -> Result<()> {
    if epsilon >= 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )))
    }
}

pub(crate) fn check_pos_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "epsilon must be finite and > 0, got {epsilon}"
        )))
    }
}

/// Probability that randomized response with budget `epsilon` keeps the true
/// sign: `e^{eps/2} / (1 + e^{eps/2})`.
pub fn rr_probability(epsilon: f64) -> Result<f64> {
    check_nonneg_epsilon(epsilon)?;
    Ok(1.0 / (1.0 + (-epsilon / 2.0).exp()))
}

/// Debiasing factor `c_eps = (e^{eps/2} + 1) / (e^{eps/2} - 1)`, the reciprocal
/// of the randomized-response bias `2p - 1`.
pub fn scale_factor(epsilon: f64) -> Result<f64> {
    check_pos_epsilon(epsilon)?;
    let m = (epsilon / 2.0).exp_m1();
    Ok((m + 2.0) / m)
}

/// Advanced composition of `k` adaptively chosen `(epsilon, delta)`-DP
/// mechanisms: returns `(eps sqrt(2k log(1/delta')) + k eps (e^eps - 1), k delta + delta')`.
pub fn advanced_composition(epsilon: f64, delta: f64, k: u64, delta_prime: f64) -> Result<PrivacyParams> {
    let base = PrivacyParams::new(epsilon, delta)?;
    if k == 0 {
        return Err(Error::invalid("composition needs k >= 1"));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::invalid(format!(
            "delta' must lie in (0, 1), got {delta_prime}"
        )));
    }
    let k_f = k as f64;
    let eps = base.epsilon * (2.0 * k_f * (1.0 / delta_prime).ln()).sqrt()
        + k_f * base.epsilon * base.epsilon.exp_m1();
    Ok(PrivacyParams {
        epsilon: eps,
        delta: k_f * base.delta + delta_prime,
    })
}

/// Amplification by subsampling: a `q`-weighted mixture with an `epsilon`-close
/// component is `log(q (e^eps - 1) + 1)`-close. The matching delta is `q * delta`.
pub fn subsample_amplify(epsilon: f64, q: SubsampleRate) -> Result<f64> {
    check_nonneg_epsilon(epsilon)?;
    Ok((q.get() * epsilon.exp_m1()).ln_1p())
}

/// Smallest `delta` such that `p` and `q` are `(epsilon, delta)`-close in both
/// directions: `max(sum (P - e^eps Q)+, sum (Q - e^eps P)+)`.
pub fn hockey_stick_delta(p: &DiscreteDistribution, q: &DiscreteDistribution, epsilon: f64) -> Result<f64> {
    check_nonneg_epsilon(epsilon)?;
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "support mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(hockey_stick_slices(p.probs(), q.probs(), epsilon))
}

/// Unchecked kernel behind [`hockey_stick_delta`]; both slices must have equal length.
pub(crate) fn hockey_stick_slices(p: &[f64], q: &[f64], epsilon: f64) -> f64 {
    let scale = epsilon.exp();
    let mut forward = KahanSum::default();
    let mut backward = KahanSum::default();
    for (&a, &b) in p.iter().zip(q) {
        forward.add((a - scale * b).max(0.0));
        backward.add((b - scale * a).max(0.0));
    }
    forward.value().max(backward.value()).clamp(0.0, 1.0)
}

/// Compensated (Kahan–Babuška) accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}
