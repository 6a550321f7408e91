// SPDX-License-Identifier: Apache-2.0

//! Exact privacy loss of shuffled one-bit randomized response.
//!
//! After shuffling, the only thing one-bit reports reveal is how many of them
//! are 1. With `m` inputs equal to 1 out of `n`, that count is distributed as
//! `Binomial(m, p) + Binomial(n - m, 1 - p)`, where `p = e^{eps0} / (1 + e^{eps0})`.
//! Neighbouring datasets have `m` and `m + 1` ones, so the exact `delta` at a
//! given `epsilon` is the largest hockey-stick distance over adjacent pairs.
//!
//! Building one distribution costs `O(m (n - m))` and the scan visits all `m`,
//! so a full certification is cubic in `n`; inputs are capped at
//! [`MAX_ORACLE_N`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplification::{amplify_shuffle, Regime};
use crate::error::{Error, Result};
use crate::privacy::{check_nonneg_epsilon, check_pos_epsilon, hockey_stick_slices, KahanSum};

/// Largest population the exact oracle accepts.
pub const MAX_ORACLE_N: usize = 10_000;

/// Tolerance on `|sum - 1|` for a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A probability vector over `{0, 1, ..., len - 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Accepts vectors whose mass is within [`NORMALIZATION_TOL`] of one and
    /// rescales them to exactly sum to one; anything further off is an error.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty probability vector"));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(format!(
                "entry {i} is {}, not a probability",
                probs[i]
            )));
        }
        let total = probs.iter().copied().collect::<KahanSum>().value();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(DiscreteDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn reversed(&self) -> Self {
        let mut probs = self.probs.clone();
        probs.reverse();
        DiscreteDistribution { probs }
    }
}

/// `ln(j!)` for `j = 0..=n`, accumulated with compensated summation.
#[derive(Debug, Clone)]
struct LogFactorials(Vec<f64>);

impl LogFactorials {
    fn new(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        let mut acc = KahanSum::default();
        table.push(0.0);
        for j in 1..=n {
            acc.add((j as f64).ln());
            table.push(acc.value());
        }
        LogFactorials(table)
    }

    fn ln_choose(&self, m: usize, j: usize) -> f64 {
        self.0[m] - self.0[j] - self.0[m - j]
    }
}

/// Binomial(m, p) pmf from log-space terms; `ln_p` and `ln_q` are `ln p`, `ln(1 - p)`.
fn binomial_pmf(m: usize, ln_p: f64, ln_q: f64, table: &LogFactorials) -> Vec<f64> {
    (0..=m)
        .map(|j| (table.ln_choose(m, j) + j as f64 * ln_p + (m - j) as f64 * ln_q).exp())
        .collect()
}

/// Shared state for building count distributions at one `(n, eps0)`.
struct CountModel {
    n: usize,
    ln_keep: f64,
    ln_flip: f64,
    table: LogFactorials,
}

impl CountModel {
    fn new(n: usize, epsilon0: f64) -> Self {
        // keep = 1 / (1 + e^{-eps0}), flip = e^{-eps0} / (1 + e^{-eps0})
        let ln_norm = (-epsilon0).exp().ln_1p();
        CountModel {
            n,
            ln_keep: -ln_norm,
            ln_flip: -epsilon0 - ln_norm,
            table: LogFactorials::new(n),
        }
    }

    /// Count of 1-reports when `m` of the `n` inputs are 1.
    fn counts(&self, m: usize) -> Vec<f64> {
        let ones = binomial_pmf(m, self.ln_keep, self.ln_flip, &self.table);
        let zeros = binomial_pmf(self.n - m, self.ln_flip, self.ln_keep, &self.table);
        convolve(&ones, &zeros)
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (o, &bj) in out[i..i + b.len()].iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
    out
}

fn check_oracle_n(n: usize) -> Result<()> {
    if n > MAX_ORACLE_N {
        return Err(Error::ResourceGuard(format!(
            "exact oracle is capped at n = {MAX_ORACLE_N}, got {n}"
        )));
    }
    Ok(())
}

/// Distribution of the number of 1-reports among `n` shuffled one-bit
/// randomized responses when `m` inputs are 1.
pub fn shuffled_rr_count_distribution(n: usize, m: usize, epsilon0: f64) -> Result<DiscreteDistribution> {
    check_pos_epsilon(epsilon0)?;
    if n == 0 || m > n {
        return Err(Error::invalid(format!(
            "need 0 <= m <= n and n >= 1, got m = {m}, n = {n}"
        )));
    }
    check_oracle_n(n)?;
    DiscreteDistribution::new(CountModel::new(n, epsilon0).counts(m))
}

/// Exact `delta` at `epsilon` for each neighbouring pair `(m, m + 1)`, `m = 0..n-1`.
pub fn divergence_profile(n: usize, epsilon0: f64, epsilon: f64) -> Result<Vec<f64>> {
    check_pos_epsilon(epsilon0)?;
    check_nonneg_epsilon(epsilon)?;
    if n < 2 {
        return Err(Error::invalid(format!("need n >= 2, got {n}")));
    }
    check_oracle_n(n)?;
    let model = CountModel::new(n, epsilon0);

    // Contiguous blocks of m share one distribution between neighbouring pairs.
    let blocks = (rayon::current_num_threads() * 4).min(n);
    let bounds: Vec<(usize, usize)> = (0..blocks)
        .map(|b| (b * n / blocks, (b + 1) * n / blocks))
        .filter(|(lo, hi)| lo < hi)
        .collect();
    let parts: Vec<Result<Vec<f64>>> = bounds
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut out = Vec::with_capacity(hi - lo);
            let mut current = checked(model.counts(lo), lo)?;
            for m in lo..hi {
                let next = checked(model.counts(m + 1), m + 1)?;
                out.push(hockey_stick_slices(&current, &next, epsilon));
                current = next;
            }
            Ok(out)
        })
        .collect();
    let mut profile = Vec::with_capacity(n);
    for part in parts {
        profile.extend(part?);
    }
    Ok(profile)
}

fn checked(probs: Vec<f64>, m: usize) -> Result<Vec<f64>> {
    let total = probs.iter().copied().collect::<KahanSum>().value();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::invalid(format!(
            "count distribution for m = {m} has mass {total}"
        )));
    }
    Ok(probs)
}

/// The smallest `delta` for which shuffled one-bit randomized response over
/// `n` users is `(epsilon, delta)`-DP. Scans every neighbouring pair.
pub fn worst_case_divergence(n: usize, epsilon0: f64, epsilon: f64) -> Result<f64> {
    Ok(divergence_profile(n, epsilon0, epsilon)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Outcome of checking a closed-form amplification bound against the exact oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub n: usize,
    pub epsilon0: f64,
    pub delta_target: f64,
    pub claimed_epsilon: f64,
    pub regime: Regime,
    pub exact_delta: f64,
    /// `exact_delta / delta_target`; below one means the claim is sound.
    pub slack_ratio: f64,
    pub pass: bool,
}

/// Evaluates [`amplify_shuffle`] at `(eps0, n, delta_target)` and checks that
/// the exact `delta` at the claimed epsilon does not exceed the target.
pub fn certify_amplification(n: usize, epsilon0: f64, delta_target: f64) -> Result<Certification> {
    let bound = amplify_shuffle(epsilon0, n as u64, delta_target)?;
    certify_claim(n, epsilon0, bound.epsilon_central, bound.regime, delta_target)
}

/// Checks an arbitrary claimed epsilon against the exact oracle.
pub fn certify_claim(
    n: usize,
    epsilon0: f64,
    claimed_epsilon: f64,
    regime: Regime,
    delta_target: f64,
) -> Result<Certification> {
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta_target}"
        )));
    }
    let exact_delta = worst_case_divergence(n, epsilon0, claimed_epsilon)?;
    Ok(Certification {
        n,
        epsilon0,
        delta_target,
        claimed_epsilon,
        regime,
        exact_delta,
        slack_ratio: exact_delta / delta_target,
        pass: exact_delta <= delta_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct sum over (ones kept, zeros flipped) without log-space tricks.
    fn naive_counts(n: usize, m: usize, p: f64) -> Vec<f64> {
        fn choose(n: usize, k: usize) -> f64 {
            (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        }
        let mut out = vec![0.0; n + 1];
        for a in 0..=m {
            for b in 0..=n - m {
                out[a + b] += choose(m, a)
                    * p.powi(a as i32)
                    * (1.0 - p).powi((m - a) as i32)
                    * choose(n - m, b)
                    * (1.0 - p).powi(b as i32)
                    * p.powi((n - m - b) as i32);
            }
        }
        out
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(DiscreteDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![f64::NAN, 1.0]).is_err());
        let d = DiscreteDistribution::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn count_distribution_examples() {
        let eps0 = 0.8f64;
        let p = eps0.exp() / (1.0 + eps0.exp());
        let d = shuffled_rr_count_distribution(1, 0, eps0).unwrap();
        assert!((d.probs()[0] - p).abs() < 1e-15);
        assert!((d.probs()[1] - (1.0 - p)).abs() < 1e-15);

        let d = shuffled_rr_count_distribution(2, 1, 3f64.ln()).unwrap();
        for (got, want) in d.probs().iter().zip([3.0 / 16.0, 10.0 / 16.0, 3.0 / 16.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(shuffled_rr_count_distribution(3, 4, 1.0).is_err());
        assert!(shuffled_rr_count_distribution(MAX_ORACLE_N + 1, 0, 1.0).is_err());
    }

    #[test]
    fn count_distribution_matches_naive_sum() {
        for (n, eps0) in [(5usize, 0.3f64), (12, 1.0), (30, 2.5)] {
            let p = eps0.exp() / (1.0 + eps0.exp());
            for m in 0..=n {
                let got = shuffled_rr_count_distribution(n, m, eps0).unwrap();
                for (a, b) in got.probs().iter().zip(naive_counts(n, m, p)) {
                    assert!((a - b).abs() < 1e-13, "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn bit_flip_symmetry_and_normalization() {
        for n in [1usize, 7, 100, 2000] {
            for m in [0, n / 3, n / 2, n] {
                let a = shuffled_rr_count_distribution(n, m, 0.4).unwrap();
                let b = shuffled_rr_count_distribution(n, n - m, 0.4).unwrap();
                let raw: f64 = CountModel::new(n, 0.4).counts(m).iter().sum();
                assert!((raw - 1.0).abs() < 1e-9);
                for (x, y) in a.reversed().probs().iter().zip(b.probs()) {
                    assert!((x - y).abs() <= 1e-12 * x.max(*y) + 1e-300, "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn worst_case_examples() {
        // n=2, eps0=ln 3: m=0 -> (9,6,1)/16, m=1 -> (3,10,3)/16, m=2 -> (1,6,9)/16
        let d = worst_case_divergence(2, 3f64.ln(), 0.0).unwrap();
        assert!((d - 6.0 / 16.0).abs() < 1e-15);
        // shuffling is post-processing, so eps >= eps0 leaves nothing
        assert!(worst_case_divergence(10, 0.5, 5.0).unwrap() < 1e-15);
        assert!(worst_case_divergence(10, 0.5, 0.5).unwrap() < 1e-15);
        assert!(worst_case_divergence(1, 0.5, 0.0).is_err());
    }

    #[test]
    fn monotone_in_epsilon() {
        let mut last = f64::INFINITY;
        for i in 0..=30 {
            let d = worst_case_divergence(60, 1.0, i as f64 * 0.05).unwrap();
            assert!(d <= last);
            last = d;
        }
    }

    #[test]
    fn profile_max_is_the_scan_max() {
        for n in [2usize, 9, 50] {
            let profile = divergence_profile(n, 1.0, 0.1).unwrap();
            assert_eq!(profile.len(), n);
            let candidates = [0, n / 2, n - 1].map(|m| profile[m]);
            let full = worst_case_divergence(n, 1.0, 0.1).unwrap();
            assert!(candidates.iter().all(|&c| c <= full));
            assert_eq!(full, profile.iter().copied().fold(0.0, f64::max));
            // pairs (m, m+1) and (n-m-1, n-m) mirror each other
            for m in 0..n {
                assert!((profile[m] - profile[n - 1 - m]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn certification_examples() {
        let c = certify_amplification(1000, 0.25, 1e-4).unwrap();
        assert!(c.pass, "{c:?}");
        assert!(c.slack_ratio < 1.0);

        let trivial = certify_amplification(2, 5.0, 1e-4).unwrap();
        assert_eq!(trivial.regime, Regime::NoAmplification);
        assert_eq!(trivial.claimed_epsilon, 5.0);
        assert!(trivial.pass);

        // A claim far below the truth fails.
        let bogus = certify_claim(200, 1.0, 1e-3, Regime::General, 1e-4).unwrap();
        assert!(!bogus.pass);
        assert!(bogus.slack_ratio > 1.0);
    }
}
