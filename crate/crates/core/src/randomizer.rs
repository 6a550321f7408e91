// SPDX-License-Identifier: Apache-2.0

//! Local randomizers and the randomness they consume.
//!
//! All randomized code in the crate draws its coins through [`RandomSource`].
//! Production code uses [`RandomnessStream`], a ChaCha12 stream addressed by a
//! `(seed, stream_id)` pair. [`enumerate_outcomes`] drives the same code with
//! every possible coin sequence instead, which turns any randomized procedure
//! with finitely many branches into its exact output distribution.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::privacy::{check_nonneg_epsilon, check_pos_epsilon, rr_probability};

/// The coin-flipping primitives every randomized algorithm here is written against.
pub trait RandomSource {
    /// Uniform draw from `0..n`; `n` must be positive.
    fn uniform_index(&mut self, n: usize) -> usize;

    /// `true` with probability `p`.
    fn bernoulli(&mut self, p: f64) -> bool;

    /// `true` with probability exactly 1/2.
    fn fair_coin(&mut self) -> bool {
        self.bernoulli(0.5)
    }
}

impl<R: RandomSource + ?Sized> RandomSource for &mut R {
    fn uniform_index(&mut self, n: usize) -> usize {
        (**self).uniform_index(n)
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        (**self).bernoulli(p)
    }

    fn fair_coin(&mut self) -> bool {
        (**self).fair_coin()
    }
}

/// A reproducible random stream.
///
/// The 64-bit `seed` keys a ChaCha12 generator and `stream_id` selects one of
/// its 2^64 independent streams, so the same pair always reproduces the same
/// draws and distinct pairs never share keystream. Hierarchical labels such as
/// `(trial, client)` are folded into a stream id with [`RandomnessStream::derive`].
#[derive(Debug, Clone)]
pub struct RandomnessStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RandomnessStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomnessStream { seed, stream_id, rng }
    }

    /// Stream for a path of labels below `seed`, e.g. `[domain, trial, client]`.
    pub fn derive(seed: u64, labels: &[u64]) -> Self {
        Self::new(seed, derive_stream_id(labels))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

/// Folds a label path into a stream id with the SplitMix64 finalizer.
pub fn derive_stream_id(labels: &[u64]) -> u64 {
    let mut h: u64 = 0x6a09_e667_f3bc_c908 ^ labels.len() as u64;
    for &label in labels {
        h = splitmix64(h ^ splitmix64(label));
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomSource for RandomnessStream {
    fn uniform_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_index over an empty range");
        self.rng.random_range(0..n)
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn fair_coin(&mut self) -> bool {
        self.rng.random::<bool>()
    }
}

/// Randomized response on a sign: keeps `c` with probability
/// `e^{eps/2} / (1 + e^{eps/2})` and flips it otherwise.
pub fn binary_rr<R: RandomSource + ?Sized>(c: i8, epsilon: f64, rng: &mut R) -> Result<i8> {
    if c != 1 && c != -1 {
        return Err(Error::invalid(format!(
            "randomized response needs c in {{-1, 1}}, got {c}"
        )));
    }
    check_nonneg_epsilon(epsilon)?;
    let keep = rng.bernoulli(rr_probability(epsilon)?);
    Ok(if keep { c } else { -c })
}

/// A data-independent uniform sign.
pub fn uniform_sign<R: RandomSource + ?Sized>(rng: &mut R) -> i8 {
    if rng.fair_coin() {
        1
    } else {
        -1
    }
}

/// One step of a sequential local protocol.
///
/// The `i`-th randomizer sees the outputs of all previous steps and one data
/// element. Implementations must be `epsilon0`-DP in the data element for every
/// fixing of the prior outputs.
pub trait LocalRandomizer {
    type Input;
    type Output: Clone;

    fn epsilon0(&self) -> f64;

    fn randomize<R: RandomSource + ?Sized>(
        &self,
        prior: &[Self::Output],
        input: &Self::Input,
        rng: &mut R,
    ) -> Self::Output;
}

/// One-bit randomized response: reports the input bit with probability
/// `e^{eps0} / (1 + e^{eps0})`, the flipped bit otherwise. Ignores prior outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneBitRr {
    epsilon0: f64,
    keep: f64,
}

impl OneBitRr {
    pub fn keep_probability(&self) -> f64 {
        self.keep
    }
}

pub fn one_bit_rr_randomizer(epsilon0: f64) -> Result<OneBitRr> {
    check_pos_epsilon(epsilon0)?;
    Ok(OneBitRr {
        epsilon0,
        keep: 1.0 / (1.0 + (-epsilon0).exp()),
    })
}

impl LocalRandomizer for OneBitRr {
    type Input = u8;
    type Output = u8;

    fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    fn randomize<R: RandomSource + ?Sized>(&self, _prior: &[u8], input: &u8, rng: &mut R) -> u8 {
        debug_assert!(*input <= 1, "one-bit randomizer input must be 0 or 1");
        if rng.bernoulli(self.keep) {
            *input
        } else {
            1 - *input
        }
    }
}

/// A [`RandomSource`] that replays a forced prefix of choices and records the
/// probability of the branch it walks. Used by [`enumerate_outcomes`].
#[derive(Debug)]
pub struct Enumerator<'a> {
    forced: &'a [usize],
    taken: Vec<(usize, usize)>,
    weight: f64,
}

impl Enumerator<'_> {
    fn choose(&mut self, arity: usize) -> usize {
        let pos = self.taken.len();
        let choice = self.forced.get(pos).copied().unwrap_or(0);
        self.taken.push((choice, arity));
        choice
    }
}

impl RandomSource for Enumerator<'_> {
    fn uniform_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_index over an empty range");
        let c = self.choose(n);
        self.weight /= n as f64;
        c
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        let heads = self.choose(2) == 0;
        self.weight *= if heads { p } else { 1.0 - p };
        heads
    }
}

/// Exact output distribution of a randomized procedure with finitely many coin
/// sequences, obtained by running it once per sequence. Outcomes are merged and
/// zero-probability branches dropped.
///
/// The procedure must be deterministic given its coins.
pub fn enumerate_outcomes<T, F>(mut f: F) -> Vec<(T, f64)>
where
    T: Ord,
    F: FnMut(&mut Enumerator<'_>) -> T,
{
    let mut dist: BTreeMap<T, f64> = BTreeMap::new();
    let mut path: Vec<usize> = Vec::new();
    loop {
        let mut e = Enumerator {
            forced: &path,
            taken: Vec::new(),
            weight: 1.0,
        };
        let out = f(&mut e);
        let Enumerator {
            mut taken, weight, ..
        } = e;
        if weight > 0.0 {
            *dist.entry(out).or_insert(0.0) += weight;
        }
        // odometer step over the recorded choice tree
        loop {
            match taken.pop() {
                Some((c, arity)) if c + 1 < arity => {
                    taken.push((c + 1, arity));
                    break;
                }
                Some(_) => continue,
                None => return dist.into_iter().collect(),
            }
        }
        path = taken.into_iter().map(|(c, _)| c).collect();
    }
}

/// Largest likelihood ratio `Pr[s | x] / Pr[s | x']` of one randomizer step over
/// all outputs `s` and input pairs, computed by exact enumeration. Infinite when
/// some output is reachable from one input but not another.
pub fn max_likelihood_ratio<Z>(randomizer: &Z, prior: &[Z::Output], inputs: &[Z::Input]) -> f64
where
    Z: LocalRandomizer,
    Z::Output: Ord,
{
    let dists: Vec<BTreeMap<Z::Output, f64>> = inputs
        .iter()
        .map(|x| {
            enumerate_outcomes(|e| randomizer.randomize(prior, x, e))
                .into_iter()
                .collect()
        })
        .collect();
    let mut worst: f64 = 1.0;
    for a in &dists {
        for b in &dists {
            for (s, pa) in a {
                let pb = b.get(s).copied().unwrap_or(0.0);
                worst = worst.max(if pb == 0.0 { f64::INFINITY } else { pa / pb });
            }
        }
    }
    worst
}
