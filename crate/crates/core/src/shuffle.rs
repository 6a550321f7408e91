// SPDX-License-Identifier: Apache-2.0

//! Sequential local protocols and their shuffled variants.
//!
//! [`run_local`] applies one randomizer per position, each seeing the outputs
//! before it. [`run_shuffled`] first permutes the dataset uniformly, and
//! [`run_swap`] only swaps the first element with a uniformly chosen one.
//! [`shuffle_responses`] is the deployable form: permute already randomized
//! outputs that came from identical randomizers.
//!
//! Sampled permutations are consumed and dropped; they never appear in outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomizer::{LocalRandomizer, RandomSource};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset<T>(Vec<T>);

impl<T> Dataset<T> {
    pub fn new(elements: Vec<T>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("dataset must hold at least one element"));
        }
        Ok(Dataset(elements))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn elements(&self) -> &[T] {
        &self.0
    }
}

/// Outputs `z_1..z_n` in production order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Transcript<S>(pub Vec<S>);

impl<S> Transcript<S> {
    pub fn outputs(&self) -> &[S] {
        &self.0
    }

    pub fn into_outputs(self) -> Vec<S> {
        self.0
    }
}

/// A bijection on `0..n` stored as an index array: position `i` receives
/// element `pi[i]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(pi: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; pi.len()];
        for &i in &pi {
            if i >= pi.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("{pi:?} is not a permutation")));
            }
        }
        Ok(Permutation(pi))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    /// Uniform permutation by the Fisher–Yates shuffle.
    pub fn uniform<R: RandomSource + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut pi: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.uniform_index(i + 1);
            pi.swap(i, j);
        }
        Permutation(pi)
    }

    /// The transposition of positions `0` and `i`.
    pub fn swap_first(n: usize, i: usize) -> Self {
        let mut pi: Vec<usize> = (0..n).collect();
        pi.swap(0, i);
        Permutation(pi)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `(x_{pi(1)}, ..., x_{pi(n)})`.
    pub fn apply<T: Clone>(&self, xs: &[T]) -> Vec<T> {
        assert_eq!(xs.len(), self.0.len(), "permutation length mismatch");
        self.0.iter().map(|&i| xs[i].clone()).collect()
    }

    /// The permutation equal to applying `first`, then `self`.
    pub fn after(&self, first: &Permutation) -> Permutation {
        Permutation(self.apply(&first.0))
    }
}

fn check_lengths<T, Z>(data: &Dataset<T>, randomizers: &[Z]) -> Result<()> {
    if randomizers.len() != data.len() {
        return Err(Error::invalid(format!(
            "{} randomizers for {} data elements",
            randomizers.len(),
            data.len()
        )));
    }
    Ok(())
}

fn local_pass<Z, R>(elements: &[Z::Input], randomizers: &[Z], rng: &mut R) -> Transcript<Z::Output>
where
    Z: LocalRandomizer,
    R: RandomSource + ?Sized,
{
    let mut outputs: Vec<Z::Output> = Vec::with_capacity(elements.len());
    for (x, z) in elements.iter().zip(randomizers) {
        let s = z.randomize(&outputs, x, rng);
        outputs.push(s);
    }
    Transcript(outputs)
}

/// `z_i <- A_i(z_1..z_{i-1}; x_i)` for `i = 1..n`.
pub fn run_local<Z, R>(
    data: &Dataset<Z::Input>,
    randomizers: &[Z],
    rng: &mut R,
) -> Result<Transcript<Z::Output>>
where
    Z: LocalRandomizer,
    R: RandomSource + ?Sized,
{
    check_lengths(data, randomizers)?;
    Ok(local_pass(data.elements(), randomizers, rng))
}

/// Uniformly permutes the data, then runs [`run_local`].
pub fn run_shuffled<Z, R>(
    data: &Dataset<Z::Input>,
    randomizers: &[Z],
    rng: &mut R,
) -> Result<Transcript<Z::Output>>
where
    Z: LocalRandomizer,
    Z::Input: Clone,
    R: RandomSource + ?Sized,
{
    check_lengths(data, randomizers)?;
    let permuted = Permutation::uniform(data.len(), rng).apply(data.elements());
    Ok(local_pass(&permuted, randomizers, rng))
}

/// Swaps the first element with a uniformly chosen one (possibly itself), then
/// runs [`run_local`].
pub fn run_swap<Z, R>(
    data: &Dataset<Z::Input>,
    randomizers: &[Z],
    rng: &mut R,
) -> Result<Transcript<Z::Output>>
where
    Z: LocalRandomizer,
    Z::Input: Clone,
    R: RandomSource + ?Sized,
{
    check_lengths(data, randomizers)?;
    let i = rng.uniform_index(data.len());
    let swapped = Permutation::swap_first(data.len(), i).apply(data.elements());
    Ok(local_pass(&swapped, randomizers, rng))
}

/// Uniformly permutes the outputs at the positions in `subset`, leaving the
/// rest in place.
///
/// All randomizers on `subset` must be identical, otherwise the position of
/// an output would still reveal which randomizer produced it.
pub fn shuffle_responses<S, Z, R>(
    transcript: &Transcript<S>,
    subset: &[usize],
    randomizers: &[Z],
    rng: &mut R,
) -> Result<Transcript<S>>
where
    S: Clone,
    Z: PartialEq,
    R: RandomSource + ?Sized,
{
    let n = transcript.0.len();
    if randomizers.len() != n {
        return Err(Error::invalid(format!(
            "{} randomizers for a transcript of length {n}",
            randomizers.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in subset {
        if i >= n {
            return Err(Error::invalid(format!(
                "index {i} outside transcript of length {n}"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid(format!("index {i} repeated in shuffle subset")));
        }
    }
    if let Some(&first) = subset.first() {
        if subset.iter().any(|&i| randomizers[i] != randomizers[first]) {
            return Err(Error::invalid("shuffled positions must share one randomizer"));
        }
    }
    let pi = Permutation::uniform(subset.len(), rng);
    let mut out = transcript.0.clone();
    for (dst, &src) in subset.iter().zip(pi.as_slice()) {
        out[*dst] = transcript.0[subset[src]].clone();
    }
    Ok(Transcript(out))
}
