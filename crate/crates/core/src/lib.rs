// SPDX-License-Identifier: Apache-2.0

//! Longitudinal counting under local differential privacy, with privacy
//! amplification by shuffling.
//!
//! Each client holds a binary state over `d` time steps that changes at most
//! `k` times. A client reports one randomized bit per level of a dyadic tree
//! it is assigned to; the server sums reports per tree node and releases an
//! unbiased running count for every step. Shuffling the reports of `n`
//! clients amplifies the per-client `eps0` guarantee to a much smaller
//! central one, and [`divergence`] certifies the amplification bounds
//! numerically.

pub mod aggregator;
pub mod amplification;
pub mod client;
pub mod divergence;
pub mod error;
pub mod harness;
pub mod privacy;
pub mod randomizer;
pub mod shuffle;

pub use aggregator::{dyadic_cover, estimate_marginals, DyadicCover, MarginalEstimates, SumTree};
pub use amplification::{amplify_shuffle, AmplificationResult, Regime};
pub use client::{run_client, ChangeSequence, ClientState, Report};
pub use divergence::{certify_amplification, Certification, DiscreteDistribution};
pub use error::{Error, Result};
pub use harness::{simulate, InputModel, ShuffleMode, SimulationConfig, SimulationResult};
pub use privacy::{PrivacyParams, SubsampleRate};
pub use randomizer::{LocalRandomizer, RandomSource, RandomnessStream};
