// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use longshuffle_core::client::{run_client, Report};
use longshuffle_core::harness::{generate_inputs, InputModel, Population};
use longshuffle_core::randomizer::RandomnessStream;

pub fn population(n: usize, d: usize, k: usize, seed: u64) -> Population {
    let mut rng = RandomnessStream::derive(seed, &[0]);
    generate_inputs(n, d, k, &InputModel::RandomChanges, &mut rng).expect("valid fixture parameters")
}

/// All reports of `population`, one stream per client.
pub fn reports(population: &Population, k: usize, epsilon: f64, seed: u64) -> Vec<Report> {
    population
        .inputs
        .iter()
        .enumerate()
        .flat_map(|(i, x)| {
            let mut rng = RandomnessStream::derive(seed, &[1, i as u64]);
            run_client(x, k, epsilon, &mut rng).expect("valid fixture parameters")
        })
        .collect()
}
