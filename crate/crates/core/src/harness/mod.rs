// SPDX-License-Identifier: Apache-2.0

//! End-to-end simulation: synthetic clients run the reporting protocol, the
//! reports are optionally pooled and shuffled, and the server's estimates are
//! compared with ground truth and with the utility bound
//! `c_eps k (log2 d)^{3/2} sqrt(n log(2d / beta))`.
//!
//! Every random draw comes from a stream derived from the master seed:
//! `[INPUTS, trial]` for the population, `[CLIENT, trial, client]` for each
//! client and `[SHUFFLE, trial]` for the shuffler. Results therefore do not
//! depend on thread count or scheduling.

mod inputs;
mod output;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use inputs::{generate_inputs, read_inputs_jsonl, InputModel, Population};
pub use output::{
    quantile, write_json, write_json_line, write_output, write_trials_csv, Summary, QUANTILE_LEVELS,
};

use crate::aggregator::{accumulate, estimate_marginals, MarginalEstimates, SumTree};
use crate::client::{run_client, write_jsonl, DebugReport, Report};
use crate::error::{Error, Result};
use crate::privacy::{check_pos_epsilon, scale_factor};
use crate::randomizer::RandomnessStream;
use crate::shuffle::Permutation;

const DOMAIN_INPUTS: u64 = 1;
const DOMAIN_CLIENT: u64 = 2;
const DOMAIN_SHUFFLE: u64 = 3;

/// Largest `n * d` accepted without `allow_large`.
pub const MAX_WORK: u128 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleMode {
    None,
    /// Reports are pooled without client identity and shuffled before aggregation.
    PostShuffle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    /// Horizon before padding to a power of two.
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub trials: usize,
    pub seed: u64,
    pub input_model: InputModel,
    pub shuffle_mode: ShuffleMode,
    pub output_path: Option<PathBuf>,
    /// Where to write the report stream of trial 0 as JSON lines.
    pub reports_path: Option<PathBuf>,
    /// Tag written reports with client ids (only without shuffling).
    pub debug_client_ids: bool,
    /// Lift the `n * d` resource guard.
    pub allow_large: bool,
    /// Record wall-clock time per trial (makes output non-reproducible).
    pub record_timing: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n: 10_000,
            d: 64,
            k: 4,
            epsilon: 1.0,
            beta: 1.0 / 3.0,
            trials: 1,
            seed: 0,
            input_model: InputModel::RandomChanges,
            shuffle_mode: ShuffleMode::None,
            output_path: None,
            reports_path: None,
            debug_client_ids: false,
            allow_large: false,
            record_timing: false,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.trials == 0 || self.d == 0 || self.k == 0 {
            return Err(Error::invalid("n, d, k and trials must all be >= 1"));
        }
        check_pos_epsilon(self.epsilon)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if self.debug_client_ids && self.shuffle_mode == ShuffleMode::PostShuffle {
            return Err(Error::invalid(
                "client ids cannot be attached to a shuffled report stream",
            ));
        }
        let work = self.n as u128 * self.padded_d() as u128;
        if work > MAX_WORK && !self.allow_large {
            return Err(Error::ResourceGuard(format!(
                "n * d = {work} exceeds {MAX_WORK}; pass the large-run override to proceed"
            )));
        }
        Ok(())
    }

    pub fn padded_d(&self) -> usize {
        self.d.max(1).next_power_of_two()
    }
}

/// `c_eps k (log2 d)^{3/2} sqrt(n log(2d / beta))`.
pub fn theorem_bound(n: usize, d: usize, k: usize, epsilon: f64, beta: f64) -> Result<f64> {
    let log_d = (d as f64).log2();
    Ok(
        scale_factor(epsilon)?
            * k as f64
            * log_d.powf(1.5)
            * (n as f64 * (2.0 * d as f64 / beta).ln()).sqrt(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    /// `max_t |f_t - f~_t|`.
    pub max_abs_error: f64,
    pub errors: Vec<f64>,
    pub theorem_bound: f64,
    pub bound_satisfied: bool,
    pub clipped_clients: usize,
    pub reports: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: SimulationConfig,
    pub padded_d: usize,
    pub trials: Vec<TrialResult>,
    pub summary: Summary,
}

struct TrialRun {
    result: TrialResult,
    estimates: MarginalEstimates,
    reports: Option<Vec<DebugReport>>,
    shuffled: Option<Vec<Report>>,
}

/// Runs every trial of `config` and writes the result to `output_path` when
/// set. Output is a deterministic function of the
/// config (wall times aside, when requested).
pub fn simulate(config: &SimulationConfig) -> Result<SimulationResult> {
    config.validate()?;
    let d = config.padded_d();
    let bound = theorem_bound(config.n, d, config.k, config.epsilon, config.beta)?;

    let mut trials = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let run = run_trial(config, trial, d, bound)?;
        if trial == 0 {
            if let Some(path) = &config.reports_path {
                let file = std::io::BufWriter::new(std::fs::File::create(path)?);
                match (&run.shuffled, &run.reports) {
                    (Some(shuffled), _) => write_jsonl(file, shuffled)?,
                    (None, Some(tagged)) if config.debug_client_ids => write_jsonl(file, tagged)?,
                    (None, Some(tagged)) => {
                        let plain: Vec<Report> = tagged.iter().map(|r| r.report).collect();
                        write_jsonl(file, &plain)?
                    }
                    (None, None) => unreachable!("reports are kept when a path is set"),
                }
            }
        }
        trials.push(run.result);
    }
    let summary = Summary::from_trials(&trials);
    let result = SimulationResult {
        config: config.clone(),
        padded_d: d,
        trials,
        summary,
    };
    if let Some(path) = &config.output_path {
        write_output(path, &result)?;
    }
    Ok(result)
}

/// Signed estimates and ground truth of a single trial, as produced inside
/// [`simulate`].
pub fn trial_estimates(config: &SimulationConfig, trial: usize) -> Result<MarginalEstimates> {
    config.validate()?;
    let d = config.padded_d();
    let bound = theorem_bound(config.n, d, config.k, config.epsilon, config.beta)?;
    Ok(run_trial(config, trial, d, bound)?.estimates)
}

fn run_trial(config: &SimulationConfig, trial: usize, d: usize, bound: f64) -> Result<TrialRun> {
    let started = Instant::now();
    let mut input_rng = RandomnessStream::derive(config.seed, &[DOMAIN_INPUTS, trial as u64]);
    let population = generate_inputs(config.n, config.d, config.k, &config.input_model, &mut input_rng)?;
    let truth = population.ground_truth();

    let keep_reports =
        config.shuffle_mode == ShuffleMode::PostShuffle || (trial == 0 && config.reports_path.is_some());
    let client_reports = |i: usize| -> Result<Vec<Report>> {
        let mut rng = RandomnessStream::derive(config.seed, &[DOMAIN_CLIENT, trial as u64, i as u64]);
        run_client(&population.inputs[i], config.k, config.epsilon, &mut rng)
    };

    let (tree, report_count, tagged, shuffled) = if keep_reports {
        let per_client: Vec<Vec<Report>> = (0..config.n)
            .into_par_iter()
            .map(client_reports)
            .collect::<Result<_>>()?;
        let tagged: Vec<DebugReport> = per_client
            .iter()
            .enumerate()
            .flat_map(|(i, rs)| {
                rs.iter().map(move |&report| DebugReport {
                    report,
                    debug_client_id: i as u64,
                })
            })
            .collect();
        let (tree, shuffled) = match config.shuffle_mode {
            ShuffleMode::PostShuffle => {
                let pooled: Vec<Report> = tagged.iter().map(|r| r.report).collect();
                let mut rng = RandomnessStream::derive(config.seed, &[DOMAIN_SHUFFLE, trial as u64]);
                let shuffled = Permutation::uniform(pooled.len(), &mut rng).apply(&pooled);
                (accumulate(&shuffled, d)?, Some(shuffled))
            }
            ShuffleMode::None => (accumulate(tagged.iter().map(|r| &r.report), d)?, None),
        };
        (tree, tagged.len(), Some(tagged), shuffled)
    } else {
        let empty = SumTree::new(d)?;
        let (tree, count) = (0..config.n)
            .into_par_iter()
            .try_fold(
                || (empty.clone(), 0usize),
                |(mut tree, count), i| {
                    let reports = client_reports(i)?;
                    for r in &reports {
                        tree.add(r)?;
                    }
                    Ok::<_, Error>((tree, count + reports.len()))
                },
            )
            .try_reduce(
                || (empty.clone(), 0),
                |(mut a, ca), (b, cb)| {
                    a.merge(&b)?;
                    Ok((a, ca + cb))
                },
            )?;
        (tree, count, None, None)
    };

    let estimates = estimate_marginals(&tree, config.epsilon, config.k, d)?.with_truth(truth)?;
    let errors = estimates.abs_errors().expect("truth attached");
    let max_abs_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(TrialRun {
        result: TrialResult {
            trial,
            max_abs_error,
            errors,
            theorem_bound: bound,
            bound_satisfied: max_abs_error <= bound,
            clipped_clients: population.clipped,
            reports: report_count,
            wall_time: config.record_timing.then(|| started.elapsed().as_secs_f64()),
        },
        estimates,
        reports: tagged,
        shuffled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimulationConfig {
        SimulationConfig {
            n: 500,
            d: 16,
            k: 2,
            trials: 3,
            seed,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn validation() {
        let mut c = small(0);
        c.beta = 1.0;
        assert!(c.simulate_err());
        let mut c = small(0);
        c.trials = 0;
        assert!(c.simulate_err());
        let mut c = small(0);
        c.n = 1_000_000;
        c.d = 2048;
        assert!(matches!(simulate(&c), Err(Error::ResourceGuard(_))));
        let mut c = small(0);
        c.debug_client_ids = true;
        c.shuffle_mode = ShuffleMode::PostShuffle;
        assert!(c.simulate_err());
    }

    impl SimulationConfig {
        fn simulate_err(&self) -> bool {
            simulate(self).is_err()
        }
    }

    #[test]
    fn deterministic_across_runs_and_modes() {
        let a = simulate(&small(7)).unwrap();
        let b = simulate(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&small(8)).unwrap();
        assert_ne!(a.trials[0].max_abs_error, c.trials[0].max_abs_error);

        // Aggregation is order-free, so shuffling reports changes nothing.
        let mut shuffled = small(7);
        shuffled.shuffle_mode = ShuffleMode::PostShuffle;
        let s = simulate(&shuffled).unwrap();
        assert_eq!(a.trials, s.trials);
    }

    #[test]
    fn report_counts_and_bound_flag() {
        let r = simulate(&small(1)).unwrap();
        for t in &r.trials {
            assert!(t.reports >= 500);
            assert_eq!(t.errors.len(), 16);
            assert_eq!(t.bound_satisfied, t.max_abs_error <= t.theorem_bound);
            assert!(t.wall_time.is_none());
        }
    }

    #[test]
    fn theorem_bound_value() {
        // c_1 * 4 * 6^{1.5} * sqrt(1e4 * ln(384))
        let expected = 4.082988165073596 * 4.0 * 6f64.powf(1.5) * (1e4 * 384f64.ln()).sqrt();
        assert!((theorem_bound(10_000, 64, 4, 1.0, 1.0 / 3.0).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn lone_silent_client_is_zero_mean_noise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silent.jsonl");
        std::fs::write(&path, "[0,0,0,0,0,0,0,0]\n").unwrap();
        let config = SimulationConfig {
            n: 1,
            d: 8,
            k: 1,
            seed: 3,
            input_model: InputModel::File { path },
            ..SimulationConfig::default()
        };
        let runs: Vec<MarginalEstimates> = (0..1000).map(|i| trial_estimates(&config, i).unwrap()).collect();
        for t in 0..8 {
            assert_eq!(runs[0].true_f.as_ref().unwrap()[t], 0);
            let xs: Vec<f64> = runs.iter().map(|r| r.f_tilde[t]).collect();
            let m = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / m;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
            assert!(var > 0.0);
            assert!(mean.abs() <= 3.0 * (var / m).sqrt(), "t={t} mean={mean}");
        }
    }
}
