// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use longshuffle_core::aggregator::{dyadic_cover, merge_loop_cover, DyadicCover};
use longshuffle_core::amplification::{amplify_group, amplify_shuffle};
use longshuffle_core::client::{run_client, ChangeSequence};
use longshuffle_core::divergence::{certify_amplification, shuffled_rr_count_distribution};
use longshuffle_core::harness::{simulate, trial_estimates, InputModel, ShuffleMode, SimulationConfig};
use longshuffle_core::randomizer::{enumerate_outcomes, one_bit_rr_randomizer, RandomnessStream};
use longshuffle_core::shuffle::{run_local, run_shuffled, shuffle_responses, Dataset};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: longshuffle_core::Error) -> String {
    e.to_string()
}

/// Every change sequence of length `d` with at most `k` changes whose state
/// stays in {0, 1}.
fn valid_inputs(d: usize, k: usize) -> Vec<ChangeSequence> {
    let mut out = Vec::new();
    for code in 0..3usize.pow(d as u32) {
        let mut c = code;
        let x: Vec<i8> = (0..d)
            .map(|_| {
                let v = (c % 3) as i8 - 1;
                c /= 3;
                v
            })
            .collect();
        if let Ok(seq) = ChangeSequence::new(x, k) {
            if seq.is_boolean_state() {
                out.push(seq);
            }
        }
    }
    out
}

fn exact_ldp() -> Outcome {
    let mut worst_slack = f64::NEG_INFINITY;
    let mut summary = Vec::new();
    for (d, k) in [(2usize, 1usize), (4, 1), (4, 2)] {
        let inputs = valid_inputs(d, k);
        for eps in [0.5, 1.0, 2.0] {
            let dists = inputs
                .iter()
                .map(|x| {
                    let mut failure = None;
                    let dist: BTreeMap<_, f64> = enumerate_outcomes(|e| match run_client(x, k, eps, e) {
                        Ok(r) => r,
                        Err(er) => {
                            failure = Some(er);
                            Vec::new()
                        }
                    })
                    .into_iter()
                    .collect();
                    match failure {
                        Some(e) => Err(err(e)),
                        None => Ok(dist),
                    }
                })
                .collect::<std::result::Result<Vec<_>, String>>()?;
            for dist in &dists {
                let mass: f64 = dist.values().sum();
                ensure((mass - 1.0).abs() < 1e-12, || format!("d={d} k={k}: mass {mass}"))?;
            }
            let mut ratio: f64 = 1.0;
            for a in &dists {
                for b in &dists {
                    for (s, pa) in a {
                        let pb = b.get(s).copied().unwrap_or(0.0);
                        ratio = ratio.max(if pb == 0.0 { f64::INFINITY } else { pa / pb });
                    }
                }
            }
            let limit = eps.exp() + 1e-9;
            worst_slack = worst_slack.max(ratio - eps.exp());
            ensure(ratio <= limit, || {
                format!("d={d} k={k} eps={eps}: ratio {ratio} > e^eps = {}", eps.exp())
            })?;
            summary.push(format!("({d},{k},{eps}):{:.6}", ratio.ln()));
        }
    }
    Ok(format!(
        "ln(max ratio) per (d,k,eps) {}; max ratio - e^eps = {worst_slack:.3e}",
        summary.join(" ")
    ))
}

fn unbiasedness() -> Outcome {
    let config = SimulationConfig {
        n: 100_000,
        d: 8,
        k: 1,
        epsilon: 1.0,
        trials: 50,
        seed: 20_240_202,
        input_model: InputModel::StepFunction { at: 3 },
        ..SimulationConfig::default()
    };
    let runs = (0..config.trials)
        .map(|i| trial_estimates(&config, i))
        .collect::<longshuffle_core::Result<Vec<_>>>()
        .map_err(err)?;
    let truth = runs[0].true_f.clone().expect("simulation attaches truth");
    let m = runs.len() as f64;
    let mut worst_z: f64 = 0.0;
    let mut alt_rejected = false;
    for (t, &f_t) in truth.iter().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|r| r.f_tilde[t]).collect();
        let mean = xs.iter().sum::<f64>() / m;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        let se = sd / m.sqrt();
        let z = (mean - f_t as f64) / se;
        worst_z = worst_z.max(z.abs());
        ensure(z.abs() <= 3.0, || {
            format!("t={} mean {mean} vs f_t {f_t} ({z:.2} SE)", t + 1)
        })?;
        // the same runs scaled by log2(d) instead of log2(d)+1
        let alt = (mean - f_t as f64 * 4.0 / 3.0) * 3.0 / 4.0;
        if alt.abs() > 3.0 * se * 3.0 / 4.0 {
            alt_rejected = true;
        }
    }
    ensure(alt_rejected, || {
        "log2(d) scaling not rejected; test lacks power".into()
    })?;
    Ok(format!(
        "max |mean - f_t| = {worst_z:.2} SE over t=1..8; log2(d) scaling rejected"
    ))
}

fn utility_config(n: usize, trials: usize, seed: u64) -> SimulationConfig {
    SimulationConfig {
        n,
        d: 64,
        k: 4,
        epsilon: 1.0,
        beta: 1.0 / 3.0,
        trials,
        seed,
        input_model: InputModel::WorstCaseSparse,
        ..SimulationConfig::default()
    }
}

fn utility_bound() -> Outcome {
    let r = simulate(&utility_config(10_000, 30, 7)).map_err(err)?;
    let within = r.trials.iter().filter(|t| t.bound_satisfied).count();
    let bound = r.trials[0].theorem_bound;
    ensure(within >= 20, || {
        format!("only {within}/30 trials within bound {bound}")
    })?;
    Ok(format!(
        "{within}/30 within bound {bound:.1}; median max error {:.1}",
        r.summary.median_max_abs_error
    ))
}

fn sqrt_n_scaling() -> Outcome {
    let small = simulate(&utility_config(10_000, 50, 11)).map_err(err)?;
    let large = simulate(&utility_config(40_000, 50, 12)).map_err(err)?;
    let ratio = large.summary.median_max_abs_error / small.summary.median_max_abs_error;
    ensure((1.6..=2.5).contains(&ratio), || format!("median ratio {ratio}"))?;
    Ok(format!(
        "median ratio {ratio:.4} ({:.1} / {:.1})",
        large.summary.median_max_abs_error, small.summary.median_max_abs_error
    ))
}

fn amplification_soundness() -> Outcome {
    let mut parts = Vec::new();
    for n in [100usize, 1000, 5000] {
        for eps0 in [0.1, 0.25, 0.5] {
            let c = certify_amplification(n, eps0, 1e-4).map_err(err)?;
            ensure(c.pass && c.slack_ratio < 1.0, || {
                format!(
                    "n={n} eps0={eps0}: eps={} exact delta {} slack {}",
                    c.claimed_epsilon, c.exact_delta, c.slack_ratio
                )
            })?;
            parts.push(format!("({n},{eps0}):{:?} slack {:.2e}", c.regime, c.slack_ratio));
        }
    }
    Ok(parts.join("; "))
}

fn regime_consistency() -> Outcome {
    let mut checked = 0;
    let mut amplified = 0;
    for i in 0..10 {
        let eps0 = 0.5 * (i as f64 + 0.5) / 10.0;
        for j in 0..10 {
            let n = 10f64.powf(3.0 + 4.0 * j as f64 / 9.0).round() as u64;
            for delta in [1e-12, 1e-9, 1e-6, 1e-3] {
                let r = amplify_shuffle(eps0, n, delta).map_err(err)?;
                let simplified = 12.0 * eps0 * ((1.0 / delta).ln() / n as f64).sqrt();
                ensure(r.general <= simplified + 1e-12, || {
                    format!(
                        "eps0={eps0} n={n} delta={delta}: general {} > simplified {simplified}",
                        r.general
                    )
                })?;
                ensure(r.epsilon_central <= eps0, || {
                    format!("eps0={eps0} n={n} delta={delta}: returned {}", r.epsilon_central)
                })?;
                checked += 1;
                if r.epsilon_central < eps0 {
                    amplified += 1;
                }
            }
        }
    }
    Ok(format!("{checked} grid points; {amplified} amplified below eps0"))
}

fn headline_value() -> Outcome {
    let r = amplify_group(0.25, 1000, 1e-3).map_err(err)?;
    let direct = 12.0 * 0.25 * (1e3f64.ln() / 1000.0).sqrt();
    let got = r.epsilon_central;
    ensure((got - direct).abs() <= 1e-5, || {
        format!("{got} vs direct evaluation {direct}")
    })?;
    Ok(format!(
        "amplify_group = {got:.7}; direct evaluation {direct:.7}; stated 0.24930 differs by {:.2e}",
        (got - 0.24930).abs()
    ))
}

fn shuffle_equivalence() -> Outcome {
    let z = one_bit_rr_randomizer(1.0).map_err(err)?;
    let randomizers = vec![z; 3];
    let data = Dataset::new(vec![1u8, 0, 0]).map_err(err)?;
    let pre: BTreeMap<Vec<u8>, f64> =
        enumerate_outcomes(|e| run_shuffled(&data, &randomizers, e).unwrap().into_outputs())
            .into_iter()
            .collect();
    let post: BTreeMap<Vec<u8>, f64> = enumerate_outcomes(|e| {
        let local = run_local(&data, &randomizers, e).unwrap();
        shuffle_responses(&local, &[0, 1, 2], &randomizers, e)
            .unwrap()
            .into_outputs()
    })
    .into_iter()
    .collect();
    ensure(pre.len() == 8 && post.len() == 8, || {
        "expected all 8 outcomes".into()
    })?;

    // independent closed form: the count of ones is the shuffled-RR count,
    // and every arrangement of a given count is equally likely
    let counts = shuffled_rr_count_distribution(3, 1, 1.0).map_err(err)?;
    let choose = [1.0, 3.0, 3.0, 1.0];
    let mut max_gap: f64 = 0.0;
    for (s, &p) in &pre {
        let ones = s.iter().filter(|&&b| b == 1).count();
        let closed = counts.probs()[ones] / choose[ones];
        max_gap = max_gap.max((p - post[s]).abs()).max((p - closed).abs());
    }
    ensure(max_gap <= 1e-12, || {
        format!("enumerated distributions differ by {max_gap}")
    })?;

    let outcomes: Vec<Vec<u8>> = pre.keys().cloned().collect();
    let runs = 1_000_000usize;
    let chi2 = ChiSquared::new((outcomes.len() - 1) as f64).map_err(|e| e.to_string())?;
    let mut p_values = Vec::new();
    for (label, stream) in [("pre", 1u64), ("post", 2)] {
        let mut rng = RandomnessStream::derive(8, &[stream]);
        let mut observed: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for _ in 0..runs {
            let out = if label == "pre" {
                run_shuffled(&data, &randomizers, &mut rng)
                    .unwrap()
                    .into_outputs()
            } else {
                let local = run_local(&data, &randomizers, &mut rng).unwrap();
                shuffle_responses(&local, &[0, 1, 2], &randomizers, &mut rng)
                    .unwrap()
                    .into_outputs()
            };
            *observed.entry(out).or_insert(0) += 1;
        }
        let stat: f64 = outcomes
            .iter()
            .map(|s| {
                let expected = pre[s] * runs as f64;
                let o = observed.get(s).copied().unwrap_or(0) as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        let p = 1.0 - chi2.cdf(stat);
        ensure(p > 0.01, || format!("{label}-shuffle chi2 {stat:.3}, p = {p:.4}"))?;
        p_values.push(format!("{label} p={p:.3}"));
    }
    Ok(format!(
        "enumeration gap {max_gap:.1e}; chi2 over 10^6 runs: {}",
        p_values.join(", ")
    ))
}

fn cover_equivalence() -> Outcome {
    let mut pairs = 0;
    let mut d = 1;
    while d <= 1024 {
        for t in 1..=d {
            let literal = merge_loop_cover(t, d).map_err(err)?;
            let fast = dyadic_cover(t, d).map_err(err)?;
            ensure(literal == fast, || {
                format!("t={t} d={d}: {literal:?} vs {fast:?}")
            })?;
            ensure(fast.len() == t.count_ones() as usize, || {
                format!("t={t} d={d}: |C| = {}", fast.len())
            })?;
            let mut next = 1;
            for &node in &fast.nodes {
                let (lo, hi) = DyadicCover::leaf_range(node);
                ensure(lo == next, || format!("t={t} d={d}: gap or overlap at {lo}"))?;
                next = hi + 1;
            }
            ensure(next == t + 1, || {
                format!("t={t} d={d}: leaves end at {}", next - 1)
            })?;
            pairs += 1;
        }
        d *= 2;
    }
    Ok(format!("{pairs} (t, d) pairs"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = Vec::new();
    for (ext, mode) in [("json", ShuffleMode::None), ("csv", ShuffleMode::PostShuffle)] {
        let out = dir.path().join(format!("result.{ext}"));
        let reports = dir.path().join(format!("reports.{ext}.jsonl"));
        let config = SimulationConfig {
            n: 2000,
            d: 48,
            k: 3,
            trials: 4,
            seed: 99,
            shuffle_mode: mode,
            output_path: Some(out.clone()),
            reports_path: Some(reports.clone()),
            ..SimulationConfig::default()
        };
        let read = |p: &std::path::Path| std::fs::read(p).map_err(|e| e.to_string());
        let mut files = Vec::new();
        for _ in 0..2 {
            simulate(&config).map_err(err)?;
            files.push((read(&out)?, read(&reports)?));
            std::fs::remove_file(&out).map_err(|e| e.to_string())?;
            std::fs::remove_file(&reports).map_err(|e| e.to_string())?;
        }
        ensure(!files[0].0.is_empty(), || "empty output".into())?;
        ensure(files[0] == files[1], || {
            format!("{ext} outputs differ between runs")
        })?;
        checked.push(format!("{ext} ({} bytes)", files[0].0.len()));
    }
    Ok(format!(
        "byte-identical outputs and report streams: {}",
        checked.join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("exact LDP of the client", exact_ldp),
        ("unbiased marginal estimates", unbiasedness),
        ("utility bound holds in >= 2/3 of trials", utility_bound),
        ("sqrt(n) error scaling", sqrt_n_scaling),
        ("amplification soundness vs exact oracle", amplification_soundness),
        ("calculator regime consistency", regime_consistency),
        ("group amplification headline value", headline_value),
        ("pre/post-shuffle equivalence", shuffle_equivalence),
        ("dyadic cover equivalence", cover_equivalence),
        ("deterministic simulate output", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name} [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    if failures == 0 {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
