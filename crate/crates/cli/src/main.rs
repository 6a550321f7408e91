// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use longshuffle_core::aggregator::{accumulate, dyadic_cover, estimate_marginals, DyadicCover};
use longshuffle_core::amplification::{
    amplify_group, amplify_shuffle, amplify_swap, rdp_bound, AmplificationResult,
};
use longshuffle_core::client::read_reports_jsonl;
use longshuffle_core::divergence::{certify_amplification, certify_claim};
use longshuffle_core::harness::{
    read_inputs_jsonl, simulate, write_json, write_json_line, InputModel, ShuffleMode, SimulationConfig,
};
use longshuffle_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "longshuffle",
    version,
    about = "Longitudinal LDP counting with shuffle amplification"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LONGSHUFFLE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the client/server pipeline on a synthetic population.
    Simulate(SimulateArgs),
    /// Central privacy bounds from shuffling eps0-LDP reports.
    Bound(BoundArgs),
    /// Check closed-form bounds against the exact shuffled-RR divergence.
    VerifyAmplification(VerifyArgs),
    /// Print the dyadic cover of [1, t].
    Cover(CoverArgs),
    /// Aggregate a JSON-lines report file into running-count estimates (CSV).
    Estimate(EstimateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    WorstCaseSparse,
    RandomChanges,
    StepFunction,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShuffleArg {
    None,
    PostShuffle,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Time horizon; padded to the next power of two.
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    beta: f64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = InputKind::RandomChanges)]
    input_model: InputKind,
    /// Step at which every client switches on (step-function model).
    #[arg(long)]
    step_at: Option<usize>,
    /// JSON-lines change sequences (file model).
    #[arg(long)]
    input_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ShuffleArg::None)]
    shuffle_mode: ShuffleArg,
    /// Result file; `.csv` gives one row per trial, anything else JSON.
    /// Without it, JSON goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the report stream of trial 0 as JSON lines.
    #[arg(long)]
    reports: Option<PathBuf>,
    /// Tag written reports with client ids (not allowed with shuffling).
    #[arg(long)]
    debug_client_ids: bool,
    /// Allow n * d above 1e9.
    #[arg(long)]
    allow_large: bool,
    /// Include per-trial wall time (output is then not reproducible).
    #[arg(long)]
    record_timing: bool,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    eps0: f64,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    delta: f64,
    /// Also report the Renyi-DP bound at this order.
    #[arg(long)]
    alpha: Option<f64>,
    /// Also report the bound for a shuffled group of this size.
    #[arg(long)]
    group: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, required_unless_present = "grid")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "grid")]
    eps0: Option<f64>,
    #[arg(long, required_unless_present = "grid")]
    delta: Option<f64>,
    /// CSV with columns n, eps0, delta; one record per row.
    #[arg(long, conflicts_with_all = ["n", "eps0", "delta"])]
    grid: Option<PathBuf>,
    /// Certify this central epsilon instead of the calculator's.
    #[arg(long, conflicts_with = "grid")]
    claim: Option<f64>,
}

#[derive(Args)]
struct CoverArgs {
    #[arg(long)]
    t: usize,
    #[arg(long)]
    d: usize,
}

#[derive(Args)]
struct EstimateArgs {
    /// JSON-lines reports with fields h, t, u.
    #[arg(long)]
    reports: PathBuf,
    /// Power-of-two horizon the reports were produced for.
    #[arg(long)]
    d: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    epsilon: f64,
    /// Raw change sequences of the same clients, to add f_true and abs_error.
    #[arg(long)]
    truth_inputs: Option<PathBuf>,
    /// CSV destination (stdout if absent).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Invalid(String),
    VerificationFailed(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::VerificationFailed(_) => EXIT_VERIFICATION,
            CliError::Core(e) => match e {
                Error::InvalidParameter(_)
                | Error::OutOfRegime(_)
                | Error::ResourceGuard(_)
                | Error::Parse { .. }
                | Error::MalformedReport { .. } => EXIT_INVALID,
                _ => EXIT_FAILURE,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Invalid(msg) => write!(f, "invalid parameter: {msg}"),
            CliError::VerificationFailed(n) => write!(f, "{n} amplification claim(s) failed verification"),
        }
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: invalid parameter: thread count must be >= 1");
            return ExitCode::from(EXIT_INVALID);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let outcome = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Bound(a) => run_bound(a),
        Command::VerifyAmplification(a) => run_verify(a),
        Command::Cover(a) => run_cover(a),
        Command::Estimate(a) => run_estimate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    Ok(BufReader::new(File::open(path)?))
}

fn run_simulate(a: SimulateArgs) -> CliResult {
    let input_model = match a.input_model {
        InputKind::WorstCaseSparse => InputModel::WorstCaseSparse,
        InputKind::RandomChanges => InputModel::RandomChanges,
        InputKind::StepFunction => InputModel::StepFunction {
            at: a
                .step_at
                .ok_or_else(|| CliError::Invalid("step-function model needs --step-at".into()))?,
        },
        InputKind::File => InputModel::File {
            path: a
                .input_file
                .ok_or_else(|| CliError::Invalid("file model needs --input-file".into()))?,
        },
    };
    let config = SimulationConfig {
        n: a.n,
        d: a.d,
        k: a.k,
        epsilon: a.epsilon,
        beta: a.beta,
        trials: a.trials,
        seed: a.seed,
        input_model,
        shuffle_mode: match a.shuffle_mode {
            ShuffleArg::None => ShuffleMode::None,
            ShuffleArg::PostShuffle => ShuffleMode::PostShuffle,
        },
        output_path: a.output,
        reports_path: a.reports,
        debug_client_ids: a.debug_client_ids,
        allow_large: a.allow_large,
        record_timing: a.record_timing,
    };
    let result = simulate(&config)?;
    if config.output_path.is_none() {
        let stdout = io::stdout().lock();
        write_json(stdout, &result)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RdpRecord {
    alpha: f64,
    epsilon: f64,
}

#[derive(Serialize)]
struct BoundRecord {
    eps0: f64,
    n: u64,
    delta: f64,
    shuffle: AmplificationResult,
    swap: AmplificationResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    rdp: Option<RdpRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    group: Option<GroupRecord>,
}

#[derive(Serialize)]
struct GroupRecord {
    size: u64,
    bound: AmplificationResult,
}

fn run_bound(a: BoundArgs) -> CliResult {
    let record = BoundRecord {
        eps0: a.eps0,
        n: a.n,
        delta: a.delta,
        shuffle: amplify_shuffle(a.eps0, a.n, a.delta)?,
        swap: amplify_swap(a.eps0, a.n, a.delta)?,
        rdp: match a.alpha {
            Some(alpha) => Some(RdpRecord {
                alpha,
                epsilon: rdp_bound(a.eps0, a.n, alpha)?,
            }),
            None => None,
        },
        group: match a.group {
            Some(size) => Some(GroupRecord {
                size,
                bound: amplify_group(a.eps0, size, a.delta)?,
            }),
            None => None,
        },
    };
    write_json(io::stdout().lock(), &record)?;
    Ok(())
}

#[derive(Deserialize)]
struct GridRow {
    n: usize,
    eps0: f64,
    delta: f64,
}

fn run_verify(a: VerifyArgs) -> CliResult {
    let triples: Vec<GridRow> = match &a.grid {
        Some(path) => {
            let mut reader = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(open(path)?);
            reader
                .deserialize()
                .enumerate()
                .map(|(i, row)| {
                    row.map_err(|e| {
                        CliError::Core(Error::Parse {
                            line: i + 2,
                            message: e.to_string(),
                        })
                    })
                })
                .collect::<Result<_, _>>()?
        }
        None => vec![GridRow {
            n: a.n.expect("required by clap"),
            eps0: a.eps0.expect("required by clap"),
            delta: a.delta.expect("required by clap"),
        }],
    };
    let mut failed = 0;
    let mut out = io::stdout().lock();
    for row in &triples {
        let cert = match a.claim {
            Some(eps) => {
                let regime = amplify_shuffle(row.eps0, row.n as u64, row.delta)?.regime;
                certify_claim(row.n, row.eps0, eps, regime, row.delta)?
            }
            None => certify_amplification(row.n, row.eps0, row.delta)?,
        };
        if !cert.pass {
            failed += 1;
        }
        write_json_line(&mut out, &cert)?;
        out.flush()?;
    }
    if failed > 0 {
        return Err(CliError::VerificationFailed(failed));
    }
    Ok(())
}

#[derive(Serialize)]
struct CoverNode {
    h: u32,
    j: usize,
    leaves: (usize, usize),
}

#[derive(Serialize)]
struct CoverRecord {
    t: usize,
    d: usize,
    nodes: Vec<CoverNode>,
}

fn run_cover(a: CoverArgs) -> CliResult {
    let cover = dyadic_cover(a.t, a.d)?;
    let record = CoverRecord {
        t: a.t,
        d: a.d,
        nodes: cover
            .nodes
            .iter()
            .map(|&(h, j)| CoverNode {
                h,
                j,
                leaves: DyadicCover::leaf_range((h, j)),
            })
            .collect(),
    };
    write_json_line(io::stdout().lock(), &record)?;
    Ok(())
}

fn run_estimate(a: EstimateArgs) -> CliResult {
    let reports = read_reports_jsonl(open(&a.reports)?)?;
    let tree = accumulate(&reports, a.d)?;
    let mut estimates = estimate_marginals(&tree, a.epsilon, a.k, a.d)?;
    if let Some(path) = &a.truth_inputs {
        let population = read_inputs_jsonl(open(path)?, a.d, a.k)?;
        estimates = estimates.with_truth(population.ground_truth())?;
    }
    let sink: Box<dyn Write> = match &a.output {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError::Core(Error::Io(io::Error::other(e)));
    let errors = estimates.abs_errors();
    match (&estimates.true_f, &errors) {
        (Some(_), Some(_)) => w.write_record(["t", "f_tilde", "f_true", "abs_error"]),
        _ => w.write_record(["t", "f_tilde"]),
    }
    .map_err(csv_err)?;
    for (i, f) in estimates.f_tilde.iter().enumerate() {
        let mut row = vec![(i + 1).to_string(), format!("{f:.16e}")];
        if let (Some(truth), Some(errs)) = (&estimates.true_f, &errors) {
            row.push(truth[i].to_string());
            row.push(format!("{:.16e}", errs[i]));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
