//! `vpmix`: partition data, train, account, generate and evaluate.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 when a valid job fails.
//! Log verbosity comes from `VPMIX_LOG` (an `env_logger` filter, default
//! `info`).

mod commands;
mod error;
mod job;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vpmix::noise::NoiseTopology;
use vpmix::trainer::Backend;

use commands::{AccountArgs, FixtureKind, TrainOverrides};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "vpmix", version, about = "Private mixture models over vertically partitioned data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TopologyArg {
    TrustedThirdParty,
    Distributed,
}

impl From<TopologyArg> for NoiseTopology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::TrustedThirdParty => NoiseTopology::TrustedThirdParty,
            TopologyArg::Distributed => NoiseTopology::Distributed,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    FixedPoint,
    Mpc,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::FixedPoint => Backend::FixedPoint,
            BackendArg::Mpc => Backend::Mpc,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a CSV into per-party block files plus a manifest.
    Partition {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train on a partition directory; writes checkpoint.json, metrics.jsonl
    /// and the resolved config.toml into --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Disable the per-example density normalizer.
        #[arg(long)]
        no_normalizer: bool,
        /// Run the floating-point baseline on the joined table.
        #[arg(long)]
        plain: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<u64>,
        /// Noise multiplier; 0 disables noise.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
    },
    /// Privacy loss of a training configuration.
    Account {
        #[arg(long)]
        sigma: f64,
        /// Sampling ratio.
        #[arg(long)]
        q: f64,
        #[arg(long)]
        iters: u64,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        /// Report the guarantee towards a data-holding party.
        #[arg(long)]
        party: bool,
        /// The party knows which rows were sampled (no amplification).
        #[arg(long)]
        known_indices: bool,
        #[arg(long, default_value_t = 2)]
        parties: usize,
        /// Parties pooling their own noise contributions.
        #[arg(long, default_value_t = 0)]
        colluding: usize,
        #[arg(long, value_enum, default_value = "trusted-third-party")]
        topology: TopologyArg,
        /// Count each of this many epochs as one composition, without amplification.
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Sample synthetic rows from a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean negative log-likelihood of a CSV file or partition directory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Write one of the bundled synthetic datasets.
    Fixture {
        #[arg(long, value_enum)]
        kind: FixtureKind,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Partition { input, schema, out_dir } => commands::partition(&input, &schema, &out_dir),
        Command::Train { config, data_dir, out, no_normalizer, plain, seed, iterations, sigma, backend } => {
            let ov = TrainOverrides { seed, iterations, sigma, backend: backend.map(Backend::from), no_normalizer };
            commands::train(&config, &data_dir, &out, plain, ov)
        }
        Command::Account { sigma, q, iters, delta, party, known_indices, parties, colluding, topology, epochs, json } => {
            commands::account(&AccountArgs {
                sigma,
                q,
                iters,
                delta,
                party,
                known_indices,
                parties,
                colluding,
                topology: topology.into(),
                epochs,
                json,
            })
        }
        Command::Generate { checkpoint, n, out, seed } => commands::generate(&checkpoint, n, &out, seed),
        Command::Eval { checkpoint, test } => commands::eval(&checkpoint, &test),
        Command::Fixture { kind, out_dir, seed } => commands::fixture(kind, &out_dir, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VPMIX_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
