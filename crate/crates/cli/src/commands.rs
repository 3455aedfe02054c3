use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use serde::Serialize;

use vpmix::accountant::{analyst_epsilon, epoch_bound, party_epsilon, EpsilonReport, PrivacyParams};
use vpmix::checkpoint::Checkpoint;
use vpmix::data::{export_synthetic, ingest, read_partition, split_partitioned, write_csv, write_partition, CsvTable, Dataset, Schema};
use vpmix::fixtures;
use vpmix::model::mean_nll;
use vpmix::noise::NoiseTopology;
use vpmix::trainer::{train_plain, train_vpd, write_metrics, Backend};

use crate::error::CliError;
use crate::job::JobConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string(v).expect("report serializes"));
}

pub fn partition(input: &Path, schema: &Path, out_dir: &Path) -> Result<(), CliError> {
    let schema = Schema::load(schema)?;
    let table = CsvTable::read(input)?;
    let m = write_partition(&table, &schema, out_dir)?;
    for p in &m.parties {
        println!("{} rows, party {}: {} ({})", m.n_rows, p.party, out_dir.join(&p.file).display(), p.features.join(", "));
    }
    Ok(())
}

/// Command-line overrides applied on top of the job file.
#[derive(Debug, Default)]
pub struct TrainOverrides {
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
    pub sigma: Option<f64>,
    pub backend: Option<Backend>,
    pub no_normalizer: bool,
}

#[derive(Serialize)]
struct TrainSummary {
    trainer: String,
    iterations: u64,
    train_rows: usize,
    test_rows: usize,
    final_train_nll: Option<f64>,
    final_test_nll: Option<f64>,
    epsilon: Option<f64>,
    delta: f64,
    zero_denominator: bool,
    out_dir: PathBuf,
}

pub fn train(config: &Path, data_dir: &Path, out: &Path, plain: bool, ov: TrainOverrides) -> Result<(), CliError> {
    let mut job = JobConfig::load(config)?;
    if let Some(s) = ov.seed {
        job.train.seed = s;
    }
    if let Some(t) = ov.iterations {
        job.train.iterations = t;
    }
    if let Some(s) = ov.sigma {
        job.train.noise.sigma = s;
    }
    if let Some(b) = ov.backend {
        job.train.backend = b;
    }
    if ov.no_normalizer {
        job.train.normalizer.enabled = false;
    }
    job.validate()?;
    debug!("resolved configuration:\n{}", job.to_toml());

    let (schema, data) = read_partition(data_dir)?;
    let spec = schema.mixture_spec(job.model.k, job.model.priors);
    let split_seed = job.data.split_seed.unwrap_or(job.train.seed);
    let (train, test) = split_partitioned(&data, job.data.test_fraction, split_seed)?;
    let test = (test.n_rows > 0).then(|| test.join());
    let cfg = &job.train;

    let (outcome, trainer) = if plain {
        (train_plain(cfg, &spec, &train.join(), test.as_ref())?, "plain".to_string())
    } else {
        let name = match cfg.backend {
            Backend::FixedPoint => "vpd-fixed-point",
            Backend::Mpc => "vpd-mpc",
        };
        (train_vpd(cfg, &spec, &train, test.as_ref())?, name.to_string())
    };

    create_dir(out)?;
    write_file(&out.join(CONFIG_ECHO_FILE), job.to_toml().as_bytes())?;
    write_metrics(&out.join(METRICS_FILE), &outcome.metrics).map_err(CliError::runtime)?;
    if let Some(t) = &outcome.transcript {
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).map_err(CliError::runtime)?;
        write_file(&out.join(TRANSCRIPT_FILE), &buf)?;
        info!("transcript: {} messages over {} rounds", t.total_messages(), t.rounds());
    }
    let last = outcome.final_metric().cloned();
    let mut ck = Checkpoint::new(spec, Some(schema), outcome.xi, &trainer, Some(cfg.clone()));
    ck.final_train_nll = last.as_ref().map(|m| m.train_nll);
    ck.save(&out.join(CHECKPOINT_FILE))?;

    let epsilon = if cfg.noise.sigma > 0.0 {
        let p = PrivacyParams {
            sigma: cfg.noise.sigma,
            sampling_ratio: cfg.sampling_ratio(train.n_rows),
            iterations: cfg.iterations,
            delta: job.privacy.delta,
            parties: train.n_parties(),
            topology: cfg.noise.topology,
        };
        match analyst_epsilon(&p) {
            Ok(r) => Some(r.epsilon),
            Err(e) => {
                warn!("no privacy bound: {e}");
                None
            }
        }
    } else {
        warn!("noise disabled: the released parameters carry no privacy guarantee");
        None
    };
    print_json(&TrainSummary {
        trainer,
        iterations: cfg.iterations,
        train_rows: train.n_rows,
        test_rows: test.as_ref().map_or(0, |t| t.n_rows),
        final_train_nll: last.as_ref().map(|m| m.train_nll),
        final_test_nll: last.as_ref().and_then(|m| m.test_nll),
        epsilon,
        delta: job.privacy.delta,
        zero_denominator: outcome.zero_denominator,
        out_dir: out.to_path_buf(),
    });
    Ok(())
}

pub struct AccountArgs {
    pub sigma: f64,
    pub q: f64,
    pub iters: u64,
    pub delta: f64,
    pub party: bool,
    pub known_indices: bool,
    pub parties: usize,
    pub colluding: usize,
    pub topology: NoiseTopology,
    pub epochs: Option<u64>,
    pub json: bool,
}

pub fn account(a: &AccountArgs) -> Result<(), CliError> {
    let p = PrivacyParams {
        sigma: a.sigma,
        sampling_ratio: a.q,
        iterations: a.iters,
        delta: a.delta,
        parties: a.parties,
        topology: a.topology,
    };
    let (view, report): (&str, EpsilonReport) = match a.epochs {
        Some(e) => ("epoch bound", epoch_bound(&p, e)?),
        None if a.party || a.known_indices || a.colluding > 0 => ("party", party_epsilon(&p, a.known_indices, a.colluding)?),
        None => ("analyst", analyst_epsilon(&p)?),
    };
    if a.json {
        print_json(&report);
    } else {
        println!("view: {view}");
        println!("epsilon: {}", report.epsilon);
        println!("delta: {}", a.delta);
        println!("method: rdp, optimal order {}", report.optimal_order);
        println!("note: {}", report.looseness_note);
    }
    Ok(())
}

pub fn generate(checkpoint: &Path, n: usize, out: &Path, seed: u64) -> Result<(), CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let schema = ck.schema.clone().ok_or_else(|| CliError::validation("checkpoint carries no schema; cannot write original units"))?;
    let synth = ck.generate(n, seed)?;
    export_synthetic(&synth, &schema, out).map_err(CliError::runtime)?;
    println!("{n} rows written to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    n_rows: usize,
    test_nll: f64,
}

/// Test rows from a CSV file or a partition directory.
fn load_rows(path: &Path, schema: Option<&Schema>) -> Result<Dataset, CliError> {
    if path.is_dir() {
        let (s, part) = read_partition(path)?;
        if let Some(want) = schema {
            if want != &s {
                return Err(CliError::validation(format!("{}: schema differs from the checkpoint's", path.display())));
            }
        }
        Ok(part.join())
    } else {
        let schema = schema.ok_or_else(|| CliError::validation("checkpoint carries no schema; pass a partition directory"))?;
        Ok(ingest(path, schema)?)
    }
}

pub fn eval(checkpoint: &Path, test: &Path) -> Result<(), CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let data = load_rows(test, ck.schema.as_ref())?;
    data.validate(&ck.spec).map_err(CliError::validation)?;
    if data.n_rows == 0 {
        return Err(CliError::validation(format!("{}: no rows", test.display())));
    }
    let theta = ck.point_estimate()?;
    let nll = mean_nll(&ck.spec, &theta, &data).map_err(CliError::runtime)?;
    print_json(&EvalReport { n_rows: data.n_rows, test_nll: nll });
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FixtureKind {
    /// 200 training rows from the five-component mixture.
    Small,
    /// Densities that truncate to zero without the normalizer.
    Vanishing,
    /// 2000 training and 1000 test rows from a known five-component mixture.
    FiveComponent,
}

pub fn fixture(kind: FixtureKind, out_dir: &Path, seed: u64) -> Result<(), CliError> {
    let fx = match kind {
        FixtureKind::Small => fixtures::five_component(200, 50, seed),
        FixtureKind::Vanishing => fixtures::vanishing_density(1000, seed),
        FixtureKind::FiveComponent => fixtures::five_component(2000, 1000, seed),
    };
    create_dir(out_dir)?;
    write_file(&out_dir.join("schema.toml"), fx.schema.to_toml().as_bytes())?;
    for (name, d) in [("data.csv", &fx.train), ("test.csv", &fx.test)] {
        let mut buf = Vec::new();
        write_csv(&mut buf, d, &fx.schema).map_err(CliError::runtime)?;
        write_file(&out_dir.join(name), &buf)?;
    }
    println!("{} training and {} test rows written to {}", fx.train.n_rows, fx.test.n_rows, out_dir.display());
    Ok(())
}
