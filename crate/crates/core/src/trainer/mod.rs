//! Training loops: the partitioned trainer, whose gradient runs through the
//! fixed-point circuit (plaintext replay or MPC), and a floating-point
//! log-space baseline on the joined table.
//!
//! Both loops draw minibatches, variational samples and noise from the same
//! seeded streams, so runs with matched seeds see identical batches and
//! identical `eta`.

mod config;
mod gradient;
mod optim;

pub use config::{
    Backend, BaselineNoise, FixedPointConfig, InitConfig, MpcConfig, NoiseConfig, NormalizerConfig, OptimizerConfig,
    OptimizerKind, Subsampling, TrainConfig,
};
pub use gradient::{
    accumulate, gradient_circuit, norm_shift, party_local_inputs, reveal_zero_flag, CircuitOutput, CircuitShape, PartyInputs,
    Protocol, DMAT_CLAMP, GRADIENT_LABEL, ZERO_FLAG_LABEL,
};
pub use optim::{subsample, Optimizer};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, PartitionedDataset};
use crate::fixedpoint::circuit::{CircuitError, PlainBackend};
use crate::fixedpoint::FixedPointError;
use crate::model::{
    constrain, elbo_gradient, mean_nll, per_example_gradients, sample_theta, MixtureSpec, ModelError, ParamLayout, ThetaCon,
    ThetaSample, VariationalParams,
};
use crate::mpc::{EngineConfig, MpcEngine, MpcError, Role, Transcript};
use crate::noise::{sample_contribution, NoiseError, NoiseSpec, NoiseTopology};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("a mixture denominator was zero despite normalization; lower the normalizer threshold or check the data")]
    ZeroDenominator,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Seeded random streams used by the training loops.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SUBSAMPLE: u64 = 2;
    pub const ETA: u64 = 3;
    pub const DEALER_NOISE: u64 = 4;
    /// Party `p` draws its noise from stream `PARTY_NOISE + p`.
    pub const PARTY_NOISE: u64 = 16;
    /// Added to the master seed to seed the MPC engine.
    pub const ENGINE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s);
    r
}

/// One line of the metrics trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: u64,
    pub epoch: f64,
    pub train_nll: f64,
    pub test_nll: Option<f64>,
    pub wall_time_s: f64,
    pub batch_size: usize,
}

pub fn write_metrics(path: &Path, records: &[MetricRecord]) -> Result<(), TrainError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub xi: VariationalParams,
    pub metrics: Vec<MetricRecord>,
    /// Whether any denominator was non-positive; only the aggregate is revealed.
    pub zero_denominator: bool,
    /// Rows where some party saw all of its `mat` entries truncate to zero.
    pub local_zero_rows: usize,
    /// MPC transcript, when the MPC backend ran.
    pub transcript: Option<Transcript>,
}

impl TrainOutcome {
    pub fn final_metric(&self) -> Option<&MetricRecord> {
        self.metrics.last()
    }
}

/// Posterior-mean parameters used for evaluation.
pub fn point_estimate(spec: &MixtureSpec, layout: &ParamLayout, xi: &VariationalParams) -> Result<ThetaCon, TrainError> {
    Ok(constrain(spec, layout, &xi.mu)?.theta)
}

fn evaluate(
    spec: &MixtureSpec,
    layout: &ParamLayout,
    xi: &VariationalParams,
    train: &Dataset,
    test: Option<&Dataset>,
) -> Result<(f64, Option<f64>), TrainError> {
    let theta = point_estimate(spec, layout, xi)?;
    let tr = mean_nll(spec, &theta, train)?;
    let te = test.map(|t| mean_nll(spec, &theta, t)).transpose()?;
    Ok((tr, te))
}

/// Noise inputs for one iteration: `(owner, ring words)` per contributor.
fn sample_noise(
    cfg: &TrainConfig,
    parties: usize,
    d: usize,
    dealer_rng: &mut ChaCha8Rng,
    party_rngs: &mut [ChaCha8Rng],
) -> Result<Vec<(Role, Vec<u64>)>, TrainError> {
    if cfg.noise.sigma == 0.0 {
        return Ok(Vec::new());
    }
    let spec = NoiseSpec { sigma: cfg.noise.sigma, clip: cfg.clip, parties, topology: cfg.noise.topology };
    let quantum = spec.quantum();
    Ok(match cfg.noise.topology {
        NoiseTopology::TrustedThirdParty => {
            vec![(Role::Dealer, sample_contribution(&spec, d, dealer_rng)?.to_ring(quantum))]
        }
        NoiseTopology::Distributed => party_rngs
            .iter_mut()
            .enumerate()
            .map(|(p, r)| Ok((Role::Party(p), sample_contribution(&spec, d, r)?.to_ring(quantum))))
            .collect::<Result<Vec<_>, TrainError>>()?,
    })
}

/// The shared optimization loop. `grad` returns the revealed constrained
/// likelihood gradient summed over the minibatch.
fn run_loop(
    cfg: &TrainConfig,
    spec: &MixtureSpec,
    layout: &ParamLayout,
    train: &Dataset,
    test: Option<&Dataset>,
    mut grad: impl FnMut(u64, &[usize], &ThetaSample) -> Result<Vec<f64>, TrainError>,
) -> Result<(VariationalParams, Vec<MetricRecord>), TrainError> {
    let n = train.n_rows;
    let q = cfg.sampling_ratio(n);
    let mut init_rng = stream(cfg.seed, streams::INIT);
    let mut sub_rng = stream(cfg.seed, streams::SUBSAMPLE);
    let mut eta_rng = stream(cfg.seed, streams::ETA);
    let mut xi = VariationalParams::init(layout, cfg.init.mu_std, cfg.init.scale, &mut init_rng);
    let dim = layout.uncon_len;
    let mut opt = Optimizer::new(cfg.optimizer, 2 * dim);
    let eval_every = if cfg.eval_every == 0 { (1.0 / q).ceil() as u64 } else { cfg.eval_every };
    let start = Instant::now();
    let mut metrics = Vec::new();
    let (tr, te) = evaluate(spec, layout, &xi, train, test)?;
    metrics.push(MetricRecord { iteration: 0, epoch: 0.0, train_nll: tr, test_nll: te, wall_time_s: 0.0, batch_size: 0 });
    let mut params = vec![0.0; 2 * dim];
    let mut g = vec![0.0; 2 * dim];
    for t in 0..cfg.iterations {
        let rows = subsample(n, q, cfg.subsampling, &mut sub_rng);
        let sample = sample_theta(spec, layout, &xi, &mut eta_rng)?;
        let revealed = grad(t, &rows, &sample)?;
        let g_lik: Vec<f64> = revealed.iter().map(|v| v / q).collect();
        let (gm, gl) = elbo_gradient(spec, layout, &sample, &xi, &g_lik)?;
        // optimize log l so the scale stays positive
        for i in 0..dim {
            params[i] = xi.mu[i];
            params[dim + i] = xi.l[i].ln();
            g[i] = gm[i];
            g[dim + i] = gl[i] * xi.l[i];
        }
        opt.ascend(&mut params, &g);
        for i in 0..dim {
            xi.mu[i] = params[i];
            xi.l[i] = params[dim + i].exp();
        }
        let it = t + 1;
        if it % eval_every == 0 || it == cfg.iterations {
            let (tr, te) = evaluate(spec, layout, &xi, train, test)?;
            let rec = MetricRecord {
                iteration: it,
                epoch: it as f64 * q,
                train_nll: tr,
                test_nll: te,
                wall_time_s: start.elapsed().as_secs_f64(),
                batch_size: rows.len(),
            };
            info!("iteration {it}: train NLL {tr:.6}{}", te.map(|v| format!(", test NLL {v:.6}")).unwrap_or_default());
            metrics.push(rec);
        }
    }
    Ok((xi, metrics))
}

/// Party-local blocks plus the joint circuit for one minibatch.
#[allow(clippy::too_many_arguments)]
pub fn vpd_gradient<P: Protocol>(
    proto: &mut P,
    spec: &MixtureSpec,
    layout: &ParamLayout,
    theta: &ThetaCon,
    data: &PartitionedDataset,
    rows: &[usize],
    noise: &[(Role, Vec<u64>)],
    clip: Option<f64>,
    normalizer: &NormalizerConfig,
    fp: &FixedPointConfig,
) -> Result<(CircuitOutput<P::Value>, usize), TrainError> {
    let inputs = data
        .blocks
        .iter()
        .map(|b| party_local_inputs(spec, layout, theta, b, rows, normalizer))
        .collect::<Result<Vec<_>, _>>()?;
    let local_zero = inputs.iter().map(|i| i.zero_rows).max().unwrap_or(0);
    let shape = CircuitShape { batch: rows.len(), k: spec.k, party_dims: layout.party_dims.clone() };
    let out = gradient_circuit(proto, &shape, &theta.pi, &inputs, noise, clip, fp)?;
    Ok((out, local_zero))
}

/// Floating-point reference: the sum over `rows` of per-example gradients,
/// each clipped to norm `clip` when given.
pub fn reference_gradient(
    spec: &MixtureSpec,
    layout: &ParamLayout,
    theta: &ThetaCon,
    data: &Dataset,
    rows: &[usize],
    clip: Option<f64>,
) -> Result<Vec<f64>, TrainError> {
    let per = per_example_gradients(spec, layout, theta, data, rows)?;
    let mut sum = vec![0.0; layout.con_len];
    for g in per {
        let f = match clip {
            Some(c) => {
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                1.0 / (norm / c).max(1.0)
            }
            None => 1.0,
        };
        for (s, v) in sum.iter_mut().zip(g) {
            *s += v * f;
        }
    }
    Ok(sum)
}

fn vpd_with<P: Protocol>(
    proto: &mut P,
    cfg: &TrainConfig,
    spec: &MixtureSpec,
    layout: &ParamLayout,
    data: &PartitionedDataset,
    train: &Dataset,
    test: Option<&Dataset>,
) -> Result<(VariationalParams, Vec<MetricRecord>, bool, usize), TrainError> {
    let parties = data.n_parties();
    let mut dealer_rng = stream(cfg.seed, streams::DEALER_NOISE);
    let mut party_rngs: Vec<ChaCha8Rng> = (0..parties).map(|p| stream(cfg.seed, streams::PARTY_NOISE + p as u64)).collect();
    let mut acc = None;
    let mut local_zero = 0;
    let (xi, metrics) = run_loop(cfg, spec, layout, train, test, |t, rows, sample| {
        proto.set_context(&format!("iteration {t}"));
        let noise = sample_noise(cfg, parties, layout.con_len, &mut dealer_rng, &mut party_rngs)?;
        let (out, lz) =
            vpd_gradient(proto, spec, layout, &sample.con.theta, data, rows, &noise, Some(cfg.clip), &cfg.normalizer, &cfg.fixed_point)?;
        local_zero += lz;
        acc = accumulate(proto, acc.take(), out.zero_count)?;
        Ok(out.revealed.decode())
    })?;
    proto.set_context("post-training");
    let flag = reveal_zero_flag(proto, acc)?;
    Ok((xi, metrics, flag, local_zero))
}

/// Trains on vertically partitioned data. `test` is used only for reporting.
pub fn train_vpd(
    cfg: &TrainConfig,
    spec: &MixtureSpec,
    data: &PartitionedDataset,
    test: Option<&Dataset>,
) -> Result<TrainOutcome, TrainError> {
    spec.validate()?;
    cfg.validate_for(data.n_rows, data.n_parties())?;
    if data.n_parties() != spec.n_parties() {
        return Err(TrainError::Config(format!(
            "data has {} party blocks, the model expects {}",
            data.n_parties(),
            spec.n_parties()
        )));
    }
    let layout = spec.layout();
    let train = data.join();
    train.validate(spec)?;
    if let Some(t) = test {
        t.validate(spec)?;
    }
    let (xi, metrics, zero, local_zero, transcript) = match cfg.backend {
        Backend::FixedPoint => {
            let (xi, m, z, lz) = vpd_with(&mut PlainBackend, cfg, spec, &layout, data, &train, test)?;
            (xi, m, z, lz, None)
        }
        Backend::Mpc => {
            let mut engine = MpcEngine::new(EngineConfig {
                parties: data.n_parties(),
                seed: cfg.seed.wrapping_add(streams::ENGINE_SEED_OFFSET),
                triple_budget: cfg.mpc.triple_budget,
                transcript: cfg.mpc.transcript,
                schedule: cfg.mpc.schedule,
            })?;
            let (xi, m, z, lz) = vpd_with(&mut engine, cfg, spec, &layout, data, &train, test)?;
            (xi, m, z, lz, Some(engine.transcript().clone()))
        }
    };
    if local_zero > 0 {
        warn!("{local_zero} party-local rows had every component density truncate to zero");
    }
    if zero {
        if cfg.normalizer.enabled {
            return Err(TrainError::ZeroDenominator);
        }
        warn!("some mixture denominators were zero; affected examples contributed no gradient");
    }
    Ok(TrainOutcome { xi, metrics, zero_denominator: zero, local_zero_rows: local_zero, transcript })
}

/// Floating-point log-space baseline on the joined table.
pub fn train_plain(cfg: &TrainConfig, spec: &MixtureSpec, data: &Dataset, test: Option<&Dataset>) -> Result<TrainOutcome, TrainError> {
    spec.validate()?;
    cfg.validate_for(data.n_rows, spec.n_parties().max(2))?;
    data.validate(spec)?;
    if let Some(t) = test {
        t.validate(spec)?;
    }
    let layout = spec.layout();
    let mut noise_rng = stream(cfg.seed, streams::DEALER_NOISE);
    let sigma_c = cfg.noise.sigma * cfg.clip;
    let discrete =
        NoiseSpec { sigma: cfg.noise.sigma, clip: cfg.clip, parties: 1, topology: NoiseTopology::TrustedThirdParty };
    let quantum = discrete.quantum().decode();
    let (xi, metrics) = run_loop(cfg, spec, &layout, data, test, |_, rows, sample| {
        let mut g = reference_gradient(spec, &layout, &sample.con.theta, data, rows, Some(cfg.clip))?;
        if cfg.noise.sigma > 0.0 {
            match cfg.noise.baseline {
                BaselineNoise::Continuous => {
                    let normal = Normal::new(0.0, sigma_c).expect("positive scale");
                    g.iter_mut().for_each(|v| *v += normal.sample(&mut noise_rng));
                }
                BaselineNoise::Discrete => {
                    let z = sample_contribution(&discrete, g.len(), &mut noise_rng)?;
                    g.iter_mut().zip(&z.values).for_each(|(v, k)| *v += *k as f64 * quantum);
                }
            }
        }
        Ok(g)
    })?;
    Ok(TrainOutcome { xi, metrics, zero_denominator: false, local_zero_rows: 0, transcript: None })
}

/// Draws an index set the way the loops do; exposed for tooling.
pub fn draw_batch<R: Rng + ?Sized>(n: usize, q: f64, mode: Subsampling, rng: &mut R) -> Vec<usize> {
    subsample(n, q, mode, rng)
}
