//! The per-iteration gradient circuit.
//!
//! Parties first compute their local blocks in plaintext; the joint part then
//! runs against [`Protocol`], so the same code evaluates on plaintext ring
//! words and on additive shares:
//!
//! ```text
//! mat   = prod_p mat_p                      (B x K)
//! pm    = pi * mat,  den = sum_k pm         (B)
//! GP    = mat / den, resp = pm / den
//! GR_p  = resp * dmat_p                     (B x K x d_p)
//! g_n   = [GP(n) | GR_0(n) | ... ] clipped to norm C, summed over n
//! out   = sum_n g_n + noise                 revealed once
//! ```
//!
//! `dmat_p` holds log-derivatives, so `resp * dmat_p` already carries the
//! product of every party's density including party `p`'s own.

use log::warn;

use crate::fixedpoint::circuit::{self, rc, PlainBackend, RingBackend};
use crate::fixedpoint::{FixedPoint, FpTensor};
use crate::model::{compute_normalizer, local_dmat, local_log_density, MixtureSpec, ParamLayout, ThetaCon};
use crate::mpc::{MpcEngine, MpcError, Role};
use crate::data::PartyBlock;

use super::config::{FixedPointConfig, NormalizerConfig};
use super::TrainError;

/// Largest magnitude a party sends for a log-derivative entry.
pub const DMAT_CLAMP: f64 = 1024.0;

/// Label of the single per-iteration reveal.
pub const GRADIENT_LABEL: &str = "noised_gradient";
/// Label of the post-training zero-denominator reveal.
pub const ZERO_FLAG_LABEL: &str = "zero_denominator_flag";

/// A [`RingBackend`] that can also take private inputs and reveal outputs.
pub trait Protocol: RingBackend + Sized {
    fn input(&mut self, owner: Role, values: &[u64], label: &str) -> Result<Self::Value, MpcError>;
    fn reveal(&mut self, v: &Self::Value, label: &str) -> Result<Vec<u64>, MpcError>;
    fn set_context(&mut self, context: &str);
}

impl Protocol for PlainBackend {
    fn input(&mut self, _owner: Role, values: &[u64], _label: &str) -> Result<Vec<u64>, MpcError> {
        Ok(values.to_vec())
    }

    fn reveal(&mut self, v: &Vec<u64>, _label: &str) -> Result<Vec<u64>, MpcError> {
        Ok(v.clone())
    }

    fn set_context(&mut self, _context: &str) {}
}

impl Protocol for MpcEngine {
    fn input(&mut self, owner: Role, values: &[u64], label: &str) -> Result<Self::Value, MpcError> {
        MpcEngine::input(self, owner, values, label)
    }

    fn reveal(&mut self, v: &Self::Value, label: &str) -> Result<Vec<u64>, MpcError> {
        Ok(MpcEngine::reveal(self, v, label)?.to_ring())
    }

    fn set_context(&mut self, context: &str) {
        MpcEngine::set_context(self, context);
    }
}

/// What one party contributes for a minibatch, as raw ring words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartyInputs {
    pub party: usize,
    /// `trunc(exp(LF + c_n) * 2^32)`, shape `B x K`.
    pub mat: Vec<u64>,
    /// Clamped log-derivatives, shape `B x K x d_p`.
    pub dmat: Vec<u64>,
    /// Rows whose every `mat` entry truncated to zero (party-local knowledge).
    pub zero_rows: usize,
}

/// Shifts `LF + c` so the row maximum stays at or below `ceiling`.
fn ceiling_shift(lf_row: &[f64], ceiling: f64, step: f64) -> f64 {
    let m = lf_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() || m <= ceiling {
        return 0.0;
    }
    -((m - ceiling) / step).ceil() * step
}

pub fn party_local_inputs(
    spec: &MixtureSpec,
    layout: &ParamLayout,
    theta: &ThetaCon,
    block: &PartyBlock,
    rows: &[usize],
    normalizer: &NormalizerConfig,
) -> Result<PartyInputs, TrainError> {
    let k = spec.k;
    let parties = layout.party_dims.len();
    let lf = local_log_density(spec, theta, block, rows)?;
    let dm = local_dmat(spec, layout, theta, block, rows)?;
    let mut mat = Vec::with_capacity(lf.len());
    let mut zero_rows = 0;
    for row in lf.chunks(k.max(1)) {
        let c = if normalizer.enabled {
            let t = normalizer.threshold_for(parties);
            let up = compute_normalizer(row, t, normalizer.step);
            if up > 0.0 {
                up
            } else {
                ceiling_shift(row, normalizer.ceiling_for(parties), normalizer.step)
            }
        } else {
            0.0
        };
        let start = mat.len();
        mat.extend(row.iter().map(|l| FixedPoint::encode_saturating((l + c).exp()).to_ring()));
        if mat[start..].iter().all(|&v| v == 0) {
            zero_rows += 1;
        }
    }
    let dmat = dm.iter().map(|v| FixedPoint::encode_saturating(v.clamp(-DMAT_CLAMP, DMAT_CLAMP)).to_ring()).collect();
    Ok(PartyInputs { party: block.party, mat, dmat, zero_rows })
}

/// Public shape of one circuit evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitShape {
    pub batch: usize,
    pub k: usize,
    pub party_dims: Vec<usize>,
}

impl CircuitShape {
    pub fn dim(&self) -> usize {
        self.k + self.party_dims.iter().map(|d| self.k * d).sum::<usize>()
    }
}

/// Power-of-two downscale applied before squaring, so the squared norm stays
/// inside the ring: every `GP(n, k)` is at most `1 / pi_k` and every `GR`
/// entry at most `DMAT_CLAMP`.
pub fn norm_shift(pi: &[f64], shape: &CircuitShape) -> u32 {
    let gp: f64 = pi.iter().map(|p| 1.0 / (p * p).max(1e-300)).sum();
    let gr = (shape.dim() - shape.k) as f64 * DMAT_CLAMP * DMAT_CLAMP;
    let bound = (gp + gr).sqrt();
    (bound.log2().ceil() as i64 - 15).clamp(4, 24) as u32
}

/// Secret result of one circuit evaluation.
pub struct CircuitOutput<V> {
    /// Revealed noised sum, length [`CircuitShape::dim`].
    pub revealed: FpTensor,
    /// Shared count of rows with a non-positive denominator.
    pub zero_count: Option<V>,
}

/// Runs the joint part of one iteration and reveals the noised sum.
///
/// `clip = None` disables clipping; this is only reachable from the step API,
/// never from a validated [`TrainConfig`](super::TrainConfig).
pub fn gradient_circuit<P: Protocol>(
    proto: &mut P,
    shape: &CircuitShape,
    pi: &[f64],
    inputs: &[PartyInputs],
    noise: &[(Role, Vec<u64>)],
    clip: Option<f64>,
    fp: &FixedPointConfig,
) -> Result<CircuitOutput<P::Value>, TrainError> {
    let (b, k) = (shape.batch, shape.k);
    let d = shape.dim();
    let parties = shape.party_dims.len();
    if inputs.len() != parties {
        return Err(TrainError::Config(format!("expected inputs from {parties} parties, got {}", inputs.len())));
    }
    let mut sum = proto.constant(&vec![0u64; d]);
    let mut zero_count = None;
    if b > 0 {
        let mats = inputs
            .iter()
            .map(|i| proto.input(Role::Party(i.party), &i.mat, "mat"))
            .collect::<Result<Vec<_>, _>>()?;
        let dmats = inputs
            .iter()
            .map(|i| proto.input(Role::Party(i.party), &i.dmat, "dmat"))
            .collect::<Result<Vec<_>, _>>()?;

        let mut mat = mats[0].clone();
        for m in &mats[1..] {
            mat = proto.fp_mul(&mat, m)?;
        }
        let pi_raw: Vec<u64> = (0..b).flat_map(|_| pi.iter().map(|p| FixedPoint::encode_saturating(*p).to_ring())).collect();
        let pm = proto.fp_mul_public(&mat, &pi_raw)?;
        let den = proto.sum_groups(&pm, k)?;

        let zf = {
            let dm1 = proto.add_public(&den, &[1u64.wrapping_neg()])?;
            circuit::msb(proto, &dm1)?
        };
        zero_count = Some(proto.sum_groups(&zf, b)?);

        let inv = circuit::reciprocal(proto, &den, &fp.div())?;
        let row_of: Vec<usize> = (0..b * k).map(|i| i / k).collect();
        let inv_k = proto.gather(&inv, &row_of)?;
        let both = proto.concat(&[&mat, &pm]);
        let inv2 = proto.concat(&[&inv_k, &inv_k]);
        let ratios = proto.fp_mul(&both, &inv2)?;
        let gp = proto.slice(&ratios, 0..b * k);
        let resp = proto.slice(&ratios, b * k..2 * b * k);

        // every party's GR in one product
        let mut resp_idx = Vec::new();
        for &dp in &shape.party_dims {
            resp_idx.extend((0..b * k * dp).map(|i| i / dp));
        }
        let resp_all = proto.gather(&resp, &resp_idx)?;
        let dm_refs: Vec<&P::Value> = dmats.iter().collect();
        let dmat_all = proto.concat(&dm_refs);
        let gr_all = proto.fp_mul(&resp_all, &dmat_all)?;

        // per-example vectors, row-major B x D
        let parts = proto.concat(&[&gp, &gr_all]);
        let mut idx = Vec::with_capacity(b * d);
        for n in 0..b {
            idx.extend((0..k).map(|j| n * k + j));
            let mut base = b * k;
            for &dp in &shape.party_dims {
                let w = k * dp;
                idx.extend((0..w).map(|t| base + n * w + t));
                base += b * w;
            }
        }
        let mut g = proto.gather(&parts, &idx)?;

        if let Some(c) = clip {
            let shift = norm_shift(pi, shape);
            let down = proto.fp_mul_public(&g, &[1u64 << (32 - shift)])?;
            let sq = proto.fp_mul(&down, &down)?;
            let norm2 = proto.sum_groups(&sq, d)?;
            let cs = c / f64::from(1u32 << shift);
            if cs < 2f64.powi(-10) {
                warn!("clipping threshold {c} is small for norm shift {shift}; clipping precision degrades");
            }
            // over = 1 when norm2 > cs^2
            let diff = {
                let neg = proto.mul_public(&norm2, &[1u64.wrapping_neg()])?;
                proto.add_public(&neg, &[rc(cs * cs)])?
            };
            let over = circuit::msb(proto, &diff)?;
            let r = circuit::inv_sqrt(proto, &norm2, fp.inv_sqrt_iterations)?;
            let r = proto.fp_mul_public(&r, &[rc(cs)])?;
            let rm1 = proto.add_public(&r, &[rc(-1.0)])?;
            let adj = proto.ring_mul(&over, &rm1)?;
            let factor = proto.add_public(&adj, &[rc(1.0)])?;
            let per_elem: Vec<usize> = (0..b * d).map(|i| i / d).collect();
            let factor = proto.gather(&factor, &per_elem)?;
            g = proto.fp_mul(&g, &factor)?;
        }

        let col_major: Vec<usize> = (0..d).flat_map(|j| (0..b).map(move |n| n * d + j)).collect();
        let gt = proto.gather(&g, &col_major)?;
        sum = proto.sum_groups(&gt, b)?;
    }
    for (owner, words) in noise {
        let z = proto.input(*owner, words, "noise")?;
        sum = proto.add(&sum, &z)?;
    }
    let raw = proto.reveal(&sum, GRADIENT_LABEL)?;
    Ok(CircuitOutput { revealed: FpTensor::from_ring(vec![d], &raw)?, zero_count })
}

/// Folds a per-iteration zero count into a running shared total.
pub fn accumulate<P: Protocol>(proto: &mut P, acc: Option<P::Value>, count: Option<P::Value>) -> Result<Option<P::Value>, TrainError> {
    Ok(match (acc, count) {
        (Some(a), Some(c)) => Some(proto.add(&a, &c)?),
        (a, None) => a,
        (None, c) => c,
    })
}

/// Reveals only whether the running total is positive.
pub fn reveal_zero_flag<P: Protocol>(proto: &mut P, acc: Option<P::Value>) -> Result<bool, TrainError> {
    let acc = match acc {
        Some(a) => a,
        None => proto.constant(&[0]),
    };
    let m1 = proto.add_public(&acc, &[1u64.wrapping_neg()])?;
    let none = circuit::msb(proto, &m1)?;
    let raw = proto.reveal(&none, ZERO_FLAG_LABEL)?;
    Ok(raw[0] == 0)
}
