//! Additive secret sharing over the 64-bit ring among simulated parties.
//!
//! Parties run in one process and talk only through ordered channels
//! ([`channel::Network`]); every message is logged in a [`Transcript`]. A
//! [`TrustedDealer`] supplies Beaver triples and shared random bits. The
//! [`MpcEngine`] implements [`RingBackend`](crate::fixedpoint::circuit::RingBackend),
//! so every fixed-point circuit runs on shares unchanged and reveals the same
//! bits as its plaintext evaluation.
//!
//! The model is honest-but-curious: no MACs, no malicious security.

pub mod channel;
pub mod dealer;
mod engine;
pub mod transcript;

pub use dealer::{BeaverTriple, TrustedDealer};
pub use engine::{EngineConfig, MpcEngine, Schedule};
pub use transcript::{MessageKind, RevealEvent, Role, Transcript, TranscriptEntry, TranscriptMode};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::circuit::CircuitError;
use crate::fixedpoint::{FixedPointError, FpTensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("secret sharing needs at least 2 parties, got {0}")]
    TooFewParties(usize),
    #[error("party index {index} out of range for {parties} parties")]
    UnknownParty { index: usize, parties: usize },
    #[error("reveal needs all {expected} shares, got {actual}")]
    MissingShare { expected: usize, actual: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
}

pub type Result<T> = std::result::Result<T, MpcError>;

/// Index of a data-holding party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(usize);

impl PartyId {
    pub fn new(index: usize, parties: usize) -> Result<Self> {
        if index >= parties {
            return Err(MpcError::UnknownParty { index, parties });
        }
        Ok(PartyId(index))
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-party additive shares of a tensor. `shares[p]` is party `p`'s share.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretShared {
    shape: Vec<usize>,
    parties: usize,
    shares: Vec<Vec<u64>>,
}

impl SecretShared {
    /// Assembles shares; `shares` may hold fewer than `parties` entries, in
    /// which case [`reveal`] fails.
    pub fn from_shares(shape: Vec<usize>, parties: usize, shares: Vec<Vec<u64>>) -> Result<Self> {
        if parties < 2 {
            return Err(MpcError::TooFewParties(parties));
        }
        let n: usize = shape.iter().product();
        if let Some(bad) = shares.iter().find(|s| s.len() != n) {
            return Err(MpcError::ShapeMismatch { left: shape, right: vec![bad.len()] });
        }
        Ok(SecretShared { shape, parties, shares })
    }

    pub(crate) fn flat(parties: usize, shares: Vec<Vec<u64>>) -> Self {
        let n = shares.first().map_or(0, Vec::len);
        SecretShared { shape: vec![n], parties, shares }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn share(&self, p: usize) -> Option<&[u64]> {
        self.shares.get(p).map(Vec::as_slice)
    }

    pub(crate) fn shares(&self) -> &[Vec<u64>] {
        &self.shares
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(MpcError::ShapeMismatch { left: self.shape, right: shape });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Drops one party's share, e.g. to model a missing participant.
    pub fn without_share(mut self, p: usize) -> Self {
        if p < self.shares.len() {
            self.shares.remove(p);
        }
        self
    }
}

/// Shares `x` among `parties`: `parties - 1` uniform shares, the last one
/// correcting the sum.
pub fn share<R: Rng + ?Sized>(x: &FpTensor, parties: usize, rng: &mut R) -> Result<SecretShared> {
    if parties < 2 {
        return Err(MpcError::TooFewParties(parties));
    }
    let shares = dealer::share_with(rng, &x.to_ring(), parties);
    Ok(SecretShared { shape: x.shape().to_vec(), parties, shares })
}

/// Elementwise ring sum of all shares.
pub fn reveal(v: &SecretShared) -> Result<FpTensor> {
    if v.shares.len() != v.parties {
        return Err(MpcError::MissingShare { expected: v.parties, actual: v.shares.len() });
    }
    let mut acc = vec![0u64; v.numel()];
    for s in &v.shares {
        for (a, x) in acc.iter_mut().zip(s) {
            *a = a.wrapping_add(*x);
        }
    }
    Ok(FpTensor::from_ring(v.shape.clone(), &acc)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::FixedPoint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn share_reveal_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = FpTensor::scalar(FixedPoint::encode(7.0).unwrap());
        let s = share(&x, 2, &mut rng).unwrap();
        assert_eq!(reveal(&s).unwrap(), x);
        let t = FpTensor::encode(vec![2, 3], &[1.0, -2.0, 3.5, 0.0, 1e-9, -1e6]).unwrap();
        let s = share(&t, 3, &mut rng).unwrap();
        assert_eq!(s.shape(), &[2, 3]);
        assert_eq!(reveal(&s).unwrap(), t);
    }

    #[test]
    fn missing_share_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = FpTensor::scalar(FixedPoint::ONE);
        let s = share(&x, 3, &mut rng).unwrap().without_share(1);
        assert!(matches!(reveal(&s), Err(MpcError::MissingShare { expected: 3, actual: 2 })));
        assert!(matches!(share(&x, 1, &mut rng), Err(MpcError::TooFewParties(1))));
    }

    #[test]
    fn single_share_is_uniform() {
        // Kolmogorov-Smirnov of party 0's share of a fixed secret against
        // the uniform distribution on the ring.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = FpTensor::scalar(FixedPoint::ZERO);
        let n = 10_000;
        let mut u: Vec<f64> = (0..n)
            .map(|_| {
                let s = share(&x, 3, &mut rng).unwrap();
                s.share(0).unwrap()[0] as f64 / 2f64.powi(64)
            })
            .collect();
        u.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &v)| ((i + 1) as f64 / n as f64 - v).abs().max((v - i as f64 / n as f64).abs()))
            .fold(0.0, f64::max);
        // critical value at alpha = 0.01
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }
}
