//! Trusted dealer issuing Beaver triples and shared random bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixedpoint::circuit::CircuitError;

/// Additive shares of one preprocessed vector, indexed `[party][element]`.
pub type ShareSet = Vec<Vec<u64>>;

/// Shares of `(a, b, a*b)` with fresh uniform `a`, `b`.
#[derive(Clone, Debug)]
pub struct BeaverTriple {
    pub a: ShareSet,
    pub b: ShareSet,
    pub c: ShareSet,
}

/// Shares of uniform random bits `r_0..r_63`, least significant first, plus
/// shares of `r = sum r_i 2^i`.
#[derive(Clone, Debug)]
pub struct SharedBits {
    pub bits: Vec<ShareSet>,
    pub value: ShareSet,
}

/// A separate simulated role that never holds data.
#[derive(Debug)]
pub struct TrustedDealer {
    seed: u64,
    rng: ChaCha8Rng,
    issued_triples: u64,
    issued_bit_masks: u64,
    budget: Option<u64>,
}

impl TrustedDealer {
    pub fn new(seed: u64, triple_budget: Option<u64>) -> Self {
        TrustedDealer {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            issued_triples: 0,
            issued_bit_masks: 0,
            budget: triple_budget,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Elementwise triples issued so far.
    pub fn issued_triples(&self) -> u64 {
        self.issued_triples
    }

    pub fn issued_bit_masks(&self) -> u64 {
        self.issued_bit_masks
    }

    pub fn remaining_triples(&self) -> Option<u64> {
        self.budget.map(|b| b - self.issued_triples)
    }

    /// Splits `x` into `parties` additive shares with dealer randomness.
    pub fn share(&mut self, x: &[u64], parties: usize) -> ShareSet {
        share_with(&mut self.rng, x, parties)
    }

    pub fn triple(&mut self, n: usize, parties: usize) -> Result<BeaverTriple, CircuitError> {
        if let Some(rem) = self.remaining_triples() {
            if (n as u64) > rem {
                return Err(CircuitError::TriplesExhausted { requested: n as u64, remaining: rem });
            }
        }
        self.issued_triples += n as u64;
        let a: Vec<u64> = (0..n).map(|_| self.rng.random()).collect();
        let b: Vec<u64> = (0..n).map(|_| self.rng.random()).collect();
        let c: Vec<u64> = a.iter().zip(&b).map(|(x, y)| x.wrapping_mul(*y)).collect();
        Ok(BeaverTriple { a: self.share(&a, parties), b: self.share(&b, parties), c: self.share(&c, parties) })
    }

    pub fn random_bits(&mut self, n: usize, parties: usize) -> SharedBits {
        self.issued_bit_masks += n as u64;
        let r: Vec<u64> = (0..n).map(|_| self.rng.random()).collect();
        let bits = (0..64)
            .map(|i| {
                let b: Vec<u64> = r.iter().map(|x| (x >> i) & 1).collect();
                self.share(&b, parties)
            })
            .collect();
        SharedBits { bits, value: self.share(&r, parties) }
    }

    /// Draws from the dealer's own stream (used when it samples noise).
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// `parties - 1` uniform shares and a correcting last share.
pub fn share_with<R: Rng + ?Sized>(rng: &mut R, x: &[u64], parties: usize) -> ShareSet {
    let mut shares: ShareSet = Vec::with_capacity(parties);
    let mut last = x.to_vec();
    for _ in 1..parties {
        let s: Vec<u64> = (0..x.len()).map(|_| rng.random()).collect();
        for (l, v) in last.iter_mut().zip(&s) {
            *l = l.wrapping_sub(*v);
        }
        shares.push(s);
    }
    shares.push(last);
    shares
}
