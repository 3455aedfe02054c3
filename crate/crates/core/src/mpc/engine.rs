use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::channel::Network;
use super::dealer::{share_with, ShareSet, TrustedDealer};
use super::transcript::{MessageKind, Role, Transcript, TranscriptMode};
use super::{MpcError, PartyId, Result, SecretShared};
use crate::fixedpoint::circuit::{self, CircuitError, RingBackend};
use crate::fixedpoint::{DivConfig, FixedPoint, FpTensor};

/// Order in which parties act within a round. Results must not depend on it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Forward,
    Reverse,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub parties: usize,
    pub seed: u64,
    /// Maximum elementwise triples the dealer will issue.
    pub triple_budget: Option<u64>,
    pub transcript: TranscriptMode,
    pub schedule: Schedule,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { parties: 2, seed: 0, triple_budget: None, transcript: TranscriptMode::Summary, schedule: Schedule::Forward }
    }
}

/// Simulated parties plus dealer, evaluating circuits over additive shares.
#[derive(Debug)]
pub struct MpcEngine {
    cfg: EngineConfig,
    dealer: TrustedDealer,
    net: Network,
    party_rngs: Vec<ChaCha8Rng>,
}

impl MpcEngine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        if cfg.parties < 2 {
            return Err(MpcError::TooFewParties(cfg.parties));
        }
        let party_rngs = (0..cfg.parties)
            .map(|p| {
                let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
                r.set_stream(p as u64 + 1);
                r
            })
            .collect();
        Ok(MpcEngine {
            dealer: TrustedDealer::new(cfg.seed, cfg.triple_budget),
            net: Network::new(cfg.transcript),
            party_rngs,
            cfg,
        })
    }

    pub fn parties(&self) -> usize {
        self.cfg.parties
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn dealer(&self) -> &TrustedDealer {
        &self.dealer
    }

    pub fn dealer_mut(&mut self) -> &mut TrustedDealer {
        &mut self.dealer
    }

    pub fn transcript(&self) -> &Transcript {
        self.net.transcript()
    }

    pub fn network_drained(&self) -> bool {
        self.net.is_drained()
    }

    /// Tags subsequent messages, e.g. with the training iteration.
    pub fn set_context(&mut self, context: impl Into<String>) {
        self.net.set_context(context);
    }

    fn order(&self) -> Vec<usize> {
        let mut o: Vec<usize> = (0..self.cfg.parties).collect();
        if self.cfg.schedule == Schedule::Reverse {
            o.reverse();
        }
        o
    }

    /// Dealer material travels over the channels like everything else.
    fn deliver(&mut self, set: ShareSet, label: &str) -> Result<ShareSet> {
        for (p, s) in set.into_iter().enumerate() {
            self.net.send(0, Role::Dealer, Role::Party(p), MessageKind::Preprocessing, label, s);
        }
        let mut out = vec![Vec::new(); self.cfg.parties];
        for p in self.order() {
            out[p] = self.net.recv(Role::Dealer, Role::Party(p))?;
        }
        Ok(out)
    }

    /// `owner` secret-shares `values`; used for party data and noise.
    pub fn input(&mut self, owner: Role, values: &[u64], label: &str) -> Result<SecretShared> {
        let parties = self.cfg.parties;
        let set = match owner {
            Role::Party(p) => {
                if p >= parties {
                    return Err(MpcError::UnknownParty { index: p, parties });
                }
                // Owner keeps the correcting share; the others get uniform words.
                let mut set = share_with(&mut self.party_rngs[p], values, parties);
                set.swap(p, parties - 1);
                set
            }
            Role::Dealer => self.dealer.share(values, parties),
        };
        let round = self.net.begin_round();
        let mut out = vec![Vec::new(); parties];
        for (q, s) in set.into_iter().enumerate() {
            if owner == Role::Party(q) {
                out[q] = s;
            } else {
                self.net.send(round, owner, Role::Party(q), MessageKind::Input, label, s);
            }
        }
        for q in self.order() {
            if owner != Role::Party(q) {
                out[q] = self.net.recv(owner, Role::Party(q))?;
            }
        }
        Ok(SecretShared::flat(parties, out))
    }

    pub fn input_tensor(&mut self, owner: PartyId, x: &FpTensor, label: &str) -> Result<SecretShared> {
        self.input(Role::Party(owner.index()), &x.to_ring(), label)?.reshape(x.shape().to_vec())
    }

    /// Every party broadcasts its share; each reconstructs the sum.
    fn open(&mut self, v: &SecretShared, kind: MessageKind, label: &str) -> Result<Vec<u64>> {
        let parties = self.cfg.parties;
        if v.shares().len() != parties {
            return Err(MpcError::MissingShare { expected: parties, actual: v.shares().len() });
        }
        let round = self.net.begin_round();
        let order = self.order();
        for &p in &order {
            for &q in &order {
                if p != q {
                    self.net.send(round, Role::Party(p), Role::Party(q), kind, label, v.shares()[p].clone());
                }
            }
        }
        let mut result: Option<Vec<u64>> = None;
        for &q in &order {
            let mut acc = v.shares()[q].clone();
            for &p in &order {
                if p != q {
                    let m = self.net.recv(Role::Party(p), Role::Party(q))?;
                    for (a, x) in acc.iter_mut().zip(&m) {
                        *a = a.wrapping_add(*x);
                    }
                }
            }
            match &result {
                None => result = Some(acc),
                Some(r) if *r != acc => return Err(CircuitError::InconsistentOpening.into()),
                Some(_) => {}
            }
        }
        Ok(result.unwrap_or_default())
    }

    /// Opens `v` to all parties as an intended output.
    pub fn reveal(&mut self, v: &SecretShared, label: &str) -> Result<FpTensor> {
        let raw = self.open(v, MessageKind::Reveal, label)?;
        Ok(FpTensor::from_ring(v.shape().to_vec(), &raw)?)
    }

    fn check_same(u: &SecretShared, v: &SecretShared) -> Result<()> {
        if u.shape() != v.shape() {
            return Err(MpcError::ShapeMismatch { left: u.shape().to_vec(), right: v.shape().to_vec() });
        }
        Ok(())
    }

    fn broadcast_pair(&mut self, u: &SecretShared, v: &SecretShared) -> Result<(SecretShared, SecretShared, Vec<usize>)> {
        if u.shape() == v.shape() {
            return Ok((u.clone(), v.clone(), u.shape().to_vec()));
        }
        if u.numel() == 1 {
            let shape = v.shape().to_vec();
            return Ok((self.gather(u, &vec![0; v.numel()])?, v.clone(), shape));
        }
        if v.numel() == 1 {
            let shape = u.shape().to_vec();
            return Ok((u.clone(), self.gather(v, &vec![0; u.numel()])?, shape));
        }
        Err(MpcError::ShapeMismatch { left: u.shape().to_vec(), right: v.shape().to_vec() })
    }

    /// Local sharewise addition.
    pub fn s_add(&mut self, u: &SecretShared, v: &SecretShared) -> Result<SecretShared> {
        Self::check_same(u, v)?;
        RingBackend::add(self, u, v)?.reshape(u.shape().to_vec())
    }

    /// Fixed-point product; scalars broadcast.
    pub fn s_mul(&mut self, u: &SecretShared, v: &SecretShared) -> Result<SecretShared> {
        let (a, b, shape) = self.broadcast_pair(u, v)?;
        let a = a.reshape(vec![shape.iter().product()])?;
        let b = b.reshape(vec![shape.iter().product()])?;
        RingBackend::fp_mul(self, &a, &b)?.reshape(shape)
    }

    pub fn s_public_mul(&mut self, u: &SecretShared, k: FixedPoint) -> Result<SecretShared> {
        let shape = u.shape().to_vec();
        RingBackend::fp_mul_public(self, &flat(u), &[k.to_ring()])?.reshape(shape)
    }

    /// Adds `k` to party 0's share only.
    pub fn s_public_add(&mut self, u: &SecretShared, k: FixedPoint) -> Result<SecretShared> {
        let shape = u.shape().to_vec();
        RingBackend::add_public(self, &flat(u), &[k.to_ring()])?.reshape(shape)
    }

    pub fn s_div(&mut self, a: &SecretShared, b: &SecretShared, cfg: &DivConfig) -> Result<SecretShared> {
        cfg.validate()?;
        let (a, b, shape) = self.broadcast_pair(a, b)?;
        circuit::div(self, &flat(&a), &flat(&b), cfg)?.reshape(shape)
    }

    pub fn s_exp(&mut self, u: &SecretShared, n_squarings: u32) -> Result<SecretShared> {
        if n_squarings == 0 || n_squarings > 31 {
            return Err(crate::fixedpoint::FixedPointError::Config(format!("n_squarings must be in 1..=31, got {n_squarings}")).into());
        }
        let shape = u.shape().to_vec();
        circuit::exp(self, &flat(u), n_squarings)?.reshape(shape)
    }

    /// Shared inverse square root. Positivity cannot be checked without
    /// revealing; nonpositive inputs yield zero.
    pub fn s_inv_sqrt(&mut self, u: &SecretShared, iterations: u32) -> Result<SecretShared> {
        let shape = u.shape().to_vec();
        circuit::inv_sqrt(self, &flat(u), iterations)?.reshape(shape)
    }

    fn map_local(&self, a: &SecretShared, f: impl Fn(usize, usize, u64) -> u64) -> SecretShared {
        let shares = a.shares().iter().enumerate().map(|(p, s)| s.iter().enumerate().map(|(i, &x)| f(p, i, x)).collect()).collect();
        SecretShared::flat(self.cfg.parties, shares)
    }

    fn zip_local(&self, a: &SecretShared, b: &SecretShared, f: impl Fn(u64, u64) -> u64) -> circuit::Result<SecretShared> {
        if a.numel() != b.numel() {
            return Err(CircuitError::LengthMismatch { left: a.numel(), right: b.numel() });
        }
        let shares = a.shares().iter().zip(b.shares()).map(|(x, y)| x.iter().zip(y).map(|(u, v)| f(*u, *v)).collect()).collect();
        Ok(SecretShared::flat(self.cfg.parties, shares))
    }
}

fn flat(u: &SecretShared) -> SecretShared {
    let n = u.numel();
    u.clone().reshape(vec![n]).expect("same element count")
}

fn public_at(c: &[u64], i: usize) -> u64 {
    if c.len() == 1 {
        c[0]
    } else {
        c[i]
    }
}

fn check_public(n: usize, c: &[u64]) -> circuit::Result<()> {
    if c.len() == 1 || c.len() == n {
        Ok(())
    } else {
        Err(CircuitError::LengthMismatch { left: n, right: c.len() })
    }
}

fn to_circuit(e: MpcError) -> CircuitError {
    match e {
        MpcError::Circuit(c) => c,
        // Opening preconditions are enforced by construction inside circuits.
        other => panic!("unexpected engine failure inside a circuit: {other}"),
    }
}

impl RingBackend for MpcEngine {
    type Value = SecretShared;

    fn len(&self, v: &SecretShared) -> usize {
        v.numel()
    }

    fn constant(&mut self, c: &[u64]) -> SecretShared {
        let mut shares = vec![vec![0u64; c.len()]; self.cfg.parties];
        shares[0] = c.to_vec();
        SecretShared::flat(self.cfg.parties, shares)
    }

    fn add(&mut self, a: &SecretShared, b: &SecretShared) -> circuit::Result<SecretShared> {
        self.zip_local(a, b, u64::wrapping_add)
    }

    fn sub(&mut self, a: &SecretShared, b: &SecretShared) -> circuit::Result<SecretShared> {
        self.zip_local(a, b, u64::wrapping_sub)
    }

    fn add_public(&mut self, a: &SecretShared, c: &[u64]) -> circuit::Result<SecretShared> {
        check_public(a.numel(), c)?;
        Ok(self.map_local(a, |p, i, x| if p == 0 { x.wrapping_add(public_at(c, i)) } else { x }))
    }

    fn mul_public(&mut self, a: &SecretShared, c: &[u64]) -> circuit::Result<SecretShared> {
        check_public(a.numel(), c)?;
        Ok(self.map_local(a, |_, i, x| x.wrapping_mul(public_at(c, i))))
    }

    fn gather(&mut self, a: &SecretShared, idx: &[usize]) -> circuit::Result<SecretShared> {
        let n = a.numel();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(CircuitError::IndexOutOfBounds { index: bad, len: n });
        }
        let shares = a.shares().iter().map(|s| idx.iter().map(|&i| s[i]).collect()).collect();
        Ok(SecretShared::flat(self.cfg.parties, shares))
    }

    fn concat(&mut self, parts: &[&SecretShared]) -> SecretShared {
        let shares = (0..self.cfg.parties).map(|p| parts.iter().flat_map(|v| v.shares()[p].iter().copied()).collect()).collect();
        SecretShared::flat(self.cfg.parties, shares)
    }

    fn slice(&mut self, a: &SecretShared, range: Range<usize>) -> SecretShared {
        let shares = a.shares().iter().map(|s| s[range.clone()].to_vec()).collect();
        SecretShared::flat(self.cfg.parties, shares)
    }

    fn sum_groups(&mut self, a: &SecretShared, group: usize) -> circuit::Result<SecretShared> {
        if group == 0 || a.numel() % group != 0 {
            return Err(CircuitError::Grouping { len: a.numel(), group });
        }
        let shares = a.shares().iter().map(|s| s.chunks(group).map(|c| c.iter().fold(0u64, |acc, x| acc.wrapping_add(*x))).collect()).collect();
        Ok(SecretShared::flat(self.cfg.parties, shares))
    }

    /// Beaver multiplication: open `x - a` and `y - b` in one round.
    fn ring_mul(&mut self, x: &SecretShared, y: &SecretShared) -> circuit::Result<SecretShared> {
        let n = x.numel();
        if y.numel() != n {
            return Err(CircuitError::LengthMismatch { left: n, right: y.numel() });
        }
        let parties = self.cfg.parties;
        let t = self.dealer.triple(n, parties)?;
        let a = SecretShared::flat(parties, self.deliver(t.a, "triple").map_err(to_circuit)?);
        let b = SecretShared::flat(parties, self.deliver(t.b, "triple").map_err(to_circuit)?);
        let c = SecretShared::flat(parties, self.deliver(t.c, "triple").map_err(to_circuit)?);
        let d = RingBackend::sub(self, x, &a)?;
        let e = RingBackend::sub(self, y, &b)?;
        let de = self.concat(&[&d, &e]);
        let opened = self.open(&de, MessageKind::Open, "beaver").map_err(to_circuit)?;
        let (d, e) = opened.split_at(n);
        let db = self.mul_public(&b, d)?;
        let ea = self.mul_public(&a, e)?;
        let mut z = RingBackend::add(self, &c, &db)?;
        z = RingBackend::add(self, &z, &ea)?;
        let dd: Vec<u64> = d.iter().zip(e).map(|(u, v)| u.wrapping_mul(*v)).collect();
        self.add_public(&z, &dd)
    }

    /// Opens `x + r` for dealer-shared random bits of `r`, then runs the
    /// borrow chain of `c - r` bit by bit.
    fn bit_decompose(&mut self, x: &SecretShared) -> circuit::Result<Vec<SecretShared>> {
        let parties = self.cfg.parties;
        let n = x.numel();
        let sb = self.dealer.random_bits(n, parties);
        let mut rbits = Vec::with_capacity(64);
        for b in sb.bits {
            rbits.push(SecretShared::flat(parties, self.deliver(b, "bit-mask").map_err(to_circuit)?));
        }
        let r = SecretShared::flat(parties, self.deliver(sb.value, "bit-mask").map_err(to_circuit)?);
        let masked = RingBackend::add(self, x, &r)?;
        let c = self.open(&masked, MessageKind::Open, "bit-decompose").map_err(to_circuit)?;

        let mut out = Vec::with_capacity(64);
        let mut borrow: Option<SecretShared> = None;
        for (i, ri) in rbits.iter().enumerate() {
            let ci: Vec<u64> = c.iter().map(|v| (v >> i) & 1).collect();
            let flip: Vec<u64> = ci.iter().map(|&b| 1u64.wrapping_sub(2 * b)).collect();
            // t = r_i xor borrow, u = r_i * borrow
            let (t, u) = match &borrow {
                None => (ri.clone(), None),
                Some(bw) => {
                    let u = self.ring_mul(ri, bw)?;
                    let s = RingBackend::add(self, ri, bw)?;
                    let u2 = self.mul_public(&u, &[2])?;
                    (RingBackend::sub(self, &s, &u2)?, Some(u))
                }
            };
            // x_i = c_i xor t
            let xi = self.mul_public(&t, &flip)?;
            out.push(self.add_public(&xi, &ci)?);
            if i < 63 {
                // borrow' = c_i ? u : r_i + borrow - u
                let w = match (&borrow, &u) {
                    (Some(bw), Some(u)) => {
                        let s = RingBackend::add(self, ri, bw)?;
                        RingBackend::sub(self, &s, u)?
                    }
                    _ => ri.clone(),
                };
                let zero = self.constant(&vec![0; n]);
                let u = u.unwrap_or(zero);
                let diff = RingBackend::sub(self, &u, &w)?;
                let sel = self.mul_public(&diff, &ci)?;
                borrow = Some(RingBackend::add(self, &w, &sel)?);
            }
        }
        Ok(out)
    }
}
