//! Exact discrete Gaussian noise, optionally split across parties.
//!
//! Sampling follows Canonne, Kamath and Steinke: discrete Laplace proposals
//! accepted with a Bernoulli of `exp(-gamma)`, all in exact rational
//! arithmetic. The variance is taken exactly as the binary value of the
//! supplied `f64`, so the only approximation left is that of the input.
//!
//! Noise integers live on a grid of quantum `C / 2^16`: an integer `k` adds
//! `k * C * 2^-16` to the gradient. The sampled integer variance is therefore
//! `sigma^2 * 2^32` (divided by `P` per party in the distributed topology).

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::FixedPoint;
use crate::mpc::{MpcEngine, MpcError, PartyId, Role, SecretShared};

/// Bits of fixed-point resolution between the noise quantum and `C`.
pub const NOISE_QUANTUM_BITS: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("noise variance must be positive and finite, got {0}")]
    Variance(f64),
    #[error("clipping threshold must be positive and finite, got {0}")]
    Clip(f64),
    #[error("party count must be at least 1, got {0}")]
    Parties(usize),
    #[error("noise topology mismatch: {0}")]
    Topology(String),
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseTopology {
    /// One entity samples the full noise.
    #[default]
    TrustedThirdParty,
    /// Every party samples variance `sigma^2 / P` and the shares are summed.
    Distributed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise multiplier in units of `C`.
    pub sigma: f64,
    /// Clipping threshold `C`.
    pub clip: f64,
    pub parties: usize,
    pub topology: NoiseTopology,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(NoiseError::Variance(self.sigma));
        }
        if !(self.clip.is_finite() && self.clip > 0.0) {
            return Err(NoiseError::Clip(self.clip));
        }
        if self.parties == 0 {
            return Err(NoiseError::Parties(0));
        }
        if self.parties == 1 && self.topology == NoiseTopology::Distributed {
            return Err(NoiseError::Topology("one party cannot distribute noise".into()));
        }
        Ok(())
    }

    /// Number of independent contributors.
    pub fn contributors(&self) -> usize {
        match self.topology {
            NoiseTopology::TrustedThirdParty => 1,
            NoiseTopology::Distributed => self.parties,
        }
    }

    /// Integer variance each contributor samples, in noise quanta.
    pub fn integer_variance_per_contributor(&self) -> f64 {
        let s = self.sigma * f64::from(1u32 << NOISE_QUANTUM_BITS);
        s * s / self.contributors() as f64
    }

    /// Raw fixed-point value of one noise quantum `C * 2^-16`.
    pub fn quantum(&self) -> FixedPoint {
        FixedPoint::from_raw((self.clip * f64::from(1u32 << (32 - NOISE_QUANTUM_BITS))).trunc() as i64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseGrid {
    Integers,
    /// Sum of `parties` independent integer contributions.
    PartySum { parties: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseVector {
    pub values: Vec<i64>,
    pub grid: NoiseGrid,
}

impl NoiseVector {
    /// Ring words of `values * quantum`.
    pub fn to_ring(&self, quantum: FixedPoint) -> Vec<u64> {
        self.values.iter().map(|&k| (k as u64).wrapping_mul(quantum.to_ring())).collect()
    }
}

/// Exact rational `num / den`.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Ratio {
    num: BigUint,
    den: BigUint,
}

impl Ratio {
    /// The exact binary value of a positive finite float.
    fn from_f64(x: f64) -> Self {
        debug_assert!(x.is_finite() && x > 0.0);
        let bits = x.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
        if e >= 0 {
            Ratio { num: BigUint::from(mant) << e as usize, den: BigUint::one() }
        } else {
            Ratio { num: BigUint::from(mant), den: BigUint::one() << (-e) as usize }
        }
    }
}

/// Uniform integer in `[0, bound)` by rejection over whole bytes.
fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    debug_assert!(!bound.is_zero());
    if let Some(b) = bound.to_u64() {
        return BigUint::from(rng.random_range(0..b));
    }
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = (bytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let v = BigUint::from_bytes_be(&buf);
        if &v < bound {
            return v;
        }
    }
}

fn bernoulli<R: RngCore + ?Sized>(rng: &mut R, num: &BigUint, den: &BigUint) -> bool {
    &uniform_below(rng, den) < num
}

/// Bernoulli with success probability `exp(-num/den)`.
fn bernoulli_exp<R: RngCore + ?Sized>(rng: &mut R, num: &BigUint, den: &BigUint) -> bool {
    if num <= den {
        let mut k = BigUint::one();
        loop {
            let d = den * &k;
            if bernoulli(rng, num, &d) {
                k += 1u32;
            } else {
                break;
            }
        }
        return (k % 2u32) == BigUint::one();
    }
    let whole = num / den;
    let mut i = BigUint::zero();
    while i < whole {
        if !bernoulli_exp(rng, den, den) {
            return false;
        }
        i += 1u32;
    }
    bernoulli_exp(rng, &(num - &whole * den), den)
}

/// Discrete Laplace with scale `t`: mass proportional to `exp(-|k|/t)`.
fn discrete_laplace<R: RngCore + ?Sized>(rng: &mut R, t: &BigUint) -> BigInt {
    let one = BigUint::one();
    loop {
        let u = uniform_below(rng, t);
        if !bernoulli_exp(rng, &u, t) {
            continue;
        }
        let mut v = BigUint::zero();
        while bernoulli_exp(rng, &one, &one) {
            v += 1u32;
        }
        let negative = rng.random_bool(0.5);
        if negative && u.is_zero() && v.is_zero() {
            continue;
        }
        let mag = BigInt::from(u + t * v);
        return if negative { -mag } else { mag };
    }
}

fn discrete_gaussian_one<R: RngCore + ?Sized>(rng: &mut R, s2: &Ratio) -> i64 {
    // t = floor(sigma) + 1, from the integer square root of floor(sigma^2)
    let t = (&s2.num / &s2.den).sqrt() + 1u32;
    let t_int = BigInt::from(t.clone());
    let num_s = BigInt::from(s2.num.clone());
    let den_s = BigInt::from(s2.den.clone());
    loop {
        let y = discrete_laplace(rng, &t);
        // gamma = (|y| - s2/t)^2 / (2 s2) = (|y| t den - num)^2 / (2 num den t^2)
        let diff: BigInt = y.abs() * &t_int * &den_s - &num_s;
        let gnum = (&diff * &diff).magnitude().clone();
        let gden = BigUint::from(2u32) * &s2.num * &s2.den * &t * &t;
        if bernoulli_exp(rng, &gnum, &gden) {
            return y.to_i64().expect("discrete Gaussian sample fits in i64");
        }
    }
}

/// `d` i.i.d. draws with mass proportional to `exp(-k^2 / (2 sigma2))`.
pub fn sample_discrete_gaussian<R: Rng + ?Sized>(sigma2: f64, d: usize, rng: &mut R) -> Result<NoiseVector, NoiseError> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(NoiseError::Variance(sigma2));
    }
    let s2 = Ratio::from_f64(sigma2);
    let values = (0..d).map(|_| discrete_gaussian_one(rng, &s2)).collect();
    Ok(NoiseVector { values, grid: NoiseGrid::Integers })
}

/// One contributor's integer noise for a `d`-dimensional gradient.
pub fn sample_contribution<R: Rng + ?Sized>(spec: &NoiseSpec, d: usize, rng: &mut R) -> Result<NoiseVector, NoiseError> {
    spec.validate()?;
    let mut v = sample_discrete_gaussian(spec.integer_variance_per_contributor(), d, rng)?;
    if spec.topology == NoiseTopology::Distributed {
        v.grid = NoiseGrid::PartySum { parties: spec.parties };
    }
    Ok(v)
}

/// A party's secret-shared share of distributed noise.
pub fn sample_party_noise_share<R: Rng + ?Sized>(
    spec: &NoiseSpec,
    party: PartyId,
    d: usize,
    rng: &mut R,
    engine: &mut MpcEngine,
) -> Result<SecretShared, NoiseError> {
    if spec.topology != NoiseTopology::Distributed {
        return Err(NoiseError::Topology("party noise shares need the distributed topology".into()));
    }
    let v = sample_contribution(spec, d, rng)?;
    Ok(engine.input(Role::Party(party.index()), &v.to_ring(spec.quantum()), "noise")?)
}

/// Variance of the discrete Gaussian with parameter `sigma2`, by direct
/// summation of the mass function.
pub fn discrete_gaussian_variance(sigma2: f64) -> f64 {
    let limit = (sigma2.sqrt() * 40.0).ceil() as i64 + 2;
    let (mut z, mut m2) = (1.0, 0.0);
    for k in 1..=limit {
        let w = (-(k * k) as f64 / (2.0 * sigma2)).exp();
        z += 2.0 * w;
        m2 += 2.0 * (k * k) as f64 * w;
    }
    m2 / z
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two-sample Kolmogorov-Smirnov statistic.
    pub(crate) fn ks_two_sample(a: &mut [i64], b: &mut [i64]) -> f64 {
        a.sort_unstable();
        b.sort_unstable();
        let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
        while i < a.len() && j < b.len() {
            let v = a[i].min(b[j]);
            while i < a.len() && a[i] == v {
                i += 1;
            }
            while j < b.len() && b[j] == v {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    pub(crate) fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
        let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
        c * ((n + m) as f64 / (n * m) as f64).sqrt()
    }

    #[test]
    fn ratio_is_exact() {
        let r = Ratio::from_f64(2.5);
        assert_eq!(r.num.to_u64().unwrap() as f64 / r.den.to_u64().unwrap() as f64, 2.5);
        let r = Ratio::from_f64(1e-300);
        assert!(r.den.bits() > 900);
    }

    #[test]
    fn bernoulli_exp_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, d) in [(1u32, 2u32), (3, 1), (0, 1)] {
            let (num, den) = (BigUint::from(n), BigUint::from(d));
            let hits = (0..40_000).filter(|_| bernoulli_exp(&mut rng, &num, &den)).count() as f64 / 40_000.0;
            let p = (-(n as f64) / d as f64).exp();
            assert!((hits - p).abs() < 4.0 * (p * (1.0 - p) / 40_000.0).sqrt() + 1e-9, "{n}/{d}: {hits} vs {p}");
        }
    }

    #[test]
    fn variance_small_and_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s2 in [0.3, 4.17, 1.0e6] {
            let v = sample_discrete_gaussian(s2, 20_000, &mut rng).unwrap();
            let m2 = v.values.iter().map(|&k| (k * k) as f64).sum::<f64>() / 20_000.0;
            let want = discrete_gaussian_variance(s2);
            assert!((m2 / want - 1.0).abs() < 0.05, "sigma2={s2}: {m2} vs {want}");
        }
    }

    #[test]
    fn mode_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s2 in [0.5, 2.0, 9.0] {
            let v = sample_discrete_gaussian(s2, 20_000, &mut rng).unwrap();
            let mut counts = std::collections::HashMap::new();
            for k in v.values {
                *counts.entry(k).or_insert(0usize) += 1;
            }
            let zero = counts[&0];
            assert!(counts.iter().all(|(&k, &c)| k == 0 || c < zero));
        }
    }

    #[test]
    fn rejects_bad_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(sample_discrete_gaussian(0.0, 1, &mut rng).is_err());
        assert!(sample_discrete_gaussian(f64::NAN, 1, &mut rng).is_err());
        let spec = NoiseSpec { sigma: 1.0, clip: 1.0, parties: 1, topology: NoiseTopology::Distributed };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn quantum_matches_clip() {
        let spec = NoiseSpec { sigma: 1.0, clip: 1.0, parties: 2, topology: NoiseTopology::TrustedThirdParty };
        assert_eq!(spec.quantum().raw(), 1 << 16);
        assert!((spec.integer_variance_per_contributor() - 2f64.powi(32)).abs() < 1.0);
        let d = NoiseSpec { topology: NoiseTopology::Distributed, ..spec };
        assert!((d.integer_variance_per_contributor() - 2f64.powi(31)).abs() < 1.0);
    }

    #[test]
    fn seeded_draws_repeat() {
        let a = sample_discrete_gaussian(3.0, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_discrete_gaussian(3.0, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distributed_sum_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s2 = 2.042f64 * 2.042;
        let n = 20_000;
        let mut plain = sample_discrete_gaussian(s2, n, &mut rng).unwrap().values;
        let half = sample_discrete_gaussian(s2 / 2.0, 2 * n, &mut rng).unwrap().values;
        let mut summed: Vec<i64> = half.chunks(2).map(|c| c[0] + c[1]).collect();
        let var = summed.iter().map(|&k| (k * k) as f64).sum::<f64>() / n as f64;
        assert!((var / s2 - 1.0).abs() < 0.05, "{var}");
        let d = ks_two_sample(&mut plain, &mut summed);
        assert!(d < ks_critical(n, n, 0.01), "KS {d}");
    }

    #[test]
    fn party_shares_reveal_sum() {
        use crate::mpc::{EngineConfig, MpcEngine};
        let spec = NoiseSpec { sigma: 1.0, clip: 2.0, parties: 2, topology: NoiseTopology::Distributed };
        let run = || {
            let mut e = MpcEngine::new(EngineConfig { parties: 2, seed: 1, ..Default::default() }).unwrap();
            let mut total = None;
            for p in 0..2 {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + p as u64);
                let s = sample_party_noise_share(&spec, PartyId::new(p, 2).unwrap(), 8, &mut rng, &mut e).unwrap();
                total = Some(match total {
                    None => s,
                    Some(t) => e.s_add(&t, &s).unwrap(),
                });
            }
            e.reveal(&total.unwrap(), "noise").unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        // every revealed value sits on the quantum grid
        let q = spec.quantum().raw();
        assert!(a.data().iter().all(|x| x.raw() % q == 0));
        let trusted = NoiseSpec { topology: NoiseTopology::TrustedThirdParty, ..spec };
        let mut e = MpcEngine::new(EngineConfig::default()).unwrap();
        let r = sample_party_noise_share(&trusted, PartyId::new(0, 2).unwrap(), 1, &mut ChaCha8Rng::seed_from_u64(0), &mut e);
        assert!(matches!(r, Err(NoiseError::Topology(_))));
    }
}
