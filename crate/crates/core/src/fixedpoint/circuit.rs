//! Fixed-point circuits over the 64-bit ring, written once against
//! [`RingBackend`].
//!
//! A backend supplies local linear operations, one interactive ring product
//! and one interactive bit decomposition. Everything else (the split
//! fixed-point product, shifts, reciprocal, exponential, inverse square root)
//! is composed here, so a backend that evaluates its primitives faithfully
//! produces the plaintext bits exactly.

use std::ops::Range;

use thiserror::Error;

use super::{ring_fp_mul, ring_sign, DivConfig, FixedPoint, InitialGuess, FRAC_BITS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("operand lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("length {len} is not a multiple of group size {group}")]
    Grouping { len: usize, group: usize },
    #[error("dealer budget exhausted: {requested} more multiplication triples requested, {remaining} left")]
    TriplesExhausted { requested: u64, remaining: u64 },
    #[error("channel {from} -> {to} has no pending message")]
    EmptyChannel { from: String, to: String },
    #[error("parties opened different values")]
    InconsistentOpening,
}

pub type Result<T> = std::result::Result<T, CircuitError>;

/// Ring-level building blocks of a fixed-point circuit.
///
/// Public operands are raw ring words; a public slice of length 1 broadcasts.
pub trait RingBackend {
    type Value: Clone;

    fn len(&self, v: &Self::Value) -> usize;
    /// A public vector lifted into the backend.
    fn constant(&mut self, c: &[u64]) -> Self::Value;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add_public(&mut self, a: &Self::Value, c: &[u64]) -> Result<Self::Value>;
    /// Ring (integer) product with a public vector.
    fn mul_public(&mut self, a: &Self::Value, c: &[u64]) -> Result<Self::Value>;
    fn gather(&mut self, a: &Self::Value, idx: &[usize]) -> Result<Self::Value>;
    fn concat(&mut self, parts: &[&Self::Value]) -> Self::Value;
    fn slice(&mut self, a: &Self::Value, range: Range<usize>) -> Self::Value;
    /// Sums consecutive runs of `group` elements.
    fn sum_groups(&mut self, a: &Self::Value, group: usize) -> Result<Self::Value>;

    /// Interactive ring product.
    fn ring_mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    /// Interactive decomposition into 64 vectors of 0/1 ring values, least
    /// significant bit first.
    fn bit_decompose(&mut self, a: &Self::Value) -> Result<Vec<Self::Value>>;

    fn fp_mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>
    where
        Self: Sized,
    {
        fp_mul_generic(self, a, b)
    }

    fn fp_mul_public(&mut self, a: &Self::Value, k: &[u64]) -> Result<Self::Value>
    where
        Self: Sized,
    {
        fp_mul_public_generic(self, a, k)
    }
}

/// Raw ring word of a real constant.
pub fn rc(x: f64) -> u64 {
    FixedPoint::encode(x).expect("constant in range").to_ring()
}

const LOW: u64 = (1 << FRAC_BITS) - 1;

/// `sum_{i in bits} bits[i] * 2^(i - from)`.
pub fn recombine<B: RingBackend>(be: &mut B, bits: &[B::Value], from: usize) -> Result<B::Value> {
    let mut acc = be.mul_public(&bits[from], &[1])?;
    for (i, b) in bits.iter().enumerate().skip(from + 1) {
        let t = be.mul_public(b, &[1u64 << (i - from)])?;
        acc = be.add(&acc, &t)?;
    }
    Ok(acc)
}

/// Logical right shift by `k` (`1 <= k < 64`).
pub fn shr<B: RingBackend>(be: &mut B, a: &B::Value, k: usize) -> Result<B::Value> {
    let bits = be.bit_decompose(a)?;
    recombine(be, &bits, k)
}

/// Most significant bit as a 0/1 ring value (1 for negative reals).
pub fn msb<B: RingBackend>(be: &mut B, a: &B::Value) -> Result<B::Value> {
    Ok(be.bit_decompose(a)?.swap_remove(63))
}

/// `1 - 2 * bit`: the ring multiplier for a sign bit.
fn sign_of_bit<B: RingBackend>(be: &mut B, bit: &B::Value) -> Result<B::Value> {
    let t = be.mul_public(bit, &[2u64.wrapping_neg()])?;
    be.add_public(&t, &[1])
}

/// The split integer/fraction fixed-point product over any backend.
pub fn fp_mul_generic<B: RingBackend>(be: &mut B, a: &B::Value, b: &B::Value) -> Result<B::Value> {
    let n = be.len(a);
    if be.len(b) != n {
        return Err(CircuitError::LengthMismatch { left: n, right: be.len(b) });
    }
    let ab = be.concat(&[a, b]);
    let top = msb(be, &ab)?;
    let s = sign_of_bit(be, &top)?;
    let abs = be.ring_mul(&ab, &s)?;
    let bits = be.bit_decompose(&abs)?;
    let int = recombine(be, &bits, 32)?;
    let frac = {
        let hi = be.mul_public(&int, &[1u64 << 32])?;
        be.sub(&abs, &hi)?
    };
    let (ai, bi) = (be.slice(&int, 0..n), be.slice(&int, n..2 * n));
    let (af, bf) = (be.slice(&frac, 0..n), be.slice(&frac, n..2 * n));
    let (sa, sb) = (be.slice(&s, 0..n), be.slice(&s, n..2 * n));
    let lhs = be.concat(&[&ai, &ai, &af, &af, &sa]);
    let rhs = be.concat(&[&bi, &bf, &bi, &bf, &sb]);
    let prods = be.ring_mul(&lhs, &rhs)?;
    let ii = be.slice(&prods, 0..n);
    let ifr = be.slice(&prods, n..2 * n);
    let fi = be.slice(&prods, 2 * n..3 * n);
    let ff = be.slice(&prods, 3 * n..4 * n);
    let sab = be.slice(&prods, 4 * n..5 * n);
    let ff = shr(be, &ff, 32)?;
    let mut c = be.mul_public(&ii, &[1u64 << 32])?;
    c = be.add(&c, &ifr)?;
    c = be.add(&c, &fi)?;
    c = be.add(&c, &ff)?;
    be.ring_mul(&c, &sab)
}

/// Fixed-point product with a public multiplier.
pub fn fp_mul_public_generic<B: RingBackend>(be: &mut B, a: &B::Value, k: &[u64]) -> Result<B::Value> {
    let n = be.len(a);
    if k.len() != 1 && k.len() != n {
        return Err(CircuitError::LengthMismatch { left: n, right: k.len() });
    }
    let sk: Vec<u64> = k.iter().map(|&v| ring_sign(v)).collect();
    let kabs: Vec<u64> = k.iter().zip(&sk).map(|(&v, &s)| v.wrapping_mul(s)).collect();
    let ki_hi: Vec<u64> = kabs.iter().map(|&v| (v >> 32) << 32).collect();
    let ki: Vec<u64> = kabs.iter().map(|&v| v >> 32).collect();
    let kf: Vec<u64> = kabs.iter().map(|&v| v & LOW).collect();

    let top = msb(be, a)?;
    let s = sign_of_bit(be, &top)?;
    let abs = be.ring_mul(a, &s)?;
    let bits = be.bit_decompose(&abs)?;
    let ai = recombine(be, &bits, 32)?;
    let af = {
        let hi = be.mul_public(&ai, &[1u64 << 32])?;
        be.sub(&abs, &hi)?
    };
    let t1 = be.mul_public(&ai, &ki_hi)?;
    let t2 = be.mul_public(&ai, &kf)?;
    let t3 = be.mul_public(&af, &ki)?;
    let ff = be.mul_public(&af, &kf)?;
    let t4 = shr(be, &ff, 32)?;
    let mut c = be.add(&t1, &t2)?;
    c = be.add(&c, &t3)?;
    c = be.add(&c, &t4)?;
    let c = be.ring_mul(&c, &s)?;
    be.mul_public(&c, &sk)
}

/// One-hot indicator of the leading set bit, from a bit decomposition.
///
/// Entry `j` is 1 exactly when bit `j` is the highest set bit. All entries are
/// zero for a zero input.
pub fn leading_one<B: RingBackend>(be: &mut B, bits: &[B::Value]) -> Result<Vec<B::Value>> {
    // h[j] = OR of bits j..64
    let mut h: Vec<B::Value> = vec![bits[63].clone(); 64];
    for j in (0..63).rev() {
        let both = be.ring_mul(&h[j + 1], &bits[j])?;
        let s = be.add(&h[j + 1], &bits[j])?;
        h[j] = be.sub(&s, &both)?;
    }
    let mut onehot = Vec::with_capacity(64);
    for j in 0..63 {
        onehot.push(be.sub(&h[j], &h[j + 1])?);
    }
    onehot.push(h[63].clone());
    Ok(onehot)
}

fn select_public<B: RingBackend>(be: &mut B, onehot: &[B::Value], table: &[u64; 64]) -> Result<B::Value> {
    let mut acc = be.mul_public(&onehot[0], &[table[0]])?;
    for (j, oh) in onehot.iter().enumerate().skip(1) {
        if table[j] != 0 {
            let t = be.mul_public(oh, &[table[j]])?;
            acc = be.add(&acc, &t)?;
        }
    }
    Ok(acc)
}

/// `q <- 2q - q (q b)`, `iterations` times.
fn newton_reciprocal<B: RingBackend>(be: &mut B, mut q: B::Value, b: &B::Value, iterations: u32) -> Result<B::Value> {
    for _ in 0..iterations {
        let qb = be.fp_mul(&q, b)?;
        let qqb = be.fp_mul(&q, &qb)?;
        let q2 = be.mul_public(&q, &[2])?;
        q = be.sub(&q2, &qqb)?;
    }
    Ok(q)
}

/// Approximate `1/b`, zero for `b <= 0`.
pub fn reciprocal<B: RingBackend>(be: &mut B, b: &B::Value, cfg: &DivConfig) -> Result<B::Value> {
    match cfg.initial_guess_mode {
        InitialGuess::PaperFormula => {
            let t = be.mul_public(b, &[2u64.wrapping_neg()])?;
            let t = be.add_public(&t, &[rc(1.0)])?;
            let e = exp(be, &t, cfg.exp_squarings)?;
            let q0 = be.fp_mul_public(&e, &[rc(3.0)])?;
            let q0 = be.add_public(&q0, &[rc(0.003)])?;
            let q = newton_reciprocal(be, q0, b, cfg.iterations)?;
            // b > 0  <=>  msb(b - 1) == 0 for raw b
            let bm1 = be.add_public(b, &[1u64.wrapping_neg()])?;
            let nonpos = msb(be, &bm1)?;
            let pos = {
                let neg = be.mul_public(&nonpos, &[1u64.wrapping_neg()])?;
                be.add_public(&neg, &[1])?
            };
            be.ring_mul(&q, &pos)
        }
        InitialGuess::AffineFallback => {
            let bits = be.bit_decompose(b)?;
            let onehot = leading_one(be, &bits)?;
            let mut table = [0u64; 64];
            table[0] = 1 << 62;
            for (j, t) in table.iter_mut().enumerate().take(63).skip(1) {
                *t = 1u64 << (63 - j);
            }
            let scale = select_public(be, &onehot, &table)?;
            let m = be.fp_mul(b, &scale)?;
            let q0 = be.mul_public(&m, &[2u64.wrapping_neg()])?;
            let q0 = be.add_public(&q0, &[rc(2.9142)])?;
            let q = newton_reciprocal(be, q0, &m, cfg.iterations)?;
            be.fp_mul(&q, &scale)
        }
    }
}

/// `a / b` as `fp_mul(reciprocal(b), a)`.
pub fn div<B: RingBackend>(be: &mut B, a: &B::Value, b: &B::Value, cfg: &DivConfig) -> Result<B::Value> {
    let q = reciprocal(be, b, cfg)?;
    be.fp_mul(&q, a)
}

/// `(1 + x / 2^n)^(2^n)` by `n` squarings.
pub fn exp<B: RingBackend>(be: &mut B, x: &B::Value, n_squarings: u32) -> Result<B::Value> {
    let mut y = be.fp_mul_public(x, &[1u64 << (32 - n_squarings)])?;
    y = be.add_public(&y, &[rc(1.0)])?;
    for _ in 0..n_squarings {
        y = be.fp_mul(&y, &y)?;
    }
    Ok(y)
}

/// Initial guesses for `x^(-1/2)` indexed by the leading bit of `x`.
fn inv_sqrt_table() -> [u64; 64] {
    let mut t = [0u64; 64];
    for (j, v) in t.iter_mut().enumerate().take(63) {
        // x in [2^(j-32), 2^(j-31)); seed at the geometric centre
        *v = rc(2f64.powf(15.75 - j as f64 / 2.0));
    }
    t
}

/// Newton iteration `y <- y (3 - x y^2) / 2`. Zero for `x <= 0`.
pub fn inv_sqrt<B: RingBackend>(be: &mut B, x: &B::Value, iterations: u32) -> Result<B::Value> {
    let bits = be.bit_decompose(x)?;
    let onehot = leading_one(be, &bits)?;
    let mut y = select_public(be, &onehot, &inv_sqrt_table())?;
    for _ in 0..iterations {
        let xy = be.fp_mul(x, &y)?;
        let xyy = be.fp_mul(&xy, &y)?;
        let t = be.mul_public(&xyy, &[1u64.wrapping_neg()])?;
        let t = be.add_public(&t, &[rc(3.0)])?;
        y = be.fp_mul(&y, &t)?;
        y = be.fp_mul_public(&y, &[rc(0.5)])?;
    }
    Ok(y)
}

/// Evaluates circuits directly on ring words.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlainBackend;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(CircuitError::LengthMismatch { left: a, right: b })
    }
}

fn public_at(c: &[u64], i: usize) -> u64 {
    if c.len() == 1 {
        c[0]
    } else {
        c[i]
    }
}

fn check_public(n: usize, c: &[u64]) -> Result<()> {
    if c.len() == 1 || c.len() == n {
        Ok(())
    } else {
        Err(CircuitError::LengthMismatch { left: n, right: c.len() })
    }
}

impl RingBackend for PlainBackend {
    type Value = Vec<u64>;

    fn len(&self, v: &Vec<u64>) -> usize {
        v.len()
    }

    fn constant(&mut self, c: &[u64]) -> Vec<u64> {
        c.to_vec()
    }

    fn add(&mut self, a: &Vec<u64>, b: &Vec<u64>) -> Result<Vec<u64>> {
        check_len(a.len(), b.len())?;
        Ok(a.iter().zip(b).map(|(x, y)| x.wrapping_add(*y)).collect())
    }

    fn sub(&mut self, a: &Vec<u64>, b: &Vec<u64>) -> Result<Vec<u64>> {
        check_len(a.len(), b.len())?;
        Ok(a.iter().zip(b).map(|(x, y)| x.wrapping_sub(*y)).collect())
    }

    fn add_public(&mut self, a: &Vec<u64>, c: &[u64]) -> Result<Vec<u64>> {
        check_public(a.len(), c)?;
        Ok(a.iter().enumerate().map(|(i, x)| x.wrapping_add(public_at(c, i))).collect())
    }

    fn mul_public(&mut self, a: &Vec<u64>, c: &[u64]) -> Result<Vec<u64>> {
        check_public(a.len(), c)?;
        Ok(a.iter().enumerate().map(|(i, x)| x.wrapping_mul(public_at(c, i))).collect())
    }

    fn gather(&mut self, a: &Vec<u64>, idx: &[usize]) -> Result<Vec<u64>> {
        idx.iter()
            .map(|&i| a.get(i).copied().ok_or(CircuitError::IndexOutOfBounds { index: i, len: a.len() }))
            .collect()
    }

    fn concat(&mut self, parts: &[&Vec<u64>]) -> Vec<u64> {
        parts.iter().flat_map(|p| p.iter().copied()).collect()
    }

    fn slice(&mut self, a: &Vec<u64>, range: Range<usize>) -> Vec<u64> {
        a[range].to_vec()
    }

    fn sum_groups(&mut self, a: &Vec<u64>, group: usize) -> Result<Vec<u64>> {
        if group == 0 || a.len() % group != 0 {
            return Err(CircuitError::Grouping { len: a.len(), group });
        }
        Ok(a.chunks(group).map(|c| c.iter().fold(0u64, |s, x| s.wrapping_add(*x))).collect())
    }

    fn ring_mul(&mut self, a: &Vec<u64>, b: &Vec<u64>) -> Result<Vec<u64>> {
        check_len(a.len(), b.len())?;
        Ok(a.iter().zip(b).map(|(x, y)| x.wrapping_mul(*y)).collect())
    }

    fn bit_decompose(&mut self, a: &Vec<u64>) -> Result<Vec<Vec<u64>>> {
        Ok((0..64).map(|i| a.iter().map(|x| (x >> i) & 1).collect()).collect())
    }

    fn fp_mul(&mut self, a: &Vec<u64>, b: &Vec<u64>) -> Result<Vec<u64>> {
        check_len(a.len(), b.len())?;
        Ok(a.iter().zip(b).map(|(x, y)| ring_fp_mul(*x, *y)).collect())
    }

    fn fp_mul_public(&mut self, a: &Vec<u64>, k: &[u64]) -> Result<Vec<u64>> {
        check_public(a.len(), k)?;
        Ok(a.iter().enumerate().map(|(i, x)| ring_fp_mul(*x, public_at(k, i))).collect())
    }
}

/// Counts backend calls; used to check that costs depend on shapes only.
#[derive(Clone, Debug, Default)]
pub struct CountingBackend {
    pub ring_muls: u64,
    pub decompositions: u64,
    pub elements_multiplied: u64,
}

impl RingBackend for CountingBackend {
    type Value = Vec<u64>;

    fn len(&self, v: &Vec<u64>) -> usize {
        v.len()
    }
    fn constant(&mut self, c: &[u64]) -> Vec<u64> {
        PlainBackend.constant(c)
    }
    fn add(&mut self, a: &Vec<u64>, b: &Vec<u64>) -> Result<Vec<u64>> {
        PlainBackend.add(a, b)
    }
    fn sub(&mut self, a: &Vec<u64>, b: &Vec<u64>) -> Result<Vec<u64>> {
        PlainBackend.sub(a, b)
    }
    fn add_public(&mut self, a: &Vec<u64>, c: &[u64]) -> Result<Vec<u64>> {
        PlainBackend.add_public(a, c)
    }
    fn mul_public(&mut self, a: &Vec<u64>, c: &[u64]) -> Result<Vec<u64>> {
        PlainBackend.mul_public(a, c)
    }
    fn gather(&mut self, a: &Vec<u64>, idx: &[usize]) -> Result<Vec<u64>> {
        PlainBackend.gather(a, idx)
    }
    fn concat(&mut self, parts: &[&Vec<u64>]) -> Vec<u64> {
        PlainBackend.concat(parts)
    }
    fn slice(&mut self, a: &Vec<u64>, range: Range<usize>) -> Vec<u64> {
        PlainBackend.slice(a, range)
    }
    fn sum_groups(&mut self, a: &Vec<u64>, group: usize) -> Result<Vec<u64>> {
        PlainBackend.sum_groups(a, group)
    }
    fn ring_mul(&mut self, a: &Vec<u64>, b: &Vec<u64>) -> Result<Vec<u64>> {
        self.ring_muls += 1;
        self.elements_multiplied += a.len() as u64;
        PlainBackend.ring_mul(a, b)
    }
    fn bit_decompose(&mut self, a: &Vec<u64>) -> Result<Vec<Vec<u64>>> {
        self.decompositions += 1;
        PlainBackend.bit_decompose(a)
    }
}
