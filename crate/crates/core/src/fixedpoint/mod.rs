//! Fixed-point numbers over the 64-bit two's-complement ring at scale 2^32.
//!
//! A [`FixedPoint`] stores `trunc(x * 2^32)` in an `i64`. All arithmetic wraps
//! modulo 2^64 so that plaintext results are bit-identical to the same circuit
//! evaluated over additive secret shares (see [`circuit`]).
//!
//! The scalar helpers [`fp_div`], [`fp_exp`] and [`fp_inv_sqrt`] evaluate the
//! generic circuits on the plaintext backend, so the shared versions in the MPC
//! engine produce exactly the same bits.

pub mod circuit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use circuit::PlainBackend;

/// Number of fractional bits.
pub const FRAC_BITS: u32 = 32;
/// `2^32` as a float.
pub const SCALE: f64 = 4_294_967_296.0;
/// Exclusive bound on the magnitude of representable reals.
pub const MAX_ABS: f64 = 2_147_483_648.0;

/// Default limit-approximation depth for [`fp_exp`].
///
/// Nine squarings only reach `exp(1)` to about 2.6e-3, so the default is
/// deeper; the value stays configurable everywhere it is used.
pub const DEFAULT_EXP_SQUARINGS: u32 = 18;
/// Default Newton iterations for [`fp_inv_sqrt`].
pub const DEFAULT_INV_SQRT_ITERATIONS: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedPointError {
    #[error("value {0} outside the representable range (-2^31, 2^31)")]
    Range(f64),
    #[error("fixed-point product {0} overflows the representable range")]
    Overflow(f64),
    #[error("argument {0} outside the domain of the operation")]
    Domain(f64),
    #[error("shape {shape:?} holds {expected} elements but {actual} were given")]
    Shape { shape: Vec<usize>, expected: usize, actual: usize },
    #[error("invalid fixed-point configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, FixedPointError>;

/// A real number `raw / 2^32` in the 64-bit ring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixedPoint(i64);

impl FixedPoint {
    pub const ZERO: FixedPoint = FixedPoint(0);
    pub const ONE: FixedPoint = FixedPoint(1 << FRAC_BITS);

    pub const fn from_raw(raw: i64) -> Self {
        FixedPoint(raw)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    /// The ring element carrying this value.
    pub const fn to_ring(self) -> u64 {
        self.0 as u64
    }

    pub const fn from_ring(r: u64) -> Self {
        FixedPoint(r as i64)
    }

    /// `trunc(x * 2^32)`, rejecting values outside `(-2^31, 2^31)`.
    pub fn encode(x: f64) -> Result<Self> {
        if !x.is_finite() || x.abs() >= MAX_ABS {
            return Err(FixedPointError::Range(x));
        }
        Ok(FixedPoint((x * SCALE).trunc() as i64))
    }

    /// Like [`encode`](Self::encode) but clamps out-of-range values to the
    /// nearest representable one. NaN maps to zero.
    pub fn encode_saturating(x: f64) -> Self {
        if x.is_nan() {
            return FixedPoint::ZERO;
        }
        // `as` saturates at the i64 bounds; keep clear of i64::MIN.
        let raw = (x * SCALE).trunc() as i64;
        FixedPoint(raw.max(-i64::MAX))
    }

    pub fn decode(self) -> f64 {
        self.0 as f64 / SCALE
    }

    pub fn wrapping_add(self, rhs: Self) -> Self {
        FixedPoint(self.0.wrapping_add(rhs.0))
    }

    pub fn wrapping_sub(self, rhs: Self) -> Self {
        FixedPoint(self.0.wrapping_sub(rhs.0))
    }

    pub fn wrapping_neg(self) -> Self {
        FixedPoint(self.0.wrapping_neg())
    }

    /// The split integer/fraction product, evaluated in the ring.
    ///
    /// Each operand is made nonnegative with its sign, split into
    /// `int = |a| >> 32` and `frac = |a| mod 2^32`, and recombined as
    /// `s_a s_b (a_int b_int 2^32 + a_int b_frac + a_frac b_int + (a_frac b_frac >> 32))`.
    /// For in-range products this is `trunc(a * b)` exactly; out of range it
    /// wraps the same way the shared protocol does.
    pub fn wrapping_mul(self, rhs: Self) -> Self {
        FixedPoint::from_ring(ring_fp_mul(self.to_ring(), rhs.to_ring()))
    }

    /// Exact `trunc(a * b)` with overflow detection.
    pub fn checked_mul(self, rhs: Self) -> Result<Self> {
        let p = (self.0 as i128 * rhs.0 as i128) / (1i128 << FRAC_BITS);
        if p <= -(i64::MAX as i128) - 1 || p > i64::MAX as i128 {
            return Err(FixedPointError::Overflow(self.decode() * rhs.decode()));
        }
        Ok(FixedPoint(p as i64))
    }
}

/// Sign of a ring value as a ring multiplier: `1` or `2^64 - 1`.
#[inline]
pub(crate) fn ring_sign(a: u64) -> u64 {
    if a >> 63 == 1 {
        u64::MAX
    } else {
        1
    }
}

/// Ring-level fixed-point product; see [`FixedPoint::wrapping_mul`].
#[inline]
pub fn ring_fp_mul(a: u64, b: u64) -> u64 {
    const LOW: u64 = (1 << FRAC_BITS) - 1;
    let (sa, sb) = (ring_sign(a), ring_sign(b));
    let (aa, ba) = (a.wrapping_mul(sa), b.wrapping_mul(sb));
    let (ai, af) = (aa >> FRAC_BITS, aa & LOW);
    let (bi, bf) = (ba >> FRAC_BITS, ba & LOW);
    let c = (ai.wrapping_mul(bi) << FRAC_BITS)
        .wrapping_add(ai.wrapping_mul(bf))
        .wrapping_add(af.wrapping_mul(bi))
        .wrapping_add(af.wrapping_mul(bf) >> FRAC_BITS);
    c.wrapping_mul(sa.wrapping_mul(sb))
}

/// Reciprocal initial guess used by [`fp_div`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    /// `q0 = 3 exp(1 - 2b) + 0.003`, then an explicit `b > 0` mask.
    ///
    /// Converges for `b` in about `[2^-9, 600]`.
    #[default]
    PaperFormula,
    /// Normalize `b` into `[0.5, 1)` by its leading bit, seed with
    /// `2.9142 - 2m`, rescale. Verified on `[2^-29, 2^31)`.
    AffineFallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivConfig {
    pub iterations: u32,
    pub initial_guess_mode: InitialGuess,
    /// Squarings for the exponential inside the paper-formula seed.
    pub exp_squarings: u32,
}

impl Default for DivConfig {
    fn default() -> Self {
        DivConfig {
            iterations: 10,
            initial_guess_mode: InitialGuess::PaperFormula,
            exp_squarings: DEFAULT_EXP_SQUARINGS,
        }
    }
}

impl DivConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(FixedPointError::Config("division needs at least one iteration".into()));
        }
        if self.exp_squarings == 0 || self.exp_squarings > 31 {
            return Err(FixedPointError::Config(format!(
                "exp_squarings must be in 1..=31, got {}",
                self.exp_squarings
            )));
        }
        Ok(())
    }
}

/// Row-major tensor of fixed-point values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FpTensor {
    shape: Vec<usize>,
    data: Vec<FixedPoint>,
}

impl FpTensor {
    pub fn new(shape: Vec<usize>, data: Vec<FixedPoint>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(FixedPointError::Shape { shape, expected, actual: data.len() });
        }
        Ok(FpTensor { shape, data })
    }

    pub fn scalar(x: FixedPoint) -> Self {
        FpTensor { shape: vec![], data: vec![x] }
    }

    pub fn encode(shape: Vec<usize>, xs: &[f64]) -> Result<Self> {
        let data = xs.iter().map(|&x| FixedPoint::encode(x)).collect::<Result<Vec<_>>>()?;
        FpTensor::new(shape, data)
    }

    pub fn from_ring(shape: Vec<usize>, ring: &[u64]) -> Result<Self> {
        FpTensor::new(shape, ring.iter().map(|&r| FixedPoint::from_ring(r)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[FixedPoint] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_ring(&self) -> Vec<u64> {
        self.data.iter().map(|x| x.to_ring()).collect()
    }

    pub fn decode(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.decode()).collect()
    }
}

/// Algorithm-2 product with overflow detection.
pub fn fp_mul(a: FixedPoint, b: FixedPoint) -> Result<FixedPoint> {
    a.checked_mul(b)?;
    Ok(a.wrapping_mul(b))
}

/// Newton-Raphson quotient `a / b`.
///
/// Returns exactly zero for `b <= 0`; the trainer relies on its renormalizer
/// so that this never happens silently.
pub fn fp_div(a: FixedPoint, b: FixedPoint, cfg: &DivConfig) -> Result<FixedPoint> {
    cfg.validate()?;
    if b.raw() > 0 && (a.decode() / b.decode()).abs() >= MAX_ABS {
        return Err(FixedPointError::Range(a.decode() / b.decode()));
    }
    let mut be = PlainBackend;
    let q = circuit::div(&mut be, &vec![a.to_ring()], &vec![b.to_ring()], cfg).expect("plaintext circuits are infallible");
    Ok(FixedPoint::from_ring(q[0]))
}

/// Limit approximation `(1 + x/2^n)^(2^n)`.
pub fn fp_exp(x: FixedPoint, n_squarings: u32) -> Result<FixedPoint> {
    if n_squarings == 0 || n_squarings > 31 {
        return Err(FixedPointError::Config(format!("n_squarings must be in 1..=31, got {n_squarings}")));
    }
    // ln(2^31) ~ 21.49; the approximation stays below e^x, but the
    // intermediate powers must fit as well.
    if x.decode() >= 21.4 {
        return Err(FixedPointError::Range(x.decode().exp()));
    }
    let mut be = PlainBackend;
    let y = circuit::exp(&mut be, &vec![x.to_ring()], n_squarings).expect("plaintext circuits are infallible");
    Ok(FixedPoint::from_ring(y[0]))
}

/// Newton iteration for `x^(-1/2)`, verified on `[2^-20, 2^30]`.
pub fn fp_inv_sqrt(x: FixedPoint, iterations: u32) -> Result<FixedPoint> {
    if x.raw() <= 0 {
        return Err(FixedPointError::Domain(x.decode()));
    }
    if iterations == 0 {
        return Err(FixedPointError::Config("inverse square root needs at least one iteration".into()));
    }
    let mut be = PlainBackend;
    let y = circuit::inv_sqrt(&mut be, &vec![x.to_ring()], iterations).expect("plaintext circuits are infallible");
    Ok(FixedPoint::from_ring(y[0]))
}
