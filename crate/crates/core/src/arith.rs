//! Odd-integer arithmetic and the single-step map shared by the classical
//! and randomized chains.
//!
//! A step takes an odd state `x` and an odd noise value `xi >= -1` to
//! `(3x + xi) / 2^d`, where `2^d` is the highest power of two dividing
//! `3x + xi`. Since `3x + xi` is a sum of two odd numbers it is always even,
//! so `d >= 1` and the next state is again a positive odd integer.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::Error;

const LN_2: f64 = std::f64::consts::LN_2;

/// A positive odd arbitrary-precision integer: the chain's state.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OddInt(BigUint);

impl OddInt {
    /// Wraps `value`, rejecting zero and even numbers.
    pub fn new(value: BigUint) -> Result<Self, Error> {
        if value.is_zero() {
            return Err(Error::InvalidState("state must be >= 1".into()));
        }
        if !value.bit(0) {
            return Err(Error::InvalidState(format!("state {value} is even")));
        }
        Ok(OddInt(value))
    }

    pub fn from_u64(value: u64) -> Result<Self, Error> {
        Self::new(BigUint::from(value))
    }

    pub fn one() -> Self {
        OddInt(BigUint::one())
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn into_value(self) -> BigUint {
        self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    /// Bit length of the state.
    pub fn bits(&self) -> u64 {
        self.0.bits()
    }

    /// The state as `u64`, if it fits.
    pub fn to_u64(&self) -> Option<u64> {
        self.0.to_u64()
    }

    /// Natural log of the state, accurate to ~1e-12 relative.
    ///
    /// States are compared and stored exactly; the log is only used for
    /// drift and excursion statistics, where double precision suffices.
    pub fn ln(&self) -> f64 {
        ln_biguint(&self.0)
    }

    /// In-place transition `x <- (3x + xi) / 2^d`; returns `(d, m)` with
    /// `m = min(3, d)`.
    ///
    /// This is the simulator's hot loop: one scalar multiply-add, a
    /// trailing-zero count, and a shift, all without reallocating when the
    /// state's capacity suffices.
    pub fn apply_step(&mut self, xi: i64) -> Result<(u64, u8), Error> {
        validate_xi(xi)?;
        self.0 *= 3u32;
        if xi >= 0 {
            self.0 += xi as u64;
        } else {
            // xi = -1 and 3x >= 3, so the state stays >= 2 here.
            self.0 -= 1u32;
        }
        // odd + odd is even, so at least one trailing zero.
        let d = self
            .0
            .trailing_zeros()
            .expect("3x + xi is nonzero for odd x >= 1, xi >= -1");
        debug_assert!(d >= 1);
        self.0 >>= d;
        Ok((d, min3(d)))
    }
}

impl fmt::Display for OddInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for OddInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OddInt({})", self.0)
    }
}

impl FromStr for OddInt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let v = BigUint::from_str(s)
            .map_err(|e| Error::InvalidState(format!("not a decimal integer: {e}")))?;
        OddInt::new(v)
    }
}

/// One transition record: the noise drawn, the exponent removed, the capped
/// exponent `m = min(3, d)`, and the resulting state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub xi: i64,
    pub d: u64,
    pub m: u8,
    pub x_next: OddInt,
}

fn min3(d: u64) -> u8 {
    if d >= 3 {
        3
    } else {
        d as u8
    }
}

fn validate_xi(xi: i64) -> Result<(), Error> {
    if xi < -1 {
        return Err(Error::InvalidXi(format!("xi = {xi} is < -1")));
    }
    if xi.rem_euclid(2) == 0 {
        return Err(Error::InvalidXi(format!("xi = {xi} is even")));
    }
    Ok(())
}

/// 2-adic valuation of a positive even integer: the exponent of the highest
/// power of two dividing `n`.
///
/// Counts trailing zeros of the binary representation rather than dividing.
pub fn v2(n: &BigUint) -> Result<u64, Error> {
    if n.is_zero() {
        return Err(Error::InvalidValuationInput("v2(0) is undefined".into()));
    }
    let d = n.trailing_zeros().expect("nonzero");
    if d == 0 {
        return Err(Error::InvalidValuationInput(format!("{n} is odd")));
    }
    Ok(d)
}

/// One randomized transition from `x` with noise `xi`.
pub fn step(x: &OddInt, xi: i64) -> Result<StepOutcome, Error> {
    let mut next = x.clone();
    let (d, m) = next.apply_step(xi)?;
    Ok(StepOutcome {
        xi,
        d,
        m,
        x_next: next,
    })
}

/// One classical transition `x -> (3x + 1) / 2^d`.
pub fn classical_step(x: &OddInt) -> StepOutcome {
    step(x, 1).expect("xi = 1 is always valid")
}

/// Natural log of a positive big integer via the top 53 bits plus the shift.
pub fn ln_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 64 {
        return (n.to_u64().expect("fits") as f64).ln();
    }
    let shift = bits - 53;
    let top = (n >> shift).to_f64().expect("53-bit value");
    top.ln() + shift as f64 * LN_2
}
