//! Scalar backends and combinatorial primitives.

mod rational;
mod signed_log;

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use rational::{parse_rational, ExactRational};
pub use signed_log::{stable_sum, SignedLogReal, StableSum};

/// Neumaier-compensated running sum of doubles.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Which scalar backend produced a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ScalarMode {
    Exact,
    #[serde(rename = "logfloat")]
    LogFloat { precision_bits: u32 },
}

impl ScalarMode {
    pub const LOG_FLOAT: ScalarMode = ScalarMode::LogFloat {
        precision_bits: SignedLogReal::PRECISION_BITS,
    };

    /// Only the native double mantissa is available for the log backend.
    pub fn validate(self) -> Result<Self> {
        match self {
            ScalarMode::LogFloat { precision_bits } if precision_bits != SignedLogReal::PRECISION_BITS => {
                Err(Error::config(
                    "mode",
                    format!(
                        "log-domain precision of {precision_bits} bits is not supported; only {} is available",
                        SignedLogReal::PRECISION_BITS
                    ),
                ))
            }
            m => Ok(m),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarMode::Exact => "exact",
            ScalarMode::LogFloat { .. } => "logfloat",
        }
    }
}

impl fmt::Display for ScalarMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarMode::Exact => write!(f, "exact"),
            ScalarMode::LogFloat { precision_bits } => write!(f, "logfloat({precision_bits})"),
        }
    }
}

impl FromStr for ScalarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(ScalarMode::Exact),
            "logfloat" | "log" => Ok(ScalarMode::LOG_FLOAT),
            other => {
                let bits = other
                    .strip_prefix("logfloat(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|b| b.parse::<u32>().ok())
                    .ok_or_else(|| Error::config("mode", format!("unknown scalar mode `{s}`")))?;
                ScalarMode::LogFloat { precision_bits: bits }.validate()
            }
        }
    }
}

/// Arithmetic shared by the exact and log-domain backends.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Send
    + Sync
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn mode() -> ScalarMode;
    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(r: &ExactRational) -> Self;
    fn from_biguint(n: &BigUint) -> Self;
    fn from_i64(n: i64) -> Self;
    /// `numer / denom` without requiring lowest terms.
    fn from_big_fraction(numer: &BigInt, denom: &BigUint) -> Self;
    fn pow(&self, exponent: u64) -> Self;
    /// Sum of many terms; the log backend routes through [`stable_sum`].
    fn sum(terms: Vec<Self>) -> Self;
    fn is_zero(&self) -> bool;
    fn signum(&self) -> i8;
    fn abs(&self) -> Self;
    fn to_f64(&self) -> f64;
    fn to_log(&self) -> SignedLogReal;
}

impl Scalar for ExactRational {
    fn mode() -> ScalarMode {
        ScalarMode::Exact
    }
    fn zero() -> Self {
        <ExactRational as Zero>::zero()
    }
    fn one() -> Self {
        <ExactRational as One>::one()
    }
    fn from_rational(r: &ExactRational) -> Self {
        r.clone()
    }
    fn from_biguint(n: &BigUint) -> Self {
        ExactRational::from(n.clone())
    }
    fn from_i64(n: i64) -> Self {
        ExactRational::from(n)
    }
    fn from_big_fraction(numer: &BigInt, denom: &BigUint) -> Self {
        ExactRational::new(numer.clone(), BigInt::from(denom.clone()))
    }
    fn pow(&self, exponent: u64) -> Self {
        ExactRational::pow(self, exponent)
    }
    fn sum(terms: Vec<Self>) -> Self {
        terms.into_iter().fold(<ExactRational as Zero>::zero(), |a, b| a + b)
    }
    fn is_zero(&self) -> bool {
        ExactRational::is_zero(self)
    }
    fn signum(&self) -> i8 {
        ExactRational::signum(self)
    }
    fn abs(&self) -> Self {
        ExactRational::abs(self)
    }
    fn to_f64(&self) -> f64 {
        ExactRational::to_f64(self)
    }
    fn to_log(&self) -> SignedLogReal {
        ExactRational::to_log(self)
    }
}

impl Scalar for SignedLogReal {
    fn mode() -> ScalarMode {
        ScalarMode::LOG_FLOAT
    }
    fn zero() -> Self {
        SignedLogReal::ZERO
    }
    fn one() -> Self {
        SignedLogReal::ONE
    }
    fn from_rational(r: &ExactRational) -> Self {
        r.to_log()
    }
    fn from_biguint(n: &BigUint) -> Self {
        if n.is_zero() {
            SignedLogReal::ZERO
        } else {
            SignedLogReal::from_ln(ln_biguint(n))
        }
    }
    fn from_i64(n: i64) -> Self {
        SignedLogReal::from_f64(n as f64)
    }
    fn from_big_fraction(numer: &BigInt, denom: &BigUint) -> Self {
        let sign = match numer.sign() {
            Sign::Minus => -1,
            Sign::NoSign => return SignedLogReal::ZERO,
            Sign::Plus => 1,
        };
        SignedLogReal::new(sign, ln_biguint(numer.magnitude()) - ln_biguint(denom))
    }
    fn pow(&self, exponent: u64) -> Self {
        if exponent == 0 {
            return SignedLogReal::ONE;
        }
        if self.is_zero() {
            return SignedLogReal::ZERO;
        }
        let sign = if self.sign() < 0 && exponent % 2 == 1 { -1 } else { 1 };
        SignedLogReal::new(sign, self.log_mag() * exponent as f64)
    }
    fn sum(terms: Vec<Self>) -> Self {
        stable_sum(&terms).value
    }
    fn is_zero(&self) -> bool {
        SignedLogReal::is_zero(*self)
    }
    fn signum(&self) -> i8 {
        self.sign()
    }
    fn abs(&self) -> Self {
        SignedLogReal::abs(*self)
    }
    fn to_f64(&self) -> f64 {
        SignedLogReal::to_f64(*self)
    }
    fn to_log(&self) -> SignedLogReal {
        *self
    }
}

/// Natural log of a positive big integer, from its top 64 bits.
pub fn ln_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 64 {
        return n.to_u64().expect("fits in u64").to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    let top = (n >> shift).to_u64().expect("fits in u64") as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// The exact binomial coefficient C(n, k); zero when k > n.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 1..=k {
        acc *= n - k + i;
        acc /= i;
    }
    acc
}

/// C(n, 0), ..., C(n, n).
pub fn binomial_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for k in 1..=n {
        c = c * (n - k + 1) / k;
        row.push(c.clone());
    }
    row
}

/// ln C(n, k).
pub fn log_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain(format!("binomial C({n}, {k}) needs k <= n")));
    }
    let m = k.min(n - k);
    let acc: CompensatedSum = (1..=m).map(|i| ((n - m + i) as f64 / i as f64).ln()).collect();
    Ok(acc.value())
}

/// ln C(n, k) for every k, built once per n.
#[derive(Clone, Debug)]
pub struct LogBinomialTable {
    n: u64,
    half: Vec<f64>,
}

impl LogBinomialTable {
    pub fn new(n: u64) -> Self {
        let m = n / 2;
        let mut half = Vec::with_capacity(m as usize + 1);
        let mut acc = CompensatedSum::default();
        half.push(0.0);
        for i in 1..=m {
            acc.add(((n - i + 1) as f64 / i as f64).ln());
            half.push(acc.value());
        }
        LogBinomialTable { n, half }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn get(&self, k: u64) -> f64 {
        assert!(k <= self.n, "binomial index {k} exceeds {}", self.n);
        self.half[k.min(self.n - k) as usize]
    }
}
