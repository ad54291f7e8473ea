use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::CompensatedSum;

/// A real number stored as a sign and a natural-log magnitude.
///
/// Products and powers never overflow; magnitudes such as `C(N,n) (p/q)^n`
/// for `N` in the tens of thousands are representable. `sign == 0` is exact
/// zero and `log_mag` is then ignored (kept at `-inf`).
#[derive(Clone, Copy)]
pub struct SignedLogReal {
    sign: i8,
    log_mag: f64,
}

impl SignedLogReal {
    pub const ZERO: SignedLogReal = SignedLogReal {
        sign: 0,
        log_mag: f64::NEG_INFINITY,
    };
    pub const ONE: SignedLogReal = SignedLogReal {
        sign: 1,
        log_mag: 0.0,
    };

    /// Mantissa width of the stored log magnitude.
    pub const PRECISION_BITS: u32 = f64::MANTISSA_DIGITS;

    pub fn new(sign: i8, log_mag: f64) -> Self {
        if sign == 0 || log_mag == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        debug_assert!(!log_mag.is_nan(), "NaN log magnitude");
        SignedLogReal {
            sign: sign.signum(),
            log_mag,
        }
    }

    /// The positive number `exp(ln)`.
    pub fn from_ln(ln: f64) -> Self {
        Self::new(1, ln)
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self::new(if x > 0.0 { 1 } else { -1 }, x.abs().ln())
        }
    }

    pub fn to_f64(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * self.log_mag.exp(),
        }
    }

    pub fn sign(self) -> i8 {
        self.sign
    }

    /// Natural log of the magnitude; `-inf` for zero.
    pub fn log_mag(self) -> f64 {
        if self.sign == 0 {
            f64::NEG_INFINITY
        } else {
            self.log_mag
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    pub fn abs(self) -> Self {
        Self::new(self.sign.abs(), self.log_mag)
    }

    pub fn recip(self) -> Self {
        assert!(self.sign != 0, "reciprocal of zero");
        Self::new(self.sign, -self.log_mag)
    }

    pub fn powi(self, exponent: i64) -> Self {
        if exponent == 0 {
            return Self::ONE;
        }
        if self.sign == 0 {
            assert!(exponent > 0, "negative power of zero");
            return Self::ZERO;
        }
        let sign = if self.sign < 0 && exponent % 2 != 0 { -1 } else { 1 };
        Self::new(sign, self.log_mag * exponent as f64)
    }

    pub fn sqrt(self) -> Self {
        assert!(self.sign >= 0, "square root of a negative value");
        Self::new(self.sign, 0.5 * self.log_mag)
    }

    fn add_impl(self, rhs: Self) -> Self {
        if self.sign == 0 {
            return rhs;
        }
        if rhs.sign == 0 {
            return self;
        }
        let (big, small) = if self.log_mag >= rhs.log_mag {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let d = small.log_mag - big.log_mag;
        if big.sign == small.sign {
            Self::new(big.sign, big.log_mag + d.exp().ln_1p())
        } else if d == 0.0 {
            Self::ZERO
        } else {
            Self::new(big.sign, big.log_mag + log1m_exp(d))
        }
    }
}

/// `ln(1 - e^d)` for `d < 0`, accurate on both sides of `-ln 2`.
pub(crate) fn log1m_exp(d: f64) -> f64 {
    debug_assert!(d < 0.0);
    if d > -std::f64::consts::LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

impl Default for SignedLogReal {
    fn default() -> Self {
        Self::ZERO
    }
}

impl PartialEq for SignedLogReal {
    fn eq(&self, other: &Self) -> bool {
        self.sign == other.sign && (self.sign == 0 || self.log_mag == other.log_mag)
    }
}

impl PartialOrd for SignedLogReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                0 => Some(Ordering::Equal),
                1 => self.log_mag.partial_cmp(&other.log_mag),
                _ => other.log_mag.partial_cmp(&self.log_mag),
            },
            ord => Some(ord),
        }
    }
}

impl fmt::Debug for SignedLogReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            0 => write!(f, "0"),
            1 => write!(f, "+exp({})", self.log_mag),
            _ => write!(f, "-exp({})", self.log_mag),
        }
    }
}

impl fmt::Display for SignedLogReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_f64();
        if v != 0.0 && v.is_finite() || self.sign == 0 {
            write!(f, "{v}")
        } else {
            let sign = if self.sign < 0 { "-" } else { "" };
            write!(f, "{sign}exp({})", self.log_mag)
        }
    }
}

impl Neg for SignedLogReal {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.sign, self.log_mag)
    }
}

impl Add for SignedLogReal {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.add_impl(rhs)
    }
}

impl Sub for SignedLogReal {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.add_impl(-rhs)
    }
}

impl Mul for SignedLogReal {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        if self.sign == 0 || rhs.sign == 0 {
            return Self::ZERO;
        }
        Self::new(self.sign * rhs.sign, self.log_mag + rhs.log_mag)
    }
}

impl Div for SignedLogReal {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        assert!(rhs.sign != 0, "division by zero");
        Self::new(self.sign * rhs.sign, self.log_mag - rhs.log_mag)
    }
}

/// Result of [`stable_sum`]: the value plus an estimate of how much
/// cancellation it went through.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableSum {
    pub value: SignedLogReal,
    /// `sum |terms| / |sum terms|`; `inf` for a cancellation to exact zero
    /// of nonzero terms, `1` for an empty or all-zero input.
    pub condition: f64,
}

impl StableSum {
    /// Condition numbers above this are flagged as having lost accuracy.
    pub const CONDITION_LIMIT: f64 = 1e6;

    pub fn is_well_conditioned(&self) -> bool {
        self.condition <= Self::CONDITION_LIMIT
    }

    /// First-order bound on the relative error of `value` with respect to
    /// the exact sum of the represented terms.
    pub fn relative_error_bound(&self) -> f64 {
        4.0 * f64::EPSILON * self.condition.max(1.0)
    }
}

/// Sums signed log-domain terms. Like-signed addends are accumulated in
/// ascending magnitude with a compensated exponential sum; the positive and
/// negative groups are merged only at the end.
pub fn stable_sum(terms: &[SignedLogReal]) -> StableSum {
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for t in terms {
        match t.sign {
            1 => pos.push(t.log_mag),
            -1 => neg.push(t.log_mag),
            _ => {}
        }
    }
    let lp = log_sum_exp_sorted(&mut pos);
    let ln = log_sum_exp_sorted(&mut neg);
    let p = SignedLogReal::from_ln(lp);
    let m = SignedLogReal::from_ln(ln);
    let value = p - m;
    let total = p + m;
    let condition = if total.is_zero() {
        1.0
    } else if value.is_zero() {
        f64::INFINITY
    } else {
        (total.log_mag - value.log_mag).exp()
    };
    StableSum { value, condition }
}

/// `ln(sum exp(l_i))`, `-inf` for an empty slice. Sorts in place.
fn log_sum_exp_sorted(logs: &mut [f64]) -> f64 {
    if logs.is_empty() {
        return f64::NEG_INFINITY;
    }
    logs.sort_by(|a, b| a.total_cmp(b));
    let max = logs[logs.len() - 1];
    let mut acc = CompensatedSum::default();
    for &l in logs.iter() {
        acc.add((l - max).exp());
    }
    max + acc.value().ln()
}
