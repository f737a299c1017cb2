//! Fixed-point decimals used for heights and masses.
//!
//! Values are stored as an `i128` count of `10^-12` units. Addition, negation
//! and comparison are exact, which makes canonical hashing and the algebraic
//! identities of the semigroup calculus hold bit-for-bit. Multiplication and
//! conversion from `f64` round half away from zero at the last digit.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Number of fractional decimal digits carried by [`Dec`].
pub const FRACTION_DIGITS: u32 = 12;

const SCALE: i128 = 1_000_000_000_000;

/// Exact decimal with [`FRACTION_DIGITS`] fractional digits.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dec(i128);

impl Dec {
    pub const ZERO: Dec = Dec(0);
    pub const ONE: Dec = Dec(SCALE);

    pub const fn from_units(units: i128) -> Dec {
        Dec(units)
    }

    /// Raw count of `10^-12` units.
    pub const fn units(self) -> i128 {
        self.0
    }

    pub fn from_int(v: i64) -> Dec {
        Dec(v as i128 * SCALE)
    }

    /// Quantizes a float to the full precision.
    pub fn from_f64(v: f64) -> Result<Dec> {
        Dec::from_f64_digits(v, FRACTION_DIGITS)
    }

    /// Quantizes a float to `digits` fractional digits (at most 12).
    pub fn from_f64_digits(v: f64, digits: u32) -> Result<Dec> {
        if !v.is_finite() {
            return Err(Error::Decimal(format!("non-finite value {v}")));
        }
        let digits = digits.min(FRACTION_DIGITS);
        // Going through the decimal rendering keeps the rounding faithful to
        // the shortest text form of `v`.
        let text = format!("{:.*}", digits as usize, v);
        text.parse()
    }

    pub fn to_f64(self) -> f64 {
        let int = self.0 / SCALE;
        let frac = self.0 % SCALE;
        int as f64 + frac as f64 / SCALE as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn abs(self) -> Dec {
        Dec(self.0.abs())
    }

    pub fn min(self, other: Dec) -> Dec {
        std::cmp::min(self, other)
    }

    pub fn max(self, other: Dec) -> Dec {
        std::cmp::max(self, other)
    }

    /// Rounded product.
    pub fn checked_mul(self, other: Dec) -> Option<Dec> {
        let p = self.0.checked_mul(other.0)?;
        Some(Dec(div_round(p, SCALE)))
    }

    pub fn mul_int(self, k: i64) -> Dec {
        Dec(self.0 * k as i128)
    }

    /// Twice the value; heights of concatenation nodes are `2h`.
    pub fn double(self) -> Dec {
        Dec(self.0 * 2)
    }

    /// Half the value, rounded; exact whenever the last unit is even.
    pub fn half(self) -> Dec {
        Dec(div_round(self.0, 2))
    }

    /// Rounds to `digits` fractional digits.
    pub fn round_to(self, digits: u32) -> Dec {
        if digits >= FRACTION_DIGITS {
            return self;
        }
        let step = 10i128.pow(FRACTION_DIGITS - digits);
        Dec(div_round(self.0, step) * step)
    }
}

fn div_round(n: i128, d: i128) -> i128 {
    let q = n / d;
    let r = n % d;
    if 2 * r.abs() >= d.abs() {
        if (n < 0) != (d < 0) {
            q - 1
        } else {
            q + 1
        }
    } else {
        q
    }
}

impl Add for Dec {
    type Output = Dec;
    fn add(self, rhs: Dec) -> Dec {
        Dec(self.0 + rhs.0)
    }
}

impl AddAssign for Dec {
    fn add_assign(&mut self, rhs: Dec) {
        self.0 += rhs.0;
    }
}

impl Sub for Dec {
    type Output = Dec;
    fn sub(self, rhs: Dec) -> Dec {
        Dec(self.0 - rhs.0)
    }
}

impl SubAssign for Dec {
    fn sub_assign(&mut self, rhs: Dec) {
        self.0 -= rhs.0;
    }
}

impl Neg for Dec {
    type Output = Dec;
    fn neg(self) -> Dec {
        Dec(-self.0)
    }
}

impl Sum for Dec {
    fn sum<I: Iterator<Item = Dec>>(iter: I) -> Dec {
        iter.fold(Dec::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Dec> for Dec {
    fn sum<I: Iterator<Item = &'a Dec>>(iter: I) -> Dec {
        iter.copied().sum()
    }
}

impl fmt::Display for Dec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        let int = a / SCALE as u128;
        let frac = a % SCALE as u128;
        if frac == 0 {
            write!(f, "{sign}{int}")
        } else {
            let digits = format!("{:012}", frac);
            write!(f, "{sign}{int}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl fmt::Debug for Dec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Dec {
    type Err = Error;

    /// Parses plain or scientific decimal text; digits beyond the twelfth
    /// fractional place are rounded.
    fn from_str(s: &str) -> Result<Dec> {
        let bad = || Error::Decimal(format!("cannot parse decimal {s:?}"));
        let s = s.trim();
        let (mantissa, exp) = match s.find(['e', 'E']) {
            Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (neg, body) = match mantissa.as_bytes().first() {
            Some(b'-') => (true, &mantissa[1..]),
            Some(b'+') => (false, &mantissa[1..]),
            _ => (false, mantissa),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes()).map(|b| b - b'0').collect();
        // position of the decimal point counted from the left of `digits`
        let mut point = int_part.len() as i64 + exp as i64;
        while point < 0 {
            digits.insert(0, 0);
            point += 1;
        }
        while (digits.len() as i64) < point {
            digits.push(0);
        }
        let point = point as usize;
        let keep = point + FRACTION_DIGITS as usize;
        let mut units: i128 = 0;
        for i in 0..keep {
            let d = digits.get(i).copied().unwrap_or(0) as i128;
            units = units
                .checked_mul(10)
                .and_then(|u| u.checked_add(d))
                .ok_or_else(|| Error::Decimal(format!("decimal {s:?} out of range")))?;
        }
        if digits.get(keep).is_some_and(|&d| d >= 5) {
            units += 1;
        }
        Ok(Dec(if neg { -units } else { units }))
    }
}
