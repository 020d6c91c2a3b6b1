//! Exact integer money.
//!
//! Amounts enter as whole satoshis and are immediately scaled to quanta
//! (10⁻⁴ satoshi) so that proportional splits and the dust threshold can be
//! expressed without floating point. Total supply is 2.1×10¹⁹ quanta, which
//! exceeds `i64`, so the representation is `i128`.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigUint;
use thiserror::Error;

/// Number of quanta in one satoshi.
pub const QUANTA_PER_SATOSHI: i128 = 10_000;
/// Number of satoshis in one bitcoin.
pub const SATOSHI_PER_BTC: i128 = 100_000_000;

/// Default dust threshold: 0.0001 BTC = 10⁴ satoshi.
pub const DEFAULT_DUST_THRESHOLD: Quanta = Quanta(10_000 * QUANTA_PER_SATOSHI);

/// A signed amount of money in quanta (10⁻⁴ satoshi).
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quanta(pub i128);

impl Quanta {
    pub const ZERO: Quanta = Quanta(0);

    pub const fn from_satoshi(sat: u64) -> Self {
        Quanta(sat as i128 * QUANTA_PER_SATOSHI)
    }

    pub fn as_satoshi_f64(self) -> f64 {
        self.0 as f64 / QUANTA_PER_SATOSHI as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl fmt::Display for Quanta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Quanta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let q = QUANTA_PER_SATOSHI as u128;
        write!(f, "{sign}{}.{:04}sat", abs / q, abs % q)
    }
}

impl Add for Quanta {
    type Output = Quanta;
    fn add(self, rhs: Self) -> Quanta {
        Quanta(self.0 + rhs.0)
    }
}

impl AddAssign for Quanta {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Sub for Quanta {
    type Output = Quanta;
    fn sub(self, rhs: Self) -> Quanta {
        Quanta(self.0 - rhs.0)
    }
}

impl SubAssign for Quanta {
    fn sub_assign(&mut self, rhs: Self) {
        self.0 -= rhs.0;
    }
}

impl Neg for Quanta {
    type Output = Quanta;
    fn neg(self) -> Quanta {
        Quanta(-self.0)
    }
}

impl Sum for Quanta {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Quanta::ZERO, |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Quanta> for Quanta {
    fn sum<I: Iterator<Item = &'a Quanta>>(iter: I) -> Self {
        iter.fold(Quanta::ZERO, |acc, x| acc + *x)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AmountError {
    #[error("empty amount")]
    Empty,
    #[error("malformed amount {0:?}")]
    Malformed(String),
    #[error("amount {0:?} is not a whole number")]
    Fractional(String),
    #[error("amount {0:?} is negative")]
    Negative(String),
    #[error("amount {0:?} out of range")]
    Overflow(String),
}

/// Parses a non-negative integer written either plainly (`17000000`) or in
/// decimal scientific notation (`1.7e+07`). The conversion is exact: any
/// representation that does not denote a whole number is rejected.
pub fn parse_whole_amount(text: &str) -> Result<u64, AmountError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(AmountError::Empty);
    }
    let malformed = || AmountError::Malformed(s.to_string());
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let exp: i32 = s[pos + 1..].parse().map_err(|_| malformed())?;
            (&s[..pos], exp)
        }
        None => (s, 0),
    };
    let mantissa = match mantissa.strip_prefix('+') {
        Some(rest) => rest,
        None if mantissa.starts_with('-') => {
            let rest = &mantissa[1..];
            if rest.chars().any(|c| c.is_ascii_digit() && c != '0') {
                return Err(AmountError::Negative(s.to_string()));
            }
            rest
        }
        None => mantissa,
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(malformed());
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    // value = digits × 10^(exponent − len(frac))
    let mut digits: String = format!("{int_part}{frac_part}");
    let mut scale = exponent as i64 - frac_part.len() as i64;
    while scale < 0 && digits.ends_with('0') {
        digits.pop();
        scale += 1;
    }
    if scale < 0 {
        let all_zero = digits.bytes().all(|b| b == b'0');
        if !all_zero {
            return Err(AmountError::Fractional(s.to_string()));
        }
        return Ok(0);
    }
    let digits = digits.trim_start_matches('0');
    if digits.is_empty() {
        return Ok(0);
    }
    if digits.len() as i64 + scale > 20 {
        return Err(AmountError::Overflow(s.to_string()));
    }
    let mut value: u128 = digits.parse().map_err(|_| malformed())?;
    for _ in 0..scale {
        value *= 10;
    }
    u64::try_from(value).map_err(|_| AmountError::Overflow(s.to_string()))
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid threshold {0:?}: expected integer quanta, or a number suffixed with `sat` or `btc`")]
pub struct ThresholdParseError(pub String);

/// A money amount given on the command line or in a config file.
/// A bare integer is quanta; `sat` and `btc` suffixes select larger units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdArg(pub Quanta);

impl FromStr for ThresholdArg {
    type Err = ThresholdParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ThresholdParseError(s.to_string());
        let t = s.trim().to_ascii_lowercase();
        let (number, scale_digits) = if let Some(n) = t.strip_suffix("btc") {
            (n.trim(), 12) // 1 BTC = 10^8 sat = 10^12 quanta
        } else if let Some(n) = t.strip_suffix("sat") {
            (n.trim(), 4)
        } else {
            (t.as_str(), 0)
        };
        let (int_part, frac_part) = number.split_once('.').unwrap_or((number, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > scale_digits {
            return Err(err());
        }
        let mut digits = format!("{int_part}{frac_trimmed}");
        for _ in 0..(scale_digits - frac_trimmed.len()) {
            digits.push('0');
        }
        let digits = digits.trim_start_matches('0');
        if digits.is_empty() {
            return Ok(ThresholdArg(Quanta::ZERO));
        }
        digits
            .parse::<i128>()
            .map(|q| ThresholdArg(Quanta(q)))
            .map_err(|_| err())
    }
}

/// `⌊a·b / c⌋` and the remainder, exact for any `u128` operands.
pub(crate) fn mul_div_rem(a: u128, b: u128, c: u128) -> (u128, u128) {
    debug_assert!(c > 0);
    match a.checked_mul(b) {
        Some(p) => (p / c, p % c),
        None => {
            let p = BigUint::from(a) * BigUint::from(b);
            let c = BigUint::from(c);
            let q = &p / &c;
            let r = &p % &c;
            (
                u128::try_from(q).expect("quotient fits: a·b/c ≤ max(a, b) whenever c ≥ min(a, b)"),
                u128::try_from(r).expect("remainder < divisor"),
            )
        }
    }
}
