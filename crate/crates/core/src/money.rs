//! Exact fixed-point money.
//!
//! Amounts are stored as signed integers in units of 10⁻⁹, so sums and
//! comparisons of decimal quantities such as `0.01` or `10 - 0.02` are exact.
//! Signed values are allowed because utilities and differences are expressed
//! in the same unit.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Number of decimal places carried exactly.
pub const DECIMALS: u32 = 9;
const SCALE: i64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_nanos(nanos: i64) -> Self {
        Money(nanos)
    }

    pub const fn nanos(self) -> i64 {
        self.0
    }

    pub const fn from_int(units: i64) -> Self {
        Money(units * SCALE)
    }

    /// `numer / denom` units; fails unless the quotient is exactly representable.
    pub fn from_ratio(numer: i64, denom: i64) -> Result<Self, Error> {
        let scaled = numer as i128 * SCALE as i128;
        if denom == 0 || scaled % denom as i128 != 0 {
            return Err(Error::domain(format!(
                "{numer}/{denom} is not representable with {DECIMALS} decimals"
            )));
        }
        Ok(Money((scaled / denom as i128) as i64))
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn abs(self) -> Self {
        Money(self.0.abs())
    }

    pub fn halve(self) -> Self {
        Money(self.0 / 2)
    }

    pub fn times(self, k: i64) -> Self {
        Money(self.0 * k)
    }

    pub fn to_ratio(self) -> Ratio<i128> {
        Ratio::new(self.0 as i128, SCALE as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / SCALE as u64;
        let frac = abs % SCALE as u64;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let digits = format!("{frac:09}");
            write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl FromStr for Money {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::parse(format!("invalid decimal amount {s:?}"));
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > DECIMALS as usize {
            return Err(Error::parse(format!(
                "{s:?} has more than {DECIMALS} decimal places"
            )));
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
        let frac_nanos: i64 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<9}").parse().map_err(|_| bad())?
        };
        let nanos = whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac_nanos))
            .ok_or_else(bad)?;
        Ok(Money(if neg { -nanos } else { nanos }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a decimal literal, panicking on malformed input. For constants.
pub fn money(s: &str) -> Money {
    s.parse().unwrap_or_else(|e| panic!("bad money literal {s:?}: {e}"))
}

/// A utility value: money, or the absorbing `-∞` that follows a budget breach.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Utility {
    NegInfinity,
    Finite(Money),
}

impl Utility {
    pub fn finite(self) -> Option<Money> {
        match self {
            Utility::Finite(m) => Some(m),
            Utility::NegInfinity => None,
        }
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::NegInfinity => f.write_str("-inf"),
            Utility::Finite(m) => m.fmt(f),
        }
    }
}

impl Serialize for Utility {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Utility {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "-inf" {
            Ok(Utility::NegInfinity)
        } else {
            s.parse().map(Utility::Finite).map_err(serde::de::Error::custom)
        }
    }
}

/// Exact ratio of two amounts, or infinity when the denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WelfareRatio {
    Finite(Ratio<i128>),
    Infinite,
}

impl WelfareRatio {
    pub fn of(numer: Money, denom: Money) -> Self {
        if denom.is_zero() {
            WelfareRatio::Infinite
        } else {
            WelfareRatio::Finite(Ratio::new(numer.nanos() as i128, denom.nanos() as i128))
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            WelfareRatio::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            WelfareRatio::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for WelfareRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WelfareRatio::Finite(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            WelfareRatio::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for WelfareRatio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_and_prints_decimals() {
        assert_eq!(money("0.01").nanos(), 10_000_000);
        assert_eq!(money("10").to_string(), "10");
        assert_eq!(money("9.98").to_string(), "9.98");
        assert_eq!(money("-0.5").to_string(), "-0.5");
        assert_eq!(money(".25"), money("0.25"));
        assert!("1.0000000001".parse::<Money>().is_err());
        assert!("abc".parse::<Money>().is_err());
        assert!("".parse::<Money>().is_err());
    }

    #[test]
    fn epsilon_chains_compare_exactly() {
        let eps = money("0.01");
        let one_plus = Money::from_int(1) + eps;
        assert_eq!(one_plus + one_plus + one_plus, money("3.03"));
        assert_eq!(Money::from_int(10) - money("0.02"), money("9.98"));
        assert!(money("0.02") > eps);
    }

    #[test]
    fn negative_infinity_is_below_everything() {
        assert!(Utility::NegInfinity < Utility::Finite(Money::from_int(-1_000_000)));
    }

    #[test]
    fn ratio_is_exact() {
        let r = WelfareRatio::of(Money::from_int(3), Money::from_int(2));
        assert_eq!(r, WelfareRatio::Finite(Ratio::new(3, 2)));
        assert_eq!(WelfareRatio::of(Money::from_int(3), Money::ZERO), WelfareRatio::Infinite);
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(n in -10_000_000_000_000i64..10_000_000_000_000i64) {
            let m = Money::from_nanos(n);
            prop_assert_eq!(m.to_string().parse::<Money>().unwrap(), m);
        }
    }
}
