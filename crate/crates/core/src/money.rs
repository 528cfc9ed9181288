//! Integer money and exact fractional rates.
//!
//! Balances live in minor currency units so that every horizontal transfer
//! is exact. Fractions (multiplicative kernel share, interest rate, reserve
//! ratio) are held as parts-per-billion integers, which makes the rounding
//! applied to them reproducible bit-for-bit.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use crate::error::{config, Result};

/// A signed amount of money in minor units (e.g. cents).
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct MoneyAmount(pub i64);

impl MoneyAmount {
    pub const ZERO: MoneyAmount = MoneyAmount(0);

    pub const fn new(units: i64) -> Self {
        MoneyAmount(units)
    }

    pub const fn units(self) -> i64 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn abs(self) -> Self {
        MoneyAmount(self.0.abs())
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl From<i64> for MoneyAmount {
    fn from(v: i64) -> Self {
        MoneyAmount(v)
    }
}

impl fmt::Display for MoneyAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for MoneyAmount {
    type Output = MoneyAmount;
    fn add(self, rhs: Self) -> Self {
        MoneyAmount(self.0 + rhs.0)
    }
}

impl Sub for MoneyAmount {
    type Output = MoneyAmount;
    fn sub(self, rhs: Self) -> Self {
        MoneyAmount(self.0 - rhs.0)
    }
}

impl Neg for MoneyAmount {
    type Output = MoneyAmount;
    fn neg(self) -> Self {
        MoneyAmount(-self.0)
    }
}

impl AddAssign for MoneyAmount {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl SubAssign for MoneyAmount {
    fn sub_assign(&mut self, rhs: Self) {
        self.0 -= rhs.0;
    }
}

impl Sum for MoneyAmount {
    fn sum<I: Iterator<Item = MoneyAmount>>(iter: I) -> Self {
        MoneyAmount(iter.map(|m| m.0).sum())
    }
}

impl<'a> Sum<&'a MoneyAmount> for MoneyAmount {
    fn sum<I: Iterator<Item = &'a MoneyAmount>>(iter: I) -> Self {
        MoneyAmount(iter.map(|m| m.0).sum())
    }
}

/// Integer division `num / den` rounded to nearest, ties to even. `den > 0`.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

const PPB: i64 = 1_000_000_000;

/// A nonnegative fraction with nine decimal digits, stored exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate {
    ppb: i64,
}

impl Rate {
    pub const ZERO: Rate = Rate { ppb: 0 };
    pub const ONE: Rate = Rate { ppb: PPB };

    /// Rounds `value` to the nearest part per billion.
    pub fn from_f64(value: f64) -> Result<Rate> {
        if !value.is_finite() || value < 0.0 {
            return config(format!("rate must be a finite nonnegative number, got {value}"));
        }
        let ppb = (value * PPB as f64).round();
        if ppb > i64::MAX as f64 {
            return config(format!("rate {value} is out of range"));
        }
        Ok(Rate { ppb: ppb as i64 })
    }

    pub const fn from_ppb(ppb: i64) -> Rate {
        Rate { ppb }
    }

    pub fn ppb(self) -> i64 {
        self.ppb
    }

    pub fn as_f64(self) -> f64 {
        self.ppb as f64 / PPB as f64
    }

    pub fn is_zero(self) -> bool {
        self.ppb == 0
    }

    /// `1 - self`; callers guarantee `self <= 1`.
    pub fn complement(self) -> Rate {
        Rate {
            ppb: PPB - self.ppb,
        }
    }

    /// `round_half_even(self * amount)`.
    pub fn apply_half_even(self, amount: MoneyAmount) -> MoneyAmount {
        let v = div_round_half_even(amount.0 as i128 * self.ppb as i128, PPB as i128);
        MoneyAmount(v as i64)
    }

    /// `floor(self * amount)`.
    pub fn apply_floor(self, amount: MoneyAmount) -> MoneyAmount {
        let v = (amount.0 as i128 * self.ppb as i128).div_euclid(PPB as i128);
        MoneyAmount(v as i64)
    }

    /// `ceil(self * amount)`.
    pub fn apply_ceil(self, amount: MoneyAmount) -> MoneyAmount {
        let n = amount.0 as i128 * self.ppb as i128;
        let v = -((-n).div_euclid(PPB as i128));
        MoneyAmount(v as i64)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Rate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Rate::from_f64(v).map_err(serde::de::Error::custom)
    }
}
