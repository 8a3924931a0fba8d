//! Fixed-point currency.
//!
//! All spend accounting is done in integer micro-units (1e-6 of the currency
//! unit) so conservation checks are exact. Values are converted to `f64` only
//! for penalty and performance math.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Micro-units per currency unit.
pub const MICROS_PER_UNIT: i64 = 1_000_000;

#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_micros(micros: i64) -> Self {
        Money(micros)
    }

    /// Rounds to the nearest micro-unit.
    pub fn from_units(units: f64) -> Self {
        Money((units * MICROS_PER_UNIT as f64).round() as i64)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub fn to_units(self) -> f64 {
        self.0 as f64 / MICROS_PER_UNIT as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    pub fn min(self, other: Money) -> Money {
        Money(self.0.min(other.0))
    }

    pub fn saturating_sub(self, other: Money) -> Money {
        Money(self.0.saturating_sub(other.0))
    }

    pub fn times(self, n: u64) -> Money {
        Money(self.0 * n as i64)
    }

    /// Cost of a single impression billed at `self` per thousand.
    pub fn per_impression(self) -> Money {
        Money(self.0 / 1000)
    }

    /// Splits `self` into parts proportional to `weights` using the
    /// largest-remainder method; the parts always sum to `self`.
    pub fn split_proportional(self, weights: &[f64]) -> Vec<Money> {
        let micros: Vec<i64> = largest_remainder(self.0, weights);
        micros.into_iter().map(Money).collect()
    }
}

/// Apportions the integer `total` over `weights` so that the parts sum to
/// `total` exactly. Ties in the remainders go to the earlier index.
pub fn largest_remainder(total: i64, weights: &[f64]) -> Vec<i64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if sum <= 0.0 {
        let mut out = vec![0; weights.len()];
        out[0] = total;
        return out;
    }
    let mut floors = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    let mut assigned = 0i64;
    for (i, w) in weights.iter().enumerate() {
        let exact = total as f64 * (w / sum);
        let floor = exact.floor() as i64;
        floors.push(floor);
        rems.push((exact - floor as f64, i));
        assigned += floor;
    }
    let mut leftover = total - assigned;
    rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let n = rems.len();
    let mut k = 0;
    while leftover > 0 {
        floors[rems[k % n].1] += 1;
        leftover -= 1;
        k += 1;
    }
    while leftover < 0 {
        floors[rems[n - 1 - (k % n)].1] -= 1;
        leftover += 1;
        k += 1;
    }
    floors
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
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

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Money({self})")
    }
}

/// Exact decimal rendering with six fractional digits.
impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let unit = MICROS_PER_UNIT as u64;
        write!(f, "{sign}{}.{:06}", abs / unit, abs % unit)
    }
}
