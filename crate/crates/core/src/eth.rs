use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const GWEI_PER_ETH: f64 = 1e9;

/// An ETH amount held as a signed integer number of gwei.
///
/// Prices enter and leave the system as decimal ETH numbers, but every sum,
/// difference and comparison happens on integers so that replayed totals
/// (volumes, PnL legs) are exact and independent of summation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Eth(i64);

impl Eth {
    pub const ZERO: Eth = Eth(0);

    pub const fn from_gwei(gwei: i64) -> Self {
        Eth(gwei)
    }

    /// Rounds to the nearest gwei.
    pub fn from_eth(eth: f64) -> Self {
        Eth((eth * GWEI_PER_ETH).round() as i64)
    }

    pub const fn gwei(self) -> i64 {
        self.0
    }

    pub fn as_eth(self) -> f64 {
        self.0 as f64 / GWEI_PER_ETH
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// `self / other` as a plain ratio; 0 when `other` is zero.
    pub fn ratio(self, other: Eth) -> f64 {
        if other.0 == 0 {
            0.0
        } else {
            self.0 as f64 / other.0 as f64
        }
    }
}

impl fmt::Display for Eth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_eth())
    }
}

impl Add for Eth {
    type Output = Eth;
    fn add(self, rhs: Eth) -> Eth {
        Eth(self.0 + rhs.0)
    }
}

impl Sub for Eth {
    type Output = Eth;
    fn sub(self, rhs: Eth) -> Eth {
        Eth(self.0 - rhs.0)
    }
}

impl Neg for Eth {
    type Output = Eth;
    fn neg(self) -> Eth {
        Eth(-self.0)
    }
}

impl AddAssign for Eth {
    fn add_assign(&mut self, rhs: Eth) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Eth {
    fn sub_assign(&mut self, rhs: Eth) {
        self.0 -= rhs.0;
    }
}

impl Sum for Eth {
    fn sum<I: Iterator<Item = Eth>>(iter: I) -> Eth {
        iter.fold(Eth::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Eth> for Eth {
    fn sum<I: Iterator<Item = &'a Eth>>(iter: I) -> Eth {
        iter.copied().sum()
    }
}

impl Serialize for Eth {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_eth())
    }
}

impl<'de> Deserialize<'de> for Eth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let eth = f64::deserialize(deserializer)?;
        if !eth.is_finite() {
            return Err(serde::de::Error::custom("price must be a finite number"));
        }
        Ok(Eth::from_eth(eth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_prices_round_to_gwei() {
        assert_eq!(Eth::from_eth(1.5).gwei(), 1_500_000_000);
        assert_eq!(Eth::from_eth(0.1) + Eth::from_eth(0.2), Eth::from_eth(0.3));
    }

    #[test]
    fn json_round_trip() {
        let p = Eth::from_eth(12.345678912);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Eth>(&s).unwrap(), p);
    }

    #[test]
    fn ratio_of_zero_denominator() {
        assert_eq!(Eth::from_eth(3.0).ratio(Eth::ZERO), 0.0);
        assert_eq!(Eth::from_eth(1.0).ratio(Eth::from_eth(4.0)), 0.25);
    }
}
