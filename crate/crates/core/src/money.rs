//! Integer-cent currency.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Signed amount of money in integer cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub const ZERO: Cents = Cents(0);

    pub fn from_dollars(dollars: i64) -> Self {
        Cents(dollars * 100)
    }

    /// Rounds a fractional cent amount half-to-even.
    pub fn round_from(cents: f64) -> Self {
        Cents(cents.round_ties_even() as i64)
    }

    /// Parses a dollar amount as it appears on the wire (e.g. `150.00`).
    pub fn from_dollars_f64(dollars: f64) -> Self {
        Self::round_from(dollars * 100.0)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl Sub for Cents {
    type Output = Cents;
    fn sub(self, rhs: Cents) -> Cents {
        Cents(self.0 - rhs.0)
    }
}

impl Neg for Cents {
    type Output = Cents;
    fn neg(self) -> Cents {
        Cents(-self.0)
    }
}

impl AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Cents {
    fn sub_assign(&mut self, rhs: Cents) {
        self.0 -= rhs.0;
    }
}

impl Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        Cents(iter.map(|c| c.0).sum())
    }
}

/// Renders as `$1,234.56`, or `$-1,234.56` for losses.
impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = (abs / 100).to_string();
        let mut grouped = String::with_capacity(whole.len() + whole.len() / 3);
        for (i, ch) in whole.chars().enumerate() {
            if i > 0 && (whole.len() - i).is_multiple_of(3) {
                grouped.push(',');
            }
            grouped.push(ch);
        }
        write!(f, "${sign}{grouped}.{:02}", abs % 100)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_matches_table_style() {
        assert_eq!(Cents(-398_337_092).to_string(), "$-3,983,370.92");
        assert_eq!(Cents(15_000).to_string(), "$150.00");
        assert_eq!(Cents(5).to_string(), "$0.05");
        assert_eq!(Cents(-100_000).to_string(), "$-1,000.00");
        assert_eq!(Cents(0).to_string(), "$0.00");
    }

    #[test]
    fn wire_dollars_round_to_cents() {
        assert_eq!(Cents::from_dollars_f64(150.0), Cents(15_000));
        assert_eq!(Cents::from_dollars_f64(5.00), Cents(500));
        assert_eq!(Cents::from_dollars_f64(0.295), Cents(30));
        assert_eq!(Cents::round_from(2.5), Cents(2));
        assert_eq!(Cents::round_from(-3000.0000001), Cents(-3000));
    }
}
