//! Fixed-point clock readings.
//!
//! Both the GNSS clock and the receiver clock are carried as integer
//! picoseconds. Differences are then exact, so a constant receiver clock
//! offset cancels bit-for-bit when pseudoranges are differenced.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use thiserror::Error;

pub const PICOS_PER_SECOND: i64 = 1_000_000_000_000;
const FRACTION_DIGITS: usize = 12;

/// A clock reading or interval, in picoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockTime(i64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid time value {0:?}")]
pub struct ParseTimeError(pub String);

impl ClockTime {
    pub const ZERO: ClockTime = ClockTime(0);

    pub const fn from_picos(picos: i64) -> Self {
        Self(picos)
    }

    pub const fn from_millis(millis: i64) -> Self {
        Self(millis * 1_000_000_000)
    }

    /// Rounds to the nearest picosecond. Non-finite or out-of-range input
    /// yields `None`.
    pub fn from_secs_f64(secs: f64) -> Option<Self> {
        let picos = (secs * PICOS_PER_SECOND as f64).round();
        if picos.is_finite() && picos.abs() < i64::MAX as f64 {
            Some(Self(picos as i64))
        } else {
            None
        }
    }

    pub const fn picos(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        let whole = self.0.div_euclid(PICOS_PER_SECOND);
        let frac = self.0.rem_euclid(PICOS_PER_SECOND);
        whole as f64 + frac as f64 / PICOS_PER_SECOND as f64
    }

    pub fn checked_add(self, rhs: ClockTime) -> Option<ClockTime> {
        self.0.checked_add(rhs.0).map(ClockTime)
    }

    pub fn checked_sub(self, rhs: ClockTime) -> Option<ClockTime> {
        self.0.checked_sub(rhs.0).map(ClockTime)
    }
}

impl Add for ClockTime {
    type Output = ClockTime;
    fn add(self, rhs: ClockTime) -> ClockTime {
        ClockTime(self.0 + rhs.0)
    }
}

impl Sub for ClockTime {
    type Output = ClockTime;
    fn sub(self, rhs: ClockTime) -> ClockTime {
        ClockTime(self.0 - rhs.0)
    }
}

impl Neg for ClockTime {
    type Output = ClockTime;
    fn neg(self) -> ClockTime {
        ClockTime(-self.0)
    }
}

/// Prints seconds with all twelve fractional digits, so that parsing the
/// output recovers the exact value.
impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let per = PICOS_PER_SECOND as u64;
        write!(f, "{sign}{}.{:012}", abs / per, abs % per)
    }
}

/// Parses a plain decimal number of seconds (`-12.5`, `3`, `0.000000000001`)
/// without going through floating point. More than twelve fractional digits
/// is an error rather than a silent rounding.
impl FromStr for ClockTime {
    type Err = ParseTimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTimeError(s.to_owned());
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        let all_digits = |t: &str| t.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int_part) || !all_digits(frac_part) || frac_part.len() > FRACTION_DIGITS {
            return Err(err());
        }
        let whole: i64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| err())? };
        let mut frac: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| err())? };
        for _ in frac_part.len()..FRACTION_DIGITS {
            frac *= 10;
        }
        let picos = whole.checked_mul(PICOS_PER_SECOND).and_then(|w| w.checked_add(frac)).ok_or_else(err)?;
        Ok(ClockTime(if negative { -picos } else { picos }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_decimal_seconds() {
        assert_eq!("1.5".parse::<ClockTime>().unwrap().picos(), 1_500_000_000_000);
        assert_eq!("-0.000000000001".parse::<ClockTime>().unwrap().picos(), -1);
        assert_eq!("7".parse::<ClockTime>().unwrap(), ClockTime::from_millis(7000));
        assert_eq!(".25".parse::<ClockTime>().unwrap(), ClockTime::from_millis(250));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "-", ".", "1.2.3", "1e3", "0.0000000000001", "abc", "99999999999"] {
            assert!(bad.parse::<ClockTime>().is_err(), "{bad}");
        }
    }

    #[test]
    fn display_is_fixed_width_fraction() {
        assert_eq!(ClockTime::from_picos(-1_250_000_000_000).to_string(), "-1.250000000000");
        assert_eq!(ClockTime::from_millis(43_200_000).to_string(), "43200.000000000000");
    }

    #[test]
    fn secs_f64_conversion() {
        assert_eq!(ClockTime::from_secs_f64(1.0), Some(ClockTime::from_millis(1000)));
        assert_eq!(ClockTime::from_secs_f64(f64::NAN), None);
        assert_eq!(ClockTime::from_millis(-2500).as_secs_f64(), -2.5);
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(picos in -9_000_000_000_000_000_000i64..9_000_000_000_000_000_000) {
            let t = ClockTime::from_picos(picos);
            prop_assert_eq!(t.to_string().parse::<ClockTime>().unwrap(), t);
        }
    }
}
