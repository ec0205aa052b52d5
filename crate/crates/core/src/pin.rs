//! PINs, per-entry timing sequences, and known-digit constraints.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::KeyId;

pub const MAX_PIN_LENGTH: usize = 10;

/// A fixed-length digit string. Stored as its numeric value plus length, so
/// leading zeros are preserved and ordering within one length is numeric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pin {
    len: u8,
    value: u64,
}

pub fn check_length(len: usize) -> Result<()> {
    if (1..=MAX_PIN_LENGTH).contains(&len) {
        Ok(())
    } else {
        Err(Error::PinLengthOutOfRange(len))
    }
}

/// `10^len`, the size of the full PIN space.
pub fn space_size(len: usize) -> u64 {
    10u64.pow(len as u32)
}

impl Pin {
    pub fn new(value: u64, len: usize) -> Result<Pin> {
        check_length(len)?;
        if value >= space_size(len) {
            return Err(Error::InvalidPin(format!("{value} does not fit in {len} digits")));
        }
        Ok(Pin { len: len as u8, value })
    }

    pub fn from_digits(digits: &[u8]) -> Result<Pin> {
        check_length(digits.len())?;
        let mut value = 0u64;
        for &d in digits {
            if d > 9 {
                return Err(Error::InvalidPin(format!("{digits:?}")));
            }
            value = value * 10 + d as u64;
        }
        Ok(Pin {
            len: digits.len() as u8,
            value,
        })
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    /// Digits, most significant first.
    pub fn digits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len()];
        let mut v = self.value;
        for slot in out.iter_mut().rev() {
            *slot = (v % 10) as u8;
            v /= 10;
        }
        out
    }

    /// Digit at a 1-based position.
    pub fn digit_at(&self, position: usize) -> u8 {
        let shift = self.len() - position;
        ((self.value / 10u64.pow(shift as u32)) % 10) as u8
    }

    pub fn keys(&self) -> Vec<KeyId> {
        self.digits().into_iter().map(KeyId::Digit).collect()
    }
}

impl fmt::Display for Pin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$}", self.value, width = self.len())
    }
}

impl FromStr for Pin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Pin> {
        let s = s.trim();
        if s.is_empty() || s.len() > MAX_PIN_LENGTH || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidPin(s.to_string()));
        }
        let digits: Vec<u8> = s.bytes().map(|b| b - b'0').collect();
        Pin::from_digits(&digits)
    }
}

/// Inter-keystroke intervals (ms) for one PIN entry, key-down to key-down.
/// Every value is finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingSequence(Vec<f64>);

impl TimingSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSequence("empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidSequence(format!(
                "interval {v} is not positive and finite"
            )));
        }
        Ok(TimingSequence(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        TimingSequence::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl Deref for TimingSequence {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A digit known to sit at a 1-based position of the target PIN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DigitConstraint {
    pub position: usize,
    pub digit: u8,
}

impl DigitConstraint {
    pub fn new(position: usize, digit: u8) -> Result<Self> {
        if position == 0 || digit > 9 {
            return Err(Error::InvalidConstraint(format!("position {position}, digit {digit}")));
        }
        Ok(DigitConstraint { position, digit })
    }

    pub fn matches(&self, pin: &Pin) -> bool {
        pin.digit_at(self.position) == self.digit
    }
}

impl FromStr for DigitConstraint {
    type Err = Error;

    /// `position=digit`, e.g. `2=7`.
    fn from_str(s: &str) -> Result<Self> {
        let (p, d) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidConstraint(s.to_string()))?;
        let position = p.trim().parse().map_err(|_| Error::InvalidConstraint(s.to_string()))?;
        let digit = d.trim().parse().map_err(|_| Error::InvalidConstraint(s.to_string()))?;
        DigitConstraint::new(position, digit)
    }
}

/// Rejects duplicate positions and positions past the PIN length.
pub fn validate_constraints(constraints: &[DigitConstraint], pin_length: usize) -> Result<()> {
    let mut seen = [false; MAX_PIN_LENGTH + 1];
    for c in constraints {
        if c.position == 0 || c.position > pin_length {
            return Err(Error::InvalidConstraint(format!(
                "position {} out of range for length {pin_length}",
                c.position
            )));
        }
        if seen[c.position] {
            return Err(Error::InvalidConstraint(format!("duplicate position {}", c.position)));
        }
        seen[c.position] = true;
    }
    Ok(())
}
