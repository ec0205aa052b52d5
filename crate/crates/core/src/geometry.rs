//! Keypad geometry: key centers, effective widths, and the Fitts index of
//! difficulty between two keys.
//!
//! Coordinates are in inches. The layout text format is one record per line,
//! `key,center_x_in,center_y_in,width_in`, with `#` comment lines. A
//! `# name = <name>` comment carries the layout name.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{parse_err, Error, Result};

/// One of the eleven keys used for PIN entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyId {
    Digit(u8),
    Enter,
}

impl KeyId {
    pub const COUNT: usize = 11;

    /// All keys in index order: digits 0-9 then ENTER.
    pub const ALL: [KeyId; 11] = [
        KeyId::Digit(0),
        KeyId::Digit(1),
        KeyId::Digit(2),
        KeyId::Digit(3),
        KeyId::Digit(4),
        KeyId::Digit(5),
        KeyId::Digit(6),
        KeyId::Digit(7),
        KeyId::Digit(8),
        KeyId::Digit(9),
        KeyId::Enter,
    ];

    pub fn digit(d: u8) -> Result<KeyId> {
        if d <= 9 {
            Ok(KeyId::Digit(d))
        } else {
            Err(Error::UnknownKey(d.to_string()))
        }
    }

    /// Dense index in `0..11`; ENTER is 10.
    pub fn index(self) -> usize {
        match self {
            KeyId::Digit(d) => d as usize,
            KeyId::Enter => 10,
        }
    }

    pub fn from_index(i: usize) -> KeyId {
        Self::ALL[i]
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyId::Digit(d) => write!(f, "{d}"),
            KeyId::Enter => f.write_str("ENTER"),
        }
    }
}

impl FromStr for KeyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<KeyId> {
        let s = s.trim();
        match s {
            "ENTER" | "Enter" | "enter" => Ok(KeyId::Enter),
            _ if s.len() == 1 && s.as_bytes()[0].is_ascii_digit() => Ok(KeyId::Digit(s.as_bytes()[0] - b'0')),
            _ => Err(Error::UnknownKey(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyGeometry {
    pub key: KeyId,
    pub center_x: f64,
    pub center_y: f64,
    pub effective_width: f64,
}

impl KeyGeometry {
    pub fn new(key: KeyId, center_x: f64, center_y: f64, effective_width: f64) -> Self {
        KeyGeometry {
            key,
            center_x,
            center_y,
            effective_width,
        }
    }
}

/// A complete keypad: every [`KeyId`] exactly once. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypadLayout {
    name: String,
    keys: [KeyGeometry; 11],
}

/// Pitch of the standard numeric pad, in inches.
pub const STANDARD_PITCH: f64 = 0.75;
/// Effective width used for every key of the standard pad.
pub const STANDARD_WIDTH: f64 = 0.5;

impl KeypadLayout {
    /// Validates and builds a layout. Keys sharing a center are rejected.
    pub fn new(name: impl Into<String>, keys: Vec<KeyGeometry>) -> Result<Self> {
        Self::build(name.into(), keys, false)
    }

    /// Like [`KeypadLayout::new`] but accepts keys that share a center.
    pub fn new_degenerate(name: impl Into<String>, keys: Vec<KeyGeometry>) -> Result<Self> {
        Self::build(name.into(), keys, true)
    }

    fn build(name: String, keys: Vec<KeyGeometry>, allow_degenerate: bool) -> Result<Self> {
        let mut slots: [Option<KeyGeometry>; 11] = [None; 11];
        for k in keys {
            if !(k.center_x.is_finite() && k.center_y.is_finite()) {
                return Err(Error::NonFiniteCoordinate(k.key.to_string()));
            }
            if !(k.effective_width > 0.0) || !k.effective_width.is_finite() {
                return Err(Error::NonPositiveWidth {
                    key: k.key.to_string(),
                    width: k.effective_width,
                });
            }
            let slot = &mut slots[k.key.index()];
            if slot.is_some() {
                return Err(Error::DuplicateKey(k.key.to_string()));
            }
            *slot = Some(k);
        }
        let mut out = [KeyGeometry::new(KeyId::Enter, 0.0, 0.0, 1.0); 11];
        for (i, slot) in slots.iter().enumerate() {
            match slot {
                Some(k) => out[i] = *k,
                None => return Err(Error::IncompleteLayout(KeyId::from_index(i).to_string())),
            }
        }
        if !allow_degenerate {
            for i in 0..11 {
                for j in (i + 1)..11 {
                    if out[i].center_x == out[j].center_x && out[i].center_y == out[j].center_y {
                        return Err(Error::DegenerateLayout(out[i].key.to_string(), out[j].key.to_string()));
                    }
                }
            }
        }
        Ok(KeypadLayout { name, keys: out })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn key(&self, key: KeyId) -> &KeyGeometry {
        &self.keys[key.index()]
    }

    pub fn keys(&self) -> &[KeyGeometry; 11] {
        &self.keys
    }

    /// SHA-256 over the name and the bit patterns of every key record.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update([0u8]);
        for k in &self.keys {
            h.update((k.key.index() as u8).to_le_bytes());
            h.update(k.center_x.to_le_bytes());
            h.update(k.center_y.to_le_bytes());
            h.update(k.effective_width.to_le_bytes());
        }
        h.finalize().into()
    }

    /// True when every digit sits at the same distance from ENTER.
    pub fn is_circular(&self, tol: f64) -> bool {
        let r = key_distance(self, KeyId::Digit(0), KeyId::Enter);
        (1..10).all(|d| (key_distance(self, KeyId::Digit(d), KeyId::Enter) - r).abs() <= tol)
    }
}

/// The numeric pad used for the reference dictionary.
///
/// 0.75-inch pitch with `1` at the bottom-left of the digit grid, a wide `0`
/// under `1`/`2`, and a tall ENTER to the right of the `3` row. Every key has
/// a 0.5-inch effective width.
pub fn standard_numpad() -> KeypadLayout {
    let p = STANDARD_PITCH;
    let w = STANDARD_WIDTH;
    let mut keys = vec![
        KeyGeometry::new(KeyId::Digit(0), p / 2.0, 0.0, w),
        KeyGeometry::new(KeyId::Enter, 3.0 * p, p / 2.0, w),
    ];
    for d in 1..=9u8 {
        let col = ((d - 1) % 3) as f64;
        let row = ((d - 1) / 3 + 1) as f64;
        keys.push(KeyGeometry::new(KeyId::Digit(d), col * p, row * p, w));
    }
    KeypadLayout::new("standard", keys).expect("standard layout is valid")
}

/// Digits evenly spaced on a circle (digit k at 2πk/10 clockwise from
/// 12 o'clock) with ENTER at the center.
pub fn circular_layout(radius: f64, enter_at_center: bool) -> Result<KeypadLayout> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::NonPositiveRadius(radius));
    }
    let mut keys = Vec::with_capacity(11);
    for d in 0..10u8 {
        let theta = 2.0 * std::f64::consts::PI * d as f64 / 10.0;
        keys.push(KeyGeometry::new(
            KeyId::Digit(d),
            radius * theta.sin(),
            radius * theta.cos(),
            STANDARD_WIDTH,
        ));
    }
    let enter = if enter_at_center {
        KeyGeometry::new(KeyId::Enter, 0.0, 0.0, STANDARD_WIDTH)
    } else {
        // below the ring, outside it
        KeyGeometry::new(KeyId::Enter, 0.0, -radius - 2.0 * STANDARD_WIDTH, STANDARD_WIDTH)
    };
    keys.push(enter);
    KeypadLayout::new(format!("circular-r{radius}"), keys)
}

/// Euclidean distance between key centers.
pub fn key_distance(layout: &KeypadLayout, from: KeyId, to: KeyId) -> f64 {
    if from == to {
        return 0.0;
    }
    let a = layout.key(from);
    let b = layout.key(to);
    (a.center_x - b.center_x).hypot(a.center_y - b.center_y)
}

/// `log2(D / W + 1)` with `W` the target key's width; zero for a repeated key.
pub fn index_of_difficulty(layout: &KeypadLayout, from: KeyId, to: KeyId) -> f64 {
    if from == to {
        return 0.0;
    }
    let d = key_distance(layout, from, to);
    (d / layout.key(to).effective_width + 1.0).log2()
}

/// 11x11 table of index-of-difficulty values indexed by [`KeyId::index`].
pub fn difficulty_table(layout: &KeypadLayout) -> [[f64; 11]; 11] {
    let mut t = [[0.0; 11]; 11];
    for from in KeyId::ALL {
        for to in KeyId::ALL {
            t[from.index()][to.index()] = index_of_difficulty(layout, from, to);
        }
    }
    t
}

pub fn load_layout(text: &str) -> Result<KeypadLayout> {
    let mut name = String::from("custom");
    let mut keys = Vec::with_capacity(11);
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                if k.trim() == "name" {
                    name = v.trim().to_string();
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_err(lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let key: KeyId = fields[0].parse()?;
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| parse_err(lineno, format!("malformed {what} {s:?}")))
        };
        keys.push(KeyGeometry::new(
            key,
            num(fields[1], "center_x")?,
            num(fields[2], "center_y")?,
            num(fields[3], "width")?,
        ));
    }
    KeypadLayout::new(name, keys)
}

/// Writes the layout in the line format accepted by [`load_layout`].
/// Values use the shortest representation that parses back bit-exactly.
pub fn save_layout(layout: &KeypadLayout) -> String {
    let mut out = format!("# name = {}\n# key,center_x_in,center_y_in,width_in\n", layout.name);
    for k in layout.keys() {
        out.push_str(&format!(
            "{},{:?},{:?},{:?}\n",
            k.key, k.center_x, k.center_y, k.effective_width
        ));
    }
    out
}
