//! Timing dictionaries: the predicted interval sequence of every PIN in a
//! (possibly digit-constrained) PIN space, plus text and binary persistence.
//!
//! Text format:
//!
//! ```text
//! # pinforge-dict v1 length=<l> a=<a> b=<b> layout=<name>
//! # layout_hash=<hex>
//! 504316,232.9502,232.9502,237.2201,231.3787,237.2201,226.0874
//! ```
//!
//! Binary format: magic `PFDICT01`, then little-endian `u8` length, `u64`
//! count, `f64` a, `f64` b, 32-byte layout hash, and the rows in ascending PIN
//! order. Full dictionaries store rows only; constrained ones prefix each row
//! with its `u32` PIN value.

use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{parse_err, Error, Result};
use crate::geometry::{KeyId, KeypadLayout};
use crate::model::{predict_interkey, FittsModel};
use crate::pin::{check_length, space_size, validate_constraints, DigitConstraint, Pin};

pub const BINARY_MAGIC: &[u8; 8] = b"PFDICT01";
const TEXT_TAG: &str = "# pinforge-dict v1";

/// How a PIN is keyed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntryPattern {
    /// Digits followed by one ENTER: `l` intervals.
    #[default]
    Standard,
    /// ENTER after every digit, then ENTER to submit: `d1 E d2 E .. dl E E`,
    /// plus one more ENTER when `final_double` (`2l + 1` intervals, else `2l`).
    Interleaved { final_double: bool },
}

impl EntryPattern {
    pub fn width(&self, pin_length: usize) -> usize {
        match self {
            EntryPattern::Standard => pin_length,
            EntryPattern::Interleaved { final_double } => 2 * pin_length + *final_double as usize,
        }
    }

    /// Keys pressed for `pin` under this pattern.
    pub fn key_sequence(&self, pin: &Pin) -> Vec<KeyId> {
        let mut keys = Vec::with_capacity(self.width(pin.len()) + 1);
        match self {
            EntryPattern::Standard => {
                keys.extend(pin.keys());
                keys.push(KeyId::Enter);
            }
            EntryPattern::Interleaved { final_double } => {
                for k in pin.keys() {
                    keys.push(k);
                    keys.push(KeyId::Enter);
                }
                keys.push(KeyId::Enter);
                if *final_double {
                    keys.push(KeyId::Enter);
                }
            }
        }
        keys
    }
}

/// Identifies the model and layout a dictionary was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFingerprint {
    pub a: f64,
    pub b: f64,
    pub layout_name: String,
    /// `None` when loaded from a text file without a hash line.
    pub layout_hash: Option<[u8; 32]>,
}

impl ModelFingerprint {
    pub fn of(model: &FittsModel, layout: &KeypadLayout) -> Self {
        ModelFingerprint {
            a: model.a,
            b: model.b,
            layout_name: layout.name().to_string(),
            layout_hash: Some(layout.content_hash()),
        }
    }

    /// Model coefficients and layout identity agree. The layout name is only
    /// compared when no hash is available.
    pub fn matches(&self, other: &ModelFingerprint) -> bool {
        let layout_eq = match (self.layout_hash, other.layout_hash) {
            (Some(x), Some(y)) => x == y,
            _ => self.layout_name == other.layout_name,
        };
        self.a == other.a && self.b == other.b && layout_eq
    }
}

impl fmt::Display for ModelFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a={} b={} layout={}", self.a, self.b, self.layout_name)?;
        if let Some(h) = &self.layout_hash {
            write!(f, " hash={}", to_hex(&h[..4]))?;
        }
        Ok(())
    }
}

/// Every candidate PIN with its predicted timing sequence, ascending by PIN.
#[derive(Debug, Clone)]
pub struct TimingDictionary {
    pin_length: usize,
    pattern: EntryPattern,
    fingerprint: ModelFingerprint,
    /// `None` for the full space, where row `i` belongs to PIN value `i`.
    pins: Option<Vec<u64>>,
    values: Vec<f64>,
}

impl PartialEq for TimingDictionary {
    fn eq(&self, other: &Self) -> bool {
        self.pin_length == other.pin_length
            && self.pattern == other.pattern
            && self.fingerprint.matches(&other.fingerprint)
            && self.len() == other.len()
            && (0..self.len()).all(|i| self.pin_value(i) == other.pin_value(i))
            && self.values == other.values
    }
}

impl TimingDictionary {
    pub fn pin_length(&self) -> usize {
        self.pin_length
    }

    pub fn pattern(&self) -> EntryPattern {
        self.pattern
    }

    /// Dimension of each timing sequence.
    pub fn width(&self) -> usize {
        self.pattern.width(self.pin_length)
    }

    pub fn fingerprint(&self) -> &ModelFingerprint {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when the dictionary covers all `10^l` PINs.
    pub fn is_complete(&self) -> bool {
        self.pins.is_none()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pin_value(&self, i: usize) -> u64 {
        match &self.pins {
            None => i as u64,
            Some(p) => p[i],
        }
    }

    pub fn pin(&self, i: usize) -> Pin {
        Pin::new(self.pin_value(i), self.pin_length).expect("stored PINs are valid")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn index_of(&self, pin: &Pin) -> Option<usize> {
        if pin.len() != self.pin_length {
            return None;
        }
        match &self.pins {
            None => Some(pin.value() as usize),
            Some(p) => p.binary_search(&pin.value()).ok(),
        }
    }

    pub fn get(&self, pin: &Pin) -> Option<&[f64]> {
        self.index_of(pin).map(|i| self.row(i))
    }

    pub fn entries(&self) -> impl Iterator<Item = (Pin, &[f64])> + '_ {
        (0..self.len()).map(move |i| (self.pin(i), self.row(i)))
    }

    /// Errors if the dictionary was not generated from this model and layout.
    pub fn check_fingerprint(&self, model: &FittsModel, layout: &KeypadLayout) -> Result<()> {
        let supplied = ModelFingerprint::of(model, layout);
        if self.fingerprint.matches(&supplied) {
            Ok(())
        } else {
            Err(Error::FingerprintMismatch {
                dictionary: self.fingerprint.to_string(),
                supplied: supplied.to_string(),
            })
        }
    }

    /// Assembles a dictionary from parts, checking shape and ordering.
    pub fn from_parts(
        pin_length: usize,
        pattern: EntryPattern,
        fingerprint: ModelFingerprint,
        pins: Option<Vec<u64>>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_length(pin_length)?;
        let width = pattern.width(pin_length);
        if !values.len().is_multiple_of(width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: values.len() % width,
            });
        }
        let rows = values.len() / width;
        let space = space_size(pin_length);
        let pins = match pins {
            None => {
                if rows as u64 != space {
                    return Err(Error::InvalidSequence(format!(
                        "full dictionary needs {space} rows, found {rows}"
                    )));
                }
                None
            }
            Some(p) => {
                if p.len() != rows {
                    return Err(Error::DimensionMismatch {
                        expected: rows,
                        actual: p.len(),
                    });
                }
                if p.windows(2).any(|w| w[0] >= w[1]) || p.last().is_some_and(|v| *v >= space) {
                    return Err(Error::InvalidPin("PINs must be ascending and in range".into()));
                }
                if p.len() as u64 == space {
                    None
                } else {
                    Some(p)
                }
            }
        };
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidSequence(format!(
                "interval {v} is not positive and finite"
            )));
        }
        Ok(TimingDictionary {
            pin_length,
            pattern,
            fingerprint,
            pins,
            values,
        })
    }
}

/// Predicted interval for every ordered key pair, indexed by `KeyId::index`.
pub fn prediction_table(model: &FittsModel, layout: &KeypadLayout) -> [[f64; 11]; 11] {
    let mut t = [[0.0; 11]; 11];
    for from in KeyId::ALL {
        for to in KeyId::ALL {
            t[from.index()][to.index()] = predict_interkey(model, layout, from, to);
        }
    }
    t
}

const BUILD_CHUNK_ROWS: usize = 4096;

/// Predicted sequences for all `10^l` PINs keyed in the standard way.
pub fn build_dictionary(model: &FittsModel, layout: &KeypadLayout, pin_length: usize) -> Result<TimingDictionary> {
    build_dictionary_with(model, layout, pin_length, EntryPattern::Standard)
}

pub fn build_dictionary_with(
    model: &FittsModel,
    layout: &KeypadLayout,
    pin_length: usize,
    pattern: EntryPattern,
) -> Result<TimingDictionary> {
    check_length(pin_length)?;
    let table = prediction_table(model, layout);
    let width = pattern.width(pin_length);
    let rows = space_size(pin_length) as usize;
    let mut values = vec![0.0f64; rows * width];
    values
        .par_chunks_mut(width * BUILD_CHUNK_ROWS)
        .enumerate()
        .for_each(|(chunk, out)| {
            let first = chunk * BUILD_CHUNK_ROWS;
            let mut keys = vec![0usize; width + 1];
            for (r, row) in out.chunks_exact_mut(width).enumerate() {
                key_indices((first + r) as u64, pin_length, pattern, &mut keys);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = table[keys[j]][keys[j + 1]];
                }
            }
        });
    Ok(TimingDictionary {
        pin_length,
        pattern,
        fingerprint: ModelFingerprint::of(model, layout),
        pins: None,
        values,
    })
}

fn key_indices(mut value: u64, len: usize, pattern: EntryPattern, keys: &mut [usize]) {
    const ENTER: usize = 10;
    match pattern {
        EntryPattern::Standard => {
            for j in (0..len).rev() {
                keys[j] = (value % 10) as usize;
                value /= 10;
            }
            keys[len] = ENTER;
        }
        EntryPattern::Interleaved { .. } => {
            for j in (0..len).rev() {
                keys[2 * j] = (value % 10) as usize;
                keys[2 * j + 1] = ENTER;
                value /= 10;
            }
            for k in keys.iter_mut().skip(2 * len) {
                *k = ENTER;
            }
        }
    }
}

/// Keeps the entries whose digits satisfy every constraint, in order.
pub fn reduce_dictionary(dict: &TimingDictionary, constraints: &[DigitConstraint]) -> Result<TimingDictionary> {
    validate_constraints(constraints, dict.pin_length)?;
    if constraints.is_empty() {
        return Ok(dict.clone());
    }
    let l = dict.pin_length;
    let masks: Vec<(u64, u64)> = constraints
        .iter()
        .map(|c| (10u64.pow((l - c.position) as u32), c.digit as u64))
        .collect();
    let keep = |v: u64| masks.iter().all(|&(scale, digit)| (v / scale) % 10 == digit);
    let w = dict.width();
    let mut pins = Vec::new();
    let mut values = Vec::new();
    for i in 0..dict.len() {
        let v = dict.pin_value(i);
        if keep(v) {
            pins.push(v);
            values.extend_from_slice(&dict.values[i * w..(i + 1) * w]);
        }
    }
    Ok(TimingDictionary {
        pin_length: l,
        pattern: dict.pattern,
        fingerprint: dict.fingerprint.clone(),
        pins: if pins.len() as u64 == space_size(l) {
            None
        } else {
            Some(pins)
        },
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictFormat {
    Text,
    Binary,
}

pub fn save_dictionary<W: Write>(dict: &TimingDictionary, format: DictFormat, sink: &mut W) -> Result<()> {
    if dict.pattern != EntryPattern::Standard {
        return Err(Error::Unsupported(
            "only standard-entry dictionaries can be saved".into(),
        ));
    }
    match format {
        DictFormat::Text => write_text(dict, sink),
        DictFormat::Binary => write_binary(dict, sink),
    }
}

/// Reads either format, detected from the leading bytes.
pub fn load_dictionary<R: Read>(source: &mut R) -> Result<TimingDictionary> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.starts_with(BINARY_MAGIC) {
        read_binary(&bytes)
    } else {
        let text =
            std::str::from_utf8(&bytes).map_err(|_| Error::BadHeader("neither binary magic nor UTF-8 text".into()))?;
        read_text(text)
    }
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn from_hex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
    }
    Some(out)
}

fn write_text<W: Write>(dict: &TimingDictionary, sink: &mut W) -> Result<()> {
    let fp = &dict.fingerprint;
    let mut out = std::io::BufWriter::new(sink);
    writeln!(
        out,
        "{TEXT_TAG} length={} a={} b={} layout={}",
        dict.pin_length, fp.a, fp.b, fp.layout_name
    )?;
    if let Some(h) = &fp.layout_hash {
        writeln!(out, "# layout_hash={}", to_hex(h))?;
    }
    let mut line = String::with_capacity(16 + 10 * dict.width());
    for (pin, row) in dict.entries() {
        line.clear();
        line.push_str(&pin.to_string());
        for v in row {
            line.push_str(&format!(",{v:.4}"));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_text(text: &str) -> Result<TimingDictionary> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::BadHeader("empty file".into()))?;
    let rest = header
        .strip_prefix(TEXT_TAG)
        .ok_or_else(|| Error::BadHeader(header.to_string()))?;
    let mut length = None;
    let mut a = None;
    let mut b = None;
    let mut layout = None;
    for field in rest.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::BadHeader(field.to_string()))?;
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::BadHeader(field.to_string()));
        match k {
            "length" => length = Some(v.parse::<usize>().map_err(|_| Error::BadHeader(field.to_string()))?),
            "a" => a = Some(num(v)?),
            "b" => b = Some(num(v)?),
            "layout" => layout = Some(v.to_string()),
            _ => {}
        }
    }
    let (Some(l), Some(a), Some(b), Some(layout_name)) = (length, a, b, layout) else {
        return Err(Error::BadHeader("header needs length, a, b and layout".into()));
    };
    check_length(l)?;
    let mut layout_hash = None;
    let mut pins = Vec::new();
    let mut values = Vec::new();
    for (i, raw) in lines {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(h) = c.trim().strip_prefix("layout_hash=") {
                layout_hash = Some(from_hex(h.trim()).ok_or_else(|| parse_err(lineno, "malformed layout hash"))?);
            }
            continue;
        }
        let mut fields = line.split(',');
        let pin_text = fields.next().unwrap_or_default().trim();
        let pin: Pin = pin_text
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad PIN {pin_text:?}")))?;
        if pin.len() != l {
            return Err(parse_err(lineno, format!("PIN {pin} is not {l} digits")));
        }
        let before = values.len();
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("malformed value {f:?}")))?;
            values.push(v);
        }
        if values.len() - before != l {
            return Err(parse_err(
                lineno,
                format!("expected {l} values, found {}", values.len() - before),
            ));
        }
        pins.push(pin.value());
    }
    TimingDictionary::from_parts(
        l,
        EntryPattern::Standard,
        ModelFingerprint {
            a,
            b,
            layout_name,
            layout_hash,
        },
        Some(pins),
        values,
    )
}

fn write_binary<W: Write>(dict: &TimingDictionary, sink: &mut W) -> Result<()> {
    let mut out = std::io::BufWriter::new(sink);
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&[dict.pin_length as u8])?;
    out.write_all(&(dict.len() as u64).to_le_bytes())?;
    out.write_all(&dict.fingerprint.a.to_le_bytes())?;
    out.write_all(&dict.fingerprint.b.to_le_bytes())?;
    out.write_all(&dict.fingerprint.layout_hash.unwrap_or([0u8; 32]))?;
    let complete = dict.is_complete();
    for i in 0..dict.len() {
        if !complete {
            let v = dict.pin_value(i);
            let v =
                u32::try_from(v).map_err(|_| Error::Unsupported(format!("PIN value {v} exceeds the u32 row index")))?;
            out.write_all(&v.to_le_bytes())?;
        }
        for x in dict.row(i) {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::UnexpectedEof)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::UnexpectedEof)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

fn read_binary(bytes: &[u8]) -> Result<TimingDictionary> {
    let mut cur = ByteCursor { bytes, pos: 0 };
    cur.take(BINARY_MAGIC.len())?;
    let l = cur.array::<1>()?[0] as usize;
    check_length(l)?;
    let count = u64::from_le_bytes(cur.array()?);
    let a = cur.f64()?;
    let b = cur.f64()?;
    let hash: [u8; 32] = cur.array()?;
    let space = space_size(l);
    if count > space {
        return Err(Error::BadHeader(format!("count {count} exceeds PIN space {space}")));
    }
    let complete = count == space;
    let row_bytes = l * 8 + if complete { 0 } else { 4 };
    if (bytes.len() - cur.pos) < count as usize * row_bytes {
        return Err(Error::UnexpectedEof);
    }
    let mut pins = if complete {
        None
    } else {
        Some(Vec::with_capacity(count as usize))
    };
    let mut values = Vec::with_capacity(count as usize * l);
    for _ in 0..count {
        if let Some(p) = pins.as_mut() {
            p.push(u32::from_le_bytes(cur.array()?) as u64);
        }
        for _ in 0..l {
            values.push(cur.f64()?);
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::BadHeader(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    TimingDictionary::from_parts(
        l,
        EntryPattern::Standard,
        ModelFingerprint {
            a,
            b,
            layout_name: String::new(),
            layout_hash: (hash != [0u8; 32]).then_some(hash),
        },
        pins,
        values,
    )
}
