//! Typing-time models and their least-squares fits.
//!
//! The base model predicts a key-pair interval as `a + b * I` where `I` is the
//! Fitts index of difficulty of the pair. The extended model adds indicator
//! terms for the last pair before ENTER and for pair positions 2, 3 and 4.

use std::collections::HashMap;

use crate::error::{parse_err, Error, Result};
use crate::geometry::{index_of_difficulty, KeyId, KeypadLayout};
use crate::pin::{Pin, TimingSequence};
use crate::stats::ols;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittsModel {
    /// Intercept (ms); the repeated-key time.
    pub a: f64,
    /// Slope (ms per bit of difficulty).
    pub b: f64,
}

impl FittsModel {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::OutOfRange(format!("intercept a = {a} must be positive")));
        }
        if !b.is_finite() {
            return Err(Error::OutOfRange(format!("slope b = {b} must be finite")));
        }
        Ok(FittsModel { a, b })
    }

    /// The model fitted on the reference training sessions.
    pub fn reference() -> Self {
        FittsModel {
            a: 135.9120,
            b: 47.7334,
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        FittsModel::new(self.a * factor, self.b * factor)
    }
}

/// `a + b*I + c*E + d*S1 + e*S2 + f*S3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl ExtendedModel {
    pub fn new(coefficients: [f64; 6]) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::OutOfRange("extended model coefficients must be finite".into()));
        }
        let [a, b, c, d, e, f] = coefficients;
        Ok(ExtendedModel { a, b, c, d, e, f })
    }

    pub fn coefficients(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    pub fn base(&self) -> FittsModel {
        FittsModel { a: self.a, b: self.b }
    }
}

impl From<FittsModel> for ExtendedModel {
    fn from(m: FittsModel) -> Self {
        ExtendedModel {
            a: m.a,
            b: m.b,
            c: 0.0,
            d: 0.0,
            e: 0.0,
            f: 0.0,
        }
    }
}

/// Position indicators `[E, S1, S2, S3]` for a 1-based pair position.
pub fn position_indicators(position: usize, pin_length: usize) -> [f64; 4] {
    let ind = |cond: bool| if cond { 1.0 } else { 0.0 };
    [
        ind(position == pin_length),
        ind(position == 2),
        ind(position == 3),
        ind(position == 4),
    ]
}

pub fn predict_interkey(model: &FittsModel, layout: &KeypadLayout, from: KeyId, to: KeyId) -> f64 {
    if from == to {
        return model.a;
    }
    model.a + model.b * index_of_difficulty(layout, from, to)
}

pub fn predict_extended(
    model: &ExtendedModel,
    layout: &KeypadLayout,
    from: KeyId,
    to: KeyId,
    position: usize,
    pin_length: usize,
) -> f64 {
    let [e, s1, s2, s3] = position_indicators(position, pin_length);
    predict_interkey(&model.base(), layout, from, to) + model.c * e + model.d * s1 + model.e * s2 + model.f * s3
}

/// One observed key-pair interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub from: KeyId,
    pub to: KeyId,
    pub observed_dt: f64,
    /// 1-based index of the pair within its entry; `pin_length` marks the
    /// last digit to ENTER.
    pub pair_position: Option<usize>,
    pub pin_length: usize,
}

impl TrainingSample {
    fn validate(&self, index: usize) -> Result<()> {
        if !(self.observed_dt > 0.0) || !self.observed_dt.is_finite() {
            return Err(Error::InvalidSample {
                index,
                msg: format!("interval {} must be positive", self.observed_dt),
            });
        }
        if let Some(p) = self.pair_position {
            if p == 0 || p > self.pin_length {
                return Err(Error::InvalidSample {
                    index,
                    msg: format!("pair position {p} outside 1..={}", self.pin_length),
                });
            }
        }
        Ok(())
    }
}

/// Splits one standard entry (digits then ENTER) into per-pair samples.
pub fn samples_from_entry(pin: &Pin, sequence: &TimingSequence) -> Result<Vec<TrainingSample>> {
    let l = pin.len();
    if sequence.len() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            actual: sequence.len(),
        });
    }
    let mut keys = pin.keys();
    keys.push(KeyId::Enter);
    Ok((0..l)
        .map(|j| TrainingSample {
            from: keys[j],
            to: keys[j + 1],
            observed_dt: sequence[j],
            pair_position: Some(j + 1),
            pin_length: l,
        })
        .collect())
}

/// Coefficients and significance tests for a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub parameter_names: Vec<&'static str>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_statistics: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residual_sd: f64,
    pub n_samples: usize,
    pub warnings: Vec<String>,
}

impl FitReport {
    fn from_ols(names: Vec<&'static str>, fit: crate::stats::OlsFit) -> Self {
        FitReport {
            parameter_names: names,
            coefficients: fit.coefficients,
            standard_errors: fit.standard_errors,
            t_statistics: fit.t_statistics,
            p_values: fit.p_values,
            residual_sd: fit.residual_sd,
            n_samples: fit.n_samples,
            warnings: Vec::new(),
        }
    }

    /// Whether parameter `i` is significant at level `alpha`.
    pub fn significant(&self, i: usize, alpha: f64) -> bool {
        self.p_values[i] < alpha
    }

    /// A small table: `parameter,coefficient,std_error,t,p`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,coefficient,std_error,t,p\n");
        for i in 0..self.coefficients.len() {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.4},{:.6}\n",
                self.parameter_names[i],
                self.coefficients[i],
                self.standard_errors[i],
                self.t_statistics[i],
                self.p_values[i]
            ));
        }
        out.push_str(&format!("# residual_sd={:.6} n={}\n", self.residual_sd, self.n_samples));
        for w in &self.warnings {
            out.push_str(&format!("# warning: {w}\n"));
        }
        out
    }
}

fn validate_samples(samples: &[TrainingSample], min: usize) -> Result<()> {
    if samples.len() < min {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: min,
        });
    }
    samples.iter().enumerate().try_for_each(|(i, s)| s.validate(i))
}

/// Ordinary least squares of observed intervals on the index of difficulty.
pub fn fit_fitts(samples: &[TrainingSample], layout: &KeypadLayout) -> Result<(FittsModel, FitReport)> {
    validate_samples(samples, 3)?;
    let ids: Vec<f64> = samples
        .iter()
        .map(|s| index_of_difficulty(layout, s.from, s.to))
        .collect();
    if ids.iter().all(|i| *i == ids[0]) {
        return Err(Error::RankDeficient("all samples share one index of difficulty".into()));
    }
    let design: Vec<f64> = ids.iter().flat_map(|i| [1.0, *i]).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.observed_dt).collect();
    let fit = ols(&design, 2, &y)?;
    let mut report = FitReport::from_ols(vec!["a", "b"], fit);
    let (a, b) = (report.coefficients[0], report.coefficients[1]);
    if b < 0.0 {
        report
            .warnings
            .push(format!("negative slope b = {b:.4}: harder pairs predicted faster"));
    }
    let model = FittsModel::new(a, b)?;
    Ok((model, report))
}

/// Least squares over `[1, I, E, S1, S2, S3]`; every sample needs a pair
/// position and must come from an entry of `pin_length` digits.
pub fn fit_extended(
    samples: &[TrainingSample],
    layout: &KeypadLayout,
    pin_length: usize,
) -> Result<(ExtendedModel, FitReport)> {
    validate_samples(samples, 7)?;
    let mut design = Vec::with_capacity(samples.len() * 6);
    for (i, s) in samples.iter().enumerate() {
        let pos = s.pair_position.ok_or(Error::MissingPosition(i))?;
        if s.pin_length != pin_length {
            return Err(Error::InvalidSample {
                index: i,
                msg: format!("entry length {} differs from {pin_length}", s.pin_length),
            });
        }
        let [e, s1, s2, s3] = position_indicators(pos, pin_length);
        design.extend_from_slice(&[1.0, index_of_difficulty(layout, s.from, s.to), e, s1, s2, s3]);
    }
    let y: Vec<f64> = samples.iter().map(|s| s.observed_dt).collect();
    let fit = ols(&design, 6, &y)?;
    let report = FitReport::from_ols(vec!["a", "b", "c", "d", "e", "f"], fit);
    let c = &report.coefficients;
    let model = ExtendedModel::new([c[0], c[1], c[2], c[3], c[4], c[5]])?;
    Ok((model, report))
}

/// Key-down events of one PIN entry.
#[derive(Debug, Clone, PartialEq)]
pub struct KeystrokeSession {
    pub id: String,
    pub keys: Vec<KeyId>,
    pub key_down_ms: Vec<f64>,
}

impl KeystrokeSession {
    /// Consecutive key-down differences.
    pub fn intervals(&self) -> Vec<f64> {
        self.key_down_ms.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// True when ENTER appears at most once, as the final key.
    pub fn is_standard_entry(&self) -> bool {
        let n = self.keys.len();
        self.keys[..n - 1].iter().all(|k| *k != KeyId::Enter)
    }

    pub fn digit_count(&self) -> usize {
        self.keys.iter().filter(|k| **k != KeyId::Enter).count()
    }

    pub fn samples(&self) -> Vec<TrainingSample> {
        let standard = self.is_standard_entry();
        let pin_length = self.digit_count();
        self.intervals()
            .into_iter()
            .enumerate()
            .map(|(j, dt)| TrainingSample {
                from: self.keys[j],
                to: self.keys[j + 1],
                observed_dt: dt,
                pair_position: standard.then_some(j + 1),
                pin_length,
            })
            .collect()
    }
}

/// Parses `session_id,key,key_down_ms` lines into sessions, in order of first
/// appearance. Lines of a session may be interleaved with other sessions but
/// must be strictly increasing in time.
pub fn parse_keystroke_log(text: &str) -> Result<Vec<KeystrokeSession>> {
    let mut sessions: Vec<KeystrokeSession> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == "session_id,key,key_down_ms" {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let key: KeyId = fields[1].parse()?;
        let t: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("malformed timestamp {:?}", fields[2])))?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(parse_err(lineno, format!("timestamp {t} must be non-negative")));
        }
        let idx = *by_id.entry(fields[0].to_string()).or_insert_with(|| {
            sessions.push(KeystrokeSession {
                id: fields[0].to_string(),
                keys: Vec::new(),
                key_down_ms: Vec::new(),
            });
            sessions.len() - 1
        });
        let s = &mut sessions[idx];
        if let Some(&last) = s.key_down_ms.last() {
            if !(t > last) {
                return Err(Error::NonMonotonic {
                    session: s.id.clone(),
                    line: lineno,
                });
            }
        }
        s.keys.push(key);
        s.key_down_ms.push(t);
    }
    if let Some(s) = sessions.iter().find(|s| s.keys.len() < 2) {
        return Err(Error::SessionTooShort(s.id.clone()));
    }
    Ok(sessions)
}

/// Training samples from every consecutive key-down pair of every session.
pub fn ingest_keystroke_log(text: &str) -> Result<Vec<TrainingSample>> {
    Ok(parse_keystroke_log(text)?
        .iter()
        .flat_map(KeystrokeSession::samples)
        .collect())
}
