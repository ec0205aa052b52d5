//! Synthetic typists: noisy, speed-scaled, quantized timing sequences drawn
//! from a ground-truth model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::attack::ObservedEntry;
use crate::dictionary::{prediction_table, EntryPattern};
use crate::error::{Error, Result};
use crate::geometry::{KeyId, KeypadLayout};
use crate::model::{position_indicators, ExtendedModel, FittsModel};
use crate::pin::{Pin, TimingSequence};
use crate::seeds::derive_seed;

pub const DEFAULT_NOISE_SD: f64 = 25.0;
pub const DEFAULT_QUANTIZATION: f64 = 15.0;
pub const DEFAULT_MIN_INTERVAL: f64 = 30.0;
pub const DEFAULT_SPEED_RANGE: (f64, f64) = (0.7, 1.4);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypistProfile {
    pub speed_scale: f64,
    /// Standard deviation of the per-interval Gaussian jitter, ms.
    pub noise_sd: f64,
    /// Rounding grid in ms; 0 disables rounding.
    pub quantization: f64,
    /// Lower clamp on every interval, ms.
    pub min_interval: f64,
    pub seed: u64,
}

impl TypistProfile {
    pub fn new(speed_scale: f64, noise_sd: f64, quantization: f64, min_interval: f64, seed: u64) -> Result<Self> {
        let p = TypistProfile {
            speed_scale,
            noise_sd,
            quantization,
            min_interval,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unit speed, no noise, no rounding.
    pub fn exact(seed: u64) -> Self {
        TypistProfile {
            speed_scale: 1.0,
            noise_sd: 0.0,
            quantization: 0.0,
            min_interval: f64::MIN_POSITIVE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProfile(m));
        if !(self.speed_scale > 0.0) || !self.speed_scale.is_finite() {
            return bad(format!("speed scale {} must be positive", self.speed_scale));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return bad(format!("noise sd {} must be non-negative", self.noise_sd));
        }
        if !(self.quantization >= 0.0) || !self.quantization.is_finite() {
            return bad(format!("quantization {} must be non-negative", self.quantization));
        }
        if !(self.min_interval > 0.0) || !self.min_interval.is_finite() {
            return bad(format!("min interval {} must be positive", self.min_interval));
        }
        Ok(())
    }
}

/// Nearest multiple of `grid`, ties rounded up; identity when `grid` is 0.
pub fn quantize(x: f64, grid: f64) -> f64 {
    if grid > 0.0 {
        (x / grid + 0.5).floor() * grid
    } else {
        x
    }
}

/// Profiles for `n` subjects with log-uniform speeds in `speed_range` and
/// seeds derived from `seed`.
pub fn cohort_profiles(
    n: usize,
    seed: u64,
    speed_range: (f64, f64),
    noise_sd: f64,
    quantization: f64,
    min_interval: f64,
) -> Result<Vec<TypistProfile>> {
    let (lo, hi) = speed_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidProfile(format!("speed range [{lo}, {hi}] is invalid")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5350_4545]));
    (0..n)
        .map(|s| {
            let u: f64 = rng.random();
            let speed = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
            TypistProfile::new(
                speed,
                noise_sd,
                quantization,
                min_interval,
                derive_seed(seed, &[s as u64]),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruthModel {
    Fitts(FittsModel),
    Extended(ExtendedModel),
}

/// The generating model, layout and keying pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    model: TruthModel,
    layout: KeypadLayout,
    pattern: EntryPattern,
    table: [[f64; 11]; 11],
}

impl GroundTruth {
    pub fn new(model: TruthModel, layout: KeypadLayout, pattern: EntryPattern) -> Result<Self> {
        if matches!(model, TruthModel::Extended(_)) && pattern != EntryPattern::Standard {
            return Err(Error::Unsupported(
                "position terms are defined for the standard entry pattern only".into(),
            ));
        }
        let base = match &model {
            TruthModel::Fitts(m) => *m,
            TruthModel::Extended(m) => m.base(),
        };
        let table = prediction_table(&base, &layout);
        Ok(GroundTruth {
            model,
            layout,
            pattern,
            table,
        })
    }

    pub fn fitts(model: FittsModel, layout: KeypadLayout) -> Self {
        GroundTruth::new(TruthModel::Fitts(model), layout, EntryPattern::Standard).expect("standard pattern")
    }

    pub fn model(&self) -> &TruthModel {
        &self.model
    }

    pub fn layout(&self) -> &KeypadLayout {
        &self.layout
    }

    pub fn pattern(&self) -> EntryPattern {
        self.pattern
    }

    /// Noise-free sequence for `pin`.
    pub fn predict(&self, pin: &Pin) -> Vec<f64> {
        let keys = self.pattern.key_sequence(pin);
        let l = pin.len();
        keys.windows(2)
            .enumerate()
            .map(|(j, w)| {
                let base = self.table[w[0].index()][w[1].index()];
                match &self.model {
                    TruthModel::Fitts(_) => base,
                    TruthModel::Extended(m) => {
                        let [e, s1, s2, s3] = position_indicators(j + 1, l);
                        base + m.c * e + m.d * s1 + m.e * s2 + m.f * s3
                    }
                }
            })
            .collect()
    }
}

fn pin_keys_tag(pin: &Pin) -> [u64; 2] {
    [pin.value(), pin.len() as u64]
}

/// One entry of `pin`; deterministic in (profile seed, PIN, entry index).
pub fn simulate_entry(
    truth: &GroundTruth,
    pin: &Pin,
    profile: &TypistProfile,
    entry_index: u64,
) -> Result<TimingSequence> {
    profile.validate()?;
    let [v, l] = pin_keys_tag(pin);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(profile.seed, &[v, l, entry_index]));
    let values = truth
        .predict(pin)
        .into_iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = profile.speed_scale * p + profile.noise_sd * z;
            quantize(x, profile.quantization).max(profile.min_interval)
        })
        .collect();
    TimingSequence::new(values)
}

/// `k` entries of every PIN by one subject.
pub fn simulate_subject(
    truth: &GroundTruth,
    subject_id: &str,
    pins: &[Pin],
    profile: &TypistProfile,
    entries_per_pin: usize,
) -> Result<Vec<ObservedEntry>> {
    if entries_per_pin == 0 {
        return Err(Error::OutOfRange("entries per PIN must be at least 1".into()));
    }
    profile.validate()?;
    let jobs: Vec<(Pin, usize)> = pins
        .iter()
        .flat_map(|p| (0..entries_per_pin).map(move |e| (*p, e)))
        .collect();
    jobs.par_iter()
        .map(|(pin, e)| {
            Ok(ObservedEntry {
                case_id: format!("{subject_id}-{pin}-{e:02}"),
                subject_id: subject_id.to_string(),
                true_pin: Some(*pin),
                sequence: simulate_entry(truth, pin, profile, *e as u64)?,
            })
        })
        .collect()
}

/// Subject id for the `i`-th profile (0-based): `S001`, `S002`, ...
pub fn subject_id(i: usize) -> String {
    format!("S{:03}", i + 1)
}

/// Every profile types every PIN `k` times.
pub fn simulate_cohort(
    truth: &GroundTruth,
    pins: &[Pin],
    profiles: &[TypistProfile],
    entries_per_pin: usize,
) -> Result<Vec<ObservedEntry>> {
    if pins.is_empty() || profiles.is_empty() {
        return Err(Error::EmptyInput("cohort needs PINs and profiles".into()));
    }
    let mut out = Vec::with_capacity(pins.len() * profiles.len() * entries_per_pin);
    for (i, profile) in profiles.iter().enumerate() {
        out.extend(simulate_subject(truth, &subject_id(i), pins, profile, entries_per_pin)?);
    }
    Ok(out)
}

/// Keystroke log (`session_id,key,key_down_ms`) whose consecutive key-down
/// differences reproduce each entry; every session starts at 0.
pub fn export_keystroke_log(entries: &[ObservedEntry], pattern: EntryPattern) -> Result<String> {
    let mut out = String::from("session_id,key,key_down_ms\n");
    for e in entries {
        let pin = e
            .true_pin
            .ok_or_else(|| Error::Unsupported(format!("entry {} has no PIN to key", e.case_id)))?;
        let keys: Vec<KeyId> = pattern.key_sequence(&pin);
        if keys.len() != e.sequence.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: keys.len() - 1,
                actual: e.sequence.len(),
            });
        }
        let mut t = 0.0;
        for (j, key) in keys.iter().enumerate() {
            if j > 0 {
                t += e.sequence[j - 1];
            }
            out.push_str(&format!("{},{},{:?}\n", e.case_id, key, t));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::cosine_similarity;
    use crate::dictionary::build_dictionary;
    use crate::geometry::standard_numpad;
    use crate::model::parse_keystroke_log;

    fn truth() -> GroundTruth {
        GroundTruth::fitts(FittsModel::reference(), standard_numpad())
    }

    #[test]
    fn quantize_rounds_to_nearest_ties_up() {
        assert_eq!(quantize(232.9502, 15.0), 240.0);
        assert_eq!(quantize(232.4, 15.0), 225.0);
        assert_eq!(quantize(7.5, 15.0), 15.0);
        assert_eq!(quantize(7.4, 15.0), 0.0);
        assert_eq!(quantize(123.456, 0.0), 123.456);
    }

    #[test]
    fn noiseless_entry_is_dictionary_row() {
        let t = truth();
        let d = build_dictionary(&FittsModel::reference(), &standard_numpad(), 4).unwrap();
        let p = TypistProfile::exact(3);
        for v in [0u64, 1234, 5050, 9999] {
            let pin = Pin::new(v, 4).unwrap();
            let s = simulate_entry(&t, &pin, &p, 0).unwrap();
            assert_eq!(s.values(), d.get(&pin).unwrap());
        }
    }

    #[test]
    fn doubled_speed_keeps_direction() {
        let t = truth();
        let pin: Pin = "5081".parse().unwrap();
        let p = TypistProfile {
            speed_scale: 2.0,
            ..TypistProfile::exact(1)
        };
        let s = simulate_entry(&t, &pin, &p, 0).unwrap();
        assert_eq!(cosine_similarity(&s, &t.predict(&pin)).unwrap(), 1.0);
    }

    #[test]
    fn clamp_and_validation() {
        let t = truth();
        let p = TypistProfile::new(0.01, 0.0, 0.0, 30.0, 1).unwrap();
        let s = simulate_entry(&t, &"12".parse().unwrap(), &p, 0).unwrap();
        assert!(s.iter().all(|v| *v == 30.0));
        assert!(TypistProfile::new(0.0, 1.0, 0.0, 30.0, 1).is_err());
        assert!(TypistProfile::new(1.0, -1.0, 0.0, 30.0, 1).is_err());
        assert!(TypistProfile::new(1.0, 1.0, -15.0, 30.0, 1).is_err());
        assert!(TypistProfile::new(1.0, 1.0, 15.0, 0.0, 1).is_err());
    }

    #[test]
    fn cohort_cardinality_and_determinism() {
        let t = truth();
        let pins: Vec<Pin> = (0..50).map(|v| Pin::new(v * 97, 4).unwrap()).collect();
        let profiles = cohort_profiles(1, 11, DEFAULT_SPEED_RANGE, 25.0, 15.0, 30.0).unwrap();
        let a = simulate_cohort(&t, &pins, &profiles, 15).unwrap();
        assert_eq!(a.len(), 750);
        assert_eq!(a, simulate_cohort(&t, &pins, &profiles, 15).unwrap());
        let ids: std::collections::HashSet<_> = a.iter().map(|e| e.case_id.clone()).collect();
        assert_eq!(ids.len(), 750);
        assert!(simulate_cohort(&t, &[], &profiles, 15).is_err());
        assert!(simulate_cohort(&t, &pins, &profiles, 0).is_err());
    }

    #[test]
    fn speed_only_difference_gives_parallel_entries() {
        let t = truth();
        let pins: Vec<Pin> = (0..20).map(|v| Pin::new(v * 431, 4).unwrap()).collect();
        let slow = TypistProfile::new(1.0, 0.0, 0.0, 1e-9, 5).unwrap();
        let fast = TypistProfile {
            speed_scale: 0.75,
            ..slow
        };
        let a = simulate_cohort(&t, &pins, &[slow], 2).unwrap();
        let b = simulate_cohort(&t, &pins, &[fast], 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((cosine_similarity(&x.sequence, &y.sequence).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn profiles_speeds_in_range() {
        let ps = cohort_profiles(200, 4, (0.7, 1.4), 25.0, 15.0, 30.0).unwrap();
        assert!(ps.iter().all(|p| p.speed_scale >= 0.7 && p.speed_scale <= 1.4));
        let seeds: std::collections::HashSet<u64> = ps.iter().map(|p| p.seed).collect();
        assert_eq!(seeds.len(), 200);
        assert!(cohort_profiles(3, 4, (1.4, 0.7), 25.0, 15.0, 30.0).is_err());
    }

    #[test]
    fn export_example_and_round_trip() {
        let e = ObservedEntry {
            case_id: "c1".into(),
            subject_id: "S001".into(),
            true_pin: Some("50".parse().unwrap()),
            sequence: TimingSequence::new(vec![233.0, 233.0]).unwrap(),
        };
        let log = export_keystroke_log(std::slice::from_ref(&e), EntryPattern::Standard).unwrap();
        assert_eq!(
            log,
            "session_id,key,key_down_ms\nc1,5,0.0\nc1,0,233.0\nc1,ENTER,466.0\n"
        );
        let sessions = parse_keystroke_log(&log).unwrap();
        assert_eq!(sessions[0].intervals(), vec![233.0, 233.0]);
        assert_eq!(
            export_keystroke_log(&[], EntryPattern::Standard).unwrap(),
            "session_id,key,key_down_ms\n"
        );
    }

    #[test]
    fn interleaved_truth_predicts_wider_sequences() {
        let g = GroundTruth::new(
            TruthModel::Fitts(FittsModel::reference()),
            standard_numpad(),
            EntryPattern::Interleaved { final_double: true },
        )
        .unwrap();
        assert_eq!(g.predict(&"1234".parse().unwrap()).len(), 9);
        assert!(GroundTruth::new(
            TruthModel::Extended(FittsModel::reference().into()),
            standard_numpad(),
            EntryPattern::Interleaved { final_double: false },
        )
        .is_err());
    }
}
