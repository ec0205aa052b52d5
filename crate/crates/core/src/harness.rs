//! Experiment orchestration: general, targeted, multi-entry, known-digits and
//! countermeasure evaluations over simulated (or supplied) cohorts.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attack::{
    random_baseline, rank_of_pin, run_attack, score_candidates, success_curve, AttackMode, AttackOutcome,
    ObservedEntry, SimilarityMetric,
};
use crate::dictionary::{build_dictionary, build_dictionary_with, load_dictionary, EntryPattern, TimingDictionary};
use crate::error::{Error, Result};
use crate::geometry::{circular_layout, load_layout, standard_numpad, KeypadLayout};
use crate::model::{fit_fitts, samples_from_entry, FittsModel, TrainingSample};
use crate::pin::{check_length, space_size, Pin};
use crate::seeds::derive_seed;
use crate::simulator::{cohort_profiles, simulate_subject, subject_id, GroundTruth, TruthModel};
use crate::strength::{partition_levels, strength_measure, strength_measure_sampled, LevelPartition};

const TAG_TRAIN: u64 = 0x5452_4149;
const TAG_COHORT: u64 = 0x434f_484f;
const TAG_PINS: u64 = 0x5049_4e53;
const TAG_TARGET: u64 = 0x5441_5247;
const TAG_STRENGTH: u64 = 0x5354_5247;

/// Counterparts per PIN for the sampled strength estimate when none is given.
pub const DEFAULT_STRENGTH_SAMPLES: usize = 100_000;
/// Counterparts per PIN used by `strength = auto` above length 4.
pub const AUTO_STRENGTH_SAMPLES: usize = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LayoutSpec {
    Standard,
    Circular(f64),
    File(PathBuf),
}

impl LayoutSpec {
    pub fn resolve(&self) -> Result<KeypadLayout> {
        match self {
            LayoutSpec::Standard => Ok(standard_numpad()),
            LayoutSpec::Circular(r) => circular_layout(*r, true),
            LayoutSpec::File(p) => load_layout(&read_file(p)?),
        }
    }
}

impl std::fmt::Display for LayoutSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayoutSpec::Standard => write!(f, "standard"),
            LayoutSpec::Circular(r) => write!(f, "circular:{r}"),
            LayoutSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for LayoutSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "standard" {
            return Ok(LayoutSpec::Standard);
        }
        if s == "circular" {
            return Ok(LayoutSpec::Circular(1.0));
        }
        if let Some(r) = s.strip_prefix("circular:") {
            let r: f64 = r
                .parse()
                .map_err(|_| Error::InvalidPlan(format!("bad circular radius {r:?}")))?;
            return Ok(LayoutSpec::Circular(r));
        }
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(LayoutSpec::File(p.into()));
        }
        Err(Error::InvalidPlan(format!("unknown layout {s:?}")))
    }
}

/// Where the attacker's dictionary comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DictSource {
    /// Fitted from a separate simulated training cohort.
    Train,
    /// The ground-truth model itself.
    Model,
    File(PathBuf),
}

impl std::fmt::Display for DictSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DictSource::Train => write!(f, "train"),
            DictSource::Model => write!(f, "model"),
            DictSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for DictSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(DictSource::Train),
            "model" => Ok(DictSource::Model),
            _ => s
                .strip_prefix("file:")
                .map(|p| DictSource::File(p.into()))
                .ok_or_else(|| Error::InvalidPlan(format!("unknown dictionary source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CohortSource {
    Simulated,
    /// An observed-entry file with true PINs.
    File(PathBuf),
}

impl std::fmt::Display for CohortSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CohortSource::Simulated => write!(f, "simulated"),
            CohortSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for CohortSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "simulated" {
            return Ok(CohortSource::Simulated);
        }
        s.strip_prefix("file:")
            .map(|p| CohortSource::File(p.into()))
            .ok_or_else(|| Error::InvalidPlan(format!("unknown cohort source {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrengthMode {
    /// Exact up to length 4, sampled above.
    Auto,
    Exact,
    Sampled(usize),
}

impl std::fmt::Display for StrengthMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StrengthMode::Auto => write!(f, "auto"),
            StrengthMode::Exact => write!(f, "exact"),
            StrengthMode::Sampled(m) => write!(f, "sampled:{m}"),
        }
    }
}

impl FromStr for StrengthMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(StrengthMode::Auto),
            "exact" => Ok(StrengthMode::Exact),
            "sampled" => Ok(StrengthMode::Sampled(DEFAULT_STRENGTH_SAMPLES)),
            _ => s
                .strip_prefix("sampled:")
                .and_then(|m| m.parse().ok())
                .filter(|m| *m > 0)
                .map(StrengthMode::Sampled)
                .ok_or_else(|| Error::InvalidPlan(format!("unknown strength mode {s:?}"))),
        }
    }
}

/// Every knob of an experiment. Parsed from `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub pin_length: usize,
    pub seed: u64,
    pub metric: SimilarityMetric,
    pub truth_a: f64,
    pub truth_b: f64,
    pub layout: LayoutSpec,
    pub dictionary: DictSource,
    pub cohort: CohortSource,
    pub train_subjects: usize,
    pub train_pins: usize,
    pub train_entries: usize,
    pub subjects: usize,
    pub entries_per_pin: usize,
    /// PINs drawn from each strength level (capped at the level size).
    pub pins_per_level: usize,
    /// When positive, draw this many PINs uniformly instead of per level.
    pub uniform_pins: usize,
    pub noise_sd: f64,
    pub quantization: f64,
    pub min_interval: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub xs: Vec<usize>,
    pub strength: StrengthMode,
    pub multi_k: usize,
    pub revealed: usize,
    pub targeted_entries: usize,
    pub final_double: bool,
    pub strict: bool,
    pub disjoint: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            pin_length: 4,
            seed: 1,
            metric: SimilarityMetric::Cosine,
            truth_a: FittsModel::reference().a,
            truth_b: FittsModel::reference().b,
            layout: LayoutSpec::Standard,
            dictionary: DictSource::Train,
            cohort: CohortSource::Simulated,
            train_subjects: 5,
            train_pins: 20,
            train_entries: 15,
            subjects: 10,
            entries_per_pin: 15,
            pins_per_level: 200,
            uniform_pins: 0,
            noise_sd: crate::simulator::DEFAULT_NOISE_SD,
            quantization: crate::simulator::DEFAULT_QUANTIZATION,
            min_interval: crate::simulator::DEFAULT_MIN_INTERVAL,
            speed_min: crate::simulator::DEFAULT_SPEED_RANGE.0,
            speed_max: crate::simulator::DEFAULT_SPEED_RANGE.1,
            xs: vec![1, 2, 3, 5, 10, 20, 50, 100, 200, 500, 1000],
            strength: StrengthMode::Auto,
            multi_k: 10,
            revealed: 1,
            targeted_entries: 15,
            final_double: true,
            strict: true,
            disjoint: true,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidPlan(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidPlan(format!("bad value {value:?} for {key}"))),
    }
}

impl ExperimentPlan {
    /// Every accepted key.
    pub const KEYS: [&'static str; 28] = [
        "length",
        "seed",
        "metric",
        "truth_a",
        "truth_b",
        "layout",
        "dictionary",
        "cohort",
        "train_subjects",
        "train_pins",
        "train_entries",
        "subjects",
        "entries_per_pin",
        "pins_per_level",
        "uniform_pins",
        "noise_sd",
        "quantization",
        "min_interval",
        "speed_min",
        "speed_max",
        "xs",
        "strength",
        "multi_k",
        "revealed",
        "targeted_entries",
        "final_double",
        "strict",
        "disjoint",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "length" => self.pin_length = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "metric" => self.metric = v.parse()?,
            "truth_a" => self.truth_a = parse_value(key, v)?,
            "truth_b" => self.truth_b = parse_value(key, v)?,
            "layout" => self.layout = v.parse()?,
            "dictionary" => self.dictionary = v.parse()?,
            "cohort" => self.cohort = v.parse()?,
            "train_subjects" => self.train_subjects = parse_value(key, v)?,
            "train_pins" => self.train_pins = parse_value(key, v)?,
            "train_entries" => self.train_entries = parse_value(key, v)?,
            "subjects" => self.subjects = parse_value(key, v)?,
            "entries_per_pin" => self.entries_per_pin = parse_value(key, v)?,
            "pins_per_level" => self.pins_per_level = parse_value(key, v)?,
            "uniform_pins" => self.uniform_pins = parse_value(key, v)?,
            "noise_sd" => self.noise_sd = parse_value(key, v)?,
            "quantization" => self.quantization = parse_value(key, v)?,
            "min_interval" => self.min_interval = parse_value(key, v)?,
            "speed_min" => self.speed_min = parse_value(key, v)?,
            "speed_max" => self.speed_max = parse_value(key, v)?,
            "xs" => {
                self.xs = v
                    .split(',')
                    .map(|x| parse_value(key, x.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "strength" => self.strength = v.parse()?,
            "multi_k" => self.multi_k = parse_value(key, v)?,
            "revealed" => self.revealed = parse_value(key, v)?,
            "targeted_entries" => self.targeted_entries = parse_value(key, v)?,
            "final_double" => self.final_double = parse_bool(key, v)?,
            "strict" => self.strict = parse_bool(key, v)?,
            "disjoint" => self.disjoint = parse_bool(key, v)?,
            other => return Err(Error::InvalidPlan(format!("unknown plan key {other:?}"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut plan = ExperimentPlan::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidPlan(format!("line {}: expected key = value", i + 1)))?;
            plan.set(k, v)?;
        }
        plan.validate()?;
        Ok(plan)
    }

    /// Canonical `key = value` text; parses back to an equal plan.
    pub fn to_text(&self) -> String {
        let xs: Vec<String> = self.xs.iter().map(|x| x.to_string()).collect();
        let values: [String; 28] = [
            self.pin_length.to_string(),
            self.seed.to_string(),
            self.metric.to_string(),
            format!("{:?}", self.truth_a),
            format!("{:?}", self.truth_b),
            self.layout.to_string(),
            self.dictionary.to_string(),
            self.cohort.to_string(),
            self.train_subjects.to_string(),
            self.train_pins.to_string(),
            self.train_entries.to_string(),
            self.subjects.to_string(),
            self.entries_per_pin.to_string(),
            self.pins_per_level.to_string(),
            self.uniform_pins.to_string(),
            format!("{:?}", self.noise_sd),
            format!("{:?}", self.quantization),
            format!("{:?}", self.min_interval),
            format!("{:?}", self.speed_min),
            format!("{:?}", self.speed_max),
            xs.join(","),
            self.strength.to_string(),
            self.multi_k.to_string(),
            self.revealed.to_string(),
            self.targeted_entries.to_string(),
            self.final_double.to_string(),
            self.strict.to_string(),
            self.disjoint.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidPlan(m.to_string()));
        check_length(self.pin_length).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        if self.pin_length < 2 {
            return bad("length must be at least 2");
        }
        if self.xs.is_empty() || self.xs[0] == 0 || self.xs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("xs must be positive and strictly ascending");
        }
        if self.subjects == 0 || self.entries_per_pin == 0 {
            return bad("subjects and entries_per_pin must be at least 1");
        }
        if self.uniform_pins == 0 && self.pins_per_level == 0 {
            return bad("pins_per_level must be at least 1");
        }
        if self.dictionary == DictSource::Train
            && (self.train_subjects == 0 || self.train_pins == 0 || self.train_entries == 0)
        {
            return bad("training cohort must be non-empty");
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return bad("speed range must satisfy 0 < speed_min <= speed_max");
        }
        if self.multi_k == 0 || self.targeted_entries == 0 {
            return bad("multi_k and targeted_entries must be at least 1");
        }
        FittsModel::new(self.truth_a, self.truth_b).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        Ok(())
    }

    fn truth_model(&self) -> FittsModel {
        FittsModel::new(self.truth_a, self.truth_b).expect("validated")
    }
}

/// One success curve with its case count.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub label: String,
    pub cases: usize,
    pub curve: Vec<(usize, f64)>,
    pub mean_rank: f64,
}

impl CurveSet {
    fn from_outcomes(label: impl Into<String>, outcomes: &[&AttackOutcome], xs: &[usize]) -> Self {
        let owned: Vec<AttackOutcome> = outcomes.iter().map(|o| (*o).clone()).collect();
        let ranks: Vec<usize> = owned.iter().filter_map(|o| o.rank).collect();
        let mean_rank = if ranks.is_empty() {
            f64::NAN
        } else {
            ranks.iter().map(|r| *r as f64).sum::<f64>() / ranks.len() as f64
        };
        CurveSet {
            label: label.into(),
            cases: ranks.len(),
            curve: success_curve(&owned, xs),
            mean_rank,
        }
    }

    /// Success rate at `x`, if `x` is on the curve.
    pub fn at(&self, x: usize) -> Option<f64> {
        self.curve.iter().find(|(xx, _)| *xx == x).map(|(_, r)| *r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub pin_length: usize,
    pub known_digits: usize,
    /// Dictionary size each case is ranked against.
    pub candidates: usize,
    pub metadata: Vec<(String, String)>,
    pub levels: Vec<CurveSet>,
    pub aggregate: CurveSet,
    pub baseline: Vec<(usize, f64)>,
    /// The general attack on the same cohort, where it is the natural reference.
    pub comparison: Option<CurveSet>,
    pub notes: Vec<String>,
    /// Stage wall-clock times in seconds; not part of the serialized report.
    pub timings: Vec<(String, f64)>,
}

impl ExperimentReport {
    /// Aggregate success divided by the baseline at each x.
    pub fn improvement(&self) -> Vec<(usize, f64)> {
        self.aggregate
            .curve
            .iter()
            .zip(&self.baseline)
            .map(|((x, s), (_, b))| (*x, s / b))
            .collect()
    }

    /// Deterministic text form: metadata, then `curve,x,success` rows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# pinforge report v1");
        let _ = writeln!(out, "# experiment = {}", self.experiment);
        let _ = writeln!(out, "# length = {}", self.pin_length);
        let _ = writeln!(out, "# known_digits = {}", self.known_digits);
        let _ = writeln!(out, "# candidates = {}", self.candidates);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "# note: {n}");
        }
        let _ = writeln!(out, "curve,cases,mean_rank");
        let mut sets: Vec<&CurveSet> = self.levels.iter().collect();
        sets.push(&self.aggregate);
        sets.extend(self.comparison.iter());
        for s in &sets {
            let _ = writeln!(out, "{},{},{:.4}", s.label, s.cases, s.mean_rank);
        }
        let _ = writeln!(out, "curve,x,success_rate");
        for s in &sets {
            for (x, r) in &s.curve {
                let _ = writeln!(out, "{},{x},{r:.6}", s.label);
            }
        }
        for (x, b) in &self.baseline {
            let _ = writeln!(out, "baseline,{x},{b:.6}");
        }
        for (x, r) in self.improvement() {
            let _ = writeln!(out, "improvement,{x},{r:.2}");
        }
        out
    }
}

/// Errors when the two subject sets share an id.
pub fn ensure_disjoint<'a>(
    training: impl IntoIterator<Item = &'a str>,
    testing: impl IntoIterator<Item = &'a str>,
) -> Result<()> {
    let train: HashSet<&str> = training.into_iter().collect();
    let mut shared: Vec<&str> = testing.into_iter().filter(|s| train.contains(s)).collect();
    shared.sort_unstable();
    shared.dedup();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::SubjectOverlap(shared.join(" ")))
    }
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Ground-truth strength levels for the plan's model and layout.
pub fn truth_partition(plan: &ExperimentPlan) -> Result<LevelPartition> {
    let layout = plan.layout.resolve()?;
    let dict = build_dictionary(&plan.truth_model(), &layout, plan.pin_length)?;
    let mode = match plan.strength {
        StrengthMode::Auto if plan.pin_length <= 4 => StrengthMode::Exact,
        StrengthMode::Auto => StrengthMode::Sampled(AUTO_STRENGTH_SAMPLES),
        m => m,
    };
    let profile = match mode {
        StrengthMode::Sampled(m) => strength_measure_sampled(&dict, m, derive_seed(plan.seed, &[TAG_STRENGTH]))?,
        _ => strength_measure(&dict)?,
    };
    partition_levels(&profile)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String> {
    String::from_utf8(read_bytes(path)?).map_err(|_| Error::Io(format!("{}: not valid UTF-8", path.display())))
}

fn distinct_uniform_pins(n: usize, pin_length: usize, rng: &mut ChaCha8Rng) -> Vec<Pin> {
    let space = space_size(pin_length);
    let n = (n as u64).min(space) as usize;
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = rng.random_range(0..space);
        if seen.insert(v) {
            out.push(Pin::new(v, pin_length).expect("in range"));
        }
    }
    out
}

fn level_pins(partition: &LevelPartition, per_level: usize, rng: &mut ChaCha8Rng) -> Vec<Pin> {
    let mut out = Vec::new();
    for level in 1..=partition.level_count() {
        let mut pins = partition.pins_in_level(level);
        pins.shuffle(rng);
        pins.truncate(per_level);
        pins.sort_unstable();
        out.extend(pins);
    }
    out
}

/// A prepared cohort with its attacker-side dictionary.
#[derive(Debug, Clone)]
pub struct Experiment {
    plan: ExperimentPlan,
    layout: KeypadLayout,
    pattern: EntryPattern,
    partition: Option<LevelPartition>,
    cohort: Vec<ObservedEntry>,
    attack_model: Option<FittsModel>,
    dictionary: TimingDictionary,
    metadata: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
}

impl Experiment {
    /// Standard-entry experiment. `partition` may be supplied to avoid
    /// recomputing the strength levels of the same model and layout.
    pub fn prepare(plan: &ExperimentPlan, partition: Option<LevelPartition>) -> Result<Self> {
        Self::prepare_inner(plan, EntryPattern::Standard, partition)
    }

    fn prepare_inner(plan: &ExperimentPlan, pattern: EntryPattern, partition: Option<LevelPartition>) -> Result<Self> {
        plan.validate()?;
        let l = plan.pin_length;
        let layout = plan.layout.resolve()?;
        let truth_model = plan.truth_model();
        let truth = GroundTruth::new(TruthModel::Fitts(truth_model), layout.clone(), pattern)?;
        let mut timings = Vec::new();
        let mut metadata = vec![
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("seed".to_string(), plan.seed.to_string()),
            ("metric".to_string(), plan.metric.to_string()),
            (
                "truth".to_string(),
                format!("a={:?} b={:?}", truth_model.a, truth_model.b),
            ),
            ("layout".to_string(), plan.layout.to_string()),
        ];

        let uniform = plan.uniform_pins > 0 || pattern != EntryPattern::Standard;
        let partition = match partition {
            Some(p) if p.pin_length() != l => {
                return Err(Error::DimensionMismatch {
                    expected: l,
                    actual: p.pin_length(),
                })
            }
            Some(p) => Some(p),
            None if uniform && plan.cohort == CohortSource::Simulated => None,
            None => {
                let t = Instant::now();
                let p = truth_partition(plan)?;
                timings.push(("strength".to_string(), elapsed(t)));
                Some(p)
            }
        };

        let t = Instant::now();
        let cohort = match &plan.cohort {
            CohortSource::Simulated => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, &[TAG_PINS]));
                let pins = if uniform {
                    let n = if plan.uniform_pins > 0 {
                        plan.uniform_pins
                    } else {
                        plan.pins_per_level * (l - 1)
                    };
                    distinct_uniform_pins(n, l, &mut rng)
                } else {
                    level_pins(partition.as_ref().expect("computed"), plan.pins_per_level, &mut rng)
                };
                let profiles = cohort_profiles(
                    plan.subjects,
                    derive_seed(plan.seed, &[TAG_COHORT]),
                    (plan.speed_min, plan.speed_max),
                    plan.noise_sd,
                    plan.quantization,
                    plan.min_interval,
                )?;
                let mut cohort = Vec::new();
                for (s, profile) in profiles.iter().enumerate() {
                    let mine: Vec<Pin> = pins.iter().skip(s).step_by(plan.subjects).copied().collect();
                    if !mine.is_empty() {
                        cohort.extend(simulate_subject(
                            &truth,
                            &subject_id(s),
                            &mine,
                            profile,
                            plan.entries_per_pin,
                        )?);
                    }
                }
                metadata.push((
                    "cohort".to_string(),
                    format!(
                        "simulated pins={} subjects={} entries_per_pin={} noise_sd={:?} quantization={:?} min_interval={:?} speed=[{:?},{:?}]",
                        pins.len(),
                        plan.subjects,
                        plan.entries_per_pin,
                        plan.noise_sd,
                        plan.quantization,
                        plan.min_interval,
                        plan.speed_min,
                        plan.speed_max
                    ),
                ));
                cohort
            }
            CohortSource::File(p) => {
                let entries = crate::attack::parse_observed_entries(&read_file(p)?)?;
                if let Some(e) = entries.iter().find(|e| e.true_pin.is_none()) {
                    return Err(Error::InvalidPlan(format!(
                        "cohort entry {} has no true PIN",
                        e.case_id
                    )));
                }
                metadata.push(("cohort".to_string(), format!("file entries={}", entries.len())));
                entries
            }
        };
        if cohort.is_empty() {
            return Err(Error::EmptyInput("cohort has no entries".into()));
        }
        timings.push(("cohort".to_string(), elapsed(t)));

        let t = Instant::now();
        let (attack_model, dictionary) = match &plan.dictionary {
            DictSource::Model => (
                Some(truth_model),
                build_dictionary_with(&truth_model, &layout, l, pattern)?,
            ),
            DictSource::Train => {
                let profiles = cohort_profiles(
                    plan.train_subjects,
                    derive_seed(plan.seed, &[TAG_TRAIN]),
                    (plan.speed_min, plan.speed_max),
                    plan.noise_sd,
                    plan.quantization,
                    plan.min_interval,
                )?;
                let standard = GroundTruth::fitts(truth_model, layout.clone());
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, &[TAG_TRAIN, TAG_PINS]));
                let mut ids = Vec::new();
                let mut samples: Vec<TrainingSample> = Vec::new();
                for (s, profile) in profiles.iter().enumerate() {
                    let id = format!("T{:03}", s + 1);
                    let pins = distinct_uniform_pins(plan.train_pins, l, &mut rng);
                    for e in simulate_subject(&standard, &id, &pins, profile, plan.train_entries)? {
                        samples.extend(samples_from_entry(&e.true_pin.expect("simulated"), &e.sequence)?);
                    }
                    ids.push(id);
                }
                if plan.disjoint {
                    ensure_disjoint(
                        ids.iter().map(String::as_str),
                        cohort.iter().map(|e| e.subject_id.as_str()),
                    )?;
                }
                let (model, report) = fit_fitts(&samples, &layout)?;
                metadata.push((
                    "attack_model".to_string(),
                    format!(
                        "fitted a={:.4} b={:.4} n={} subjects={}",
                        model.a,
                        model.b,
                        report.n_samples,
                        ids.len()
                    ),
                ));
                (Some(model), build_dictionary_with(&model, &layout, l, pattern)?)
            }
            DictSource::File(p) => {
                let d = load_dictionary(&mut read_bytes(p)?.as_slice())?;
                if d.pin_length() != l || d.pattern() != pattern {
                    return Err(Error::InvalidPlan(format!(
                        "dictionary file has length {} and pattern {:?}",
                        d.pin_length(),
                        d.pattern()
                    )));
                }
                metadata.push(("attack_model".to_string(), format!("file {}", d.fingerprint())));
                (None, d)
            }
        };
        timings.push(("dictionary".to_string(), elapsed(t)));

        Ok(Experiment {
            plan: plan.clone(),
            layout,
            pattern,
            partition,
            cohort,
            attack_model,
            dictionary,
            metadata,
            timings,
        })
    }

    pub fn plan(&self) -> &ExperimentPlan {
        &self.plan
    }

    pub fn cohort(&self) -> &[ObservedEntry] {
        &self.cohort
    }

    pub fn dictionary(&self) -> &TimingDictionary {
        &self.dictionary
    }

    /// The attacker's model, unless the dictionary came from a file.
    pub fn attack_model(&self) -> Option<&FittsModel> {
        self.attack_model.as_ref()
    }

    pub fn partition(&self) -> Option<&LevelPartition> {
        self.partition.as_ref()
    }

    fn level_of(&self, pin: &Option<Pin>) -> usize {
        match (&self.partition, pin) {
            (Some(p), Some(pin)) => p.level_of(pin),
            _ => 0,
        }
    }

    fn report(
        &self,
        experiment: &str,
        known_digits: usize,
        candidates: usize,
        cases: &[(usize, AttackOutcome)],
        timings: Vec<(String, f64)>,
    ) -> Result<ExperimentReport> {
        let l = self.plan.pin_length;
        let xs: Vec<usize> = self
            .plan
            .xs
            .iter()
            .copied()
            .filter(|x| *x as u64 <= space_size(l - known_digits))
            .collect();
        let mut notes = Vec::new();
        if xs.len() < self.plan.xs.len() {
            notes.push(format!("xs above {candidates} candidates dropped"));
        }
        let mut levels = Vec::new();
        if let Some(p) = self
            .partition
            .as_ref()
            .filter(|_| self.pattern == EntryPattern::Standard)
        {
            for level in 1..=p.level_count() {
                let members: Vec<&AttackOutcome> =
                    cases.iter().filter(|(lv, _)| *lv == level).map(|(_, o)| o).collect();
                if !members.is_empty() {
                    levels.push(CurveSet::from_outcomes(format!("level{level}"), &members, &xs));
                }
            }
        }
        let all: Vec<&AttackOutcome> = cases.iter().map(|(_, o)| o).collect();
        let aggregate = CurveSet::from_outcomes("aggregate", &all, &xs);
        let baseline = xs
            .iter()
            .map(|x| Ok((*x, random_baseline(l, known_digits, *x as u64)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut metadata = self.metadata.clone();
        metadata.push(("cases".to_string(), cases.len().to_string()));
        let mut all_timings = self.timings.clone();
        all_timings.extend(timings);
        Ok(ExperimentReport {
            experiment: experiment.to_string(),
            pin_length: l,
            known_digits,
            candidates,
            metadata,
            levels,
            aggregate,
            baseline,
            comparison: None,
            notes,
            timings: all_timings,
        })
    }

    fn general_outcomes(&self) -> Result<Vec<(usize, AttackOutcome)>> {
        let outcomes = run_attack(&self.dictionary, &self.cohort, &AttackMode::General, self.plan.metric)?;
        Ok(self
            .cohort
            .iter()
            .zip(outcomes)
            .map(|(e, o)| (self.level_of(&e.true_pin), o))
            .collect())
    }

    /// Every entry ranked against the attacker's dictionary.
    pub fn general(&self) -> Result<ExperimentReport> {
        let t = Instant::now();
        let cases = self.general_outcomes()?;
        let mut report = self.report(
            "general",
            0,
            self.dictionary.len(),
            &cases,
            vec![("attack".into(), elapsed(t))],
        )?;
        level_order_note(&mut report);
        Ok(report)
    }

    /// Per-subject models fitted from two other PINs the subject typed.
    pub fn targeted(&self) -> Result<ExperimentReport> {
        if self.pattern != EntryPattern::Standard {
            return Err(Error::Unsupported(
                "targeted attacks use the standard entry pattern".into(),
            ));
        }
        let t = Instant::now();
        let l = self.plan.pin_length;
        let groups = subject_pin_groups(&self.cohort);
        #[allow(clippy::type_complexity)]
        let mut by_subject: Vec<(&str, Vec<(Pin, &Vec<&ObservedEntry>)>)> = Vec::new();
        for ((subject, pin), members) in &groups {
            match by_subject.iter_mut().find(|(s, _)| s == subject) {
                Some((_, v)) => v.push((*pin, members)),
                None => by_subject.push((subject.as_str(), vec![(*pin, members)])),
            }
        }
        let jobs: Vec<(usize, usize)> = by_subject
            .iter()
            .enumerate()
            .flat_map(|(s, (_, pins))| (0..pins.len()).map(move |p| (s, p)))
            .collect();
        let per_job: Vec<Vec<(usize, AttackOutcome)>> = jobs
            .par_iter()
            .map(|&(s, p)| {
                let (subject, pins) = &by_subject[s];
                let (target, entries) = &pins[p];
                let model = self.targeted_model(subject, s, pins, p)?;
                let dict = build_dictionary(&model, &self.layout, l)?;
                entries
                    .iter()
                    .map(|e| {
                        let r = rank_of_pin(&dict, &e.sequence, self.plan.metric, target)?;
                        Ok((
                            self.level_of(&e.true_pin),
                            AttackOutcome {
                                case_id: e.case_id.clone(),
                                true_pin: e.true_pin,
                                rank: r.map(|r| r.0),
                                score: r.map(|r| r.1),
                                candidates: dict.len(),
                                consistent: true,
                            },
                        ))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let cases: Vec<(usize, AttackOutcome)> = per_job.into_iter().flatten().collect();
        let general = self.general_outcomes()?;
        let mut report = self.report(
            "targeted",
            0,
            space_size(l) as usize,
            &cases,
            vec![("attack".into(), elapsed(t))],
        )?;
        report.comparison = Some(self.comparison(&general, &report));
        difference_note(&mut report);
        Ok(report)
    }

    fn targeted_model(
        &self,
        subject: &str,
        subject_index: usize,
        pins: &[(Pin, &Vec<&ObservedEntry>)],
        target: usize,
    ) -> Result<FittsModel> {
        let mut others: Vec<usize> = (0..pins.len()).filter(|i| *i != target).collect();
        if others.len() < 2 {
            return Err(Error::InsufficientTraining(format!(
                "subject {subject} typed {} PINs; targeted attacks need 3",
                pins.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.plan.seed,
            &[TAG_TARGET, subject_index as u64, pins[target].0.value()],
        ));
        others.shuffle(&mut rng);
        for i in 0..others.len() {
            for j in (i + 1)..others.len() {
                let mut samples = Vec::new();
                for &k in &[others[i], others[j]] {
                    let (pin, entries) = &pins[k];
                    for e in entries.iter().take(self.plan.targeted_entries) {
                        samples.extend(samples_from_entry(pin, &e.sequence)?);
                    }
                }
                if let Ok((m, _)) = fit_fitts(&samples, &self.layout) {
                    return Ok(m);
                }
            }
        }
        Err(Error::InsufficientTraining(format!(
            "no pair of subject {subject}'s other PINs gives a usable fit"
        )))
    }

    fn comparison(&self, general: &[(usize, AttackOutcome)], report: &ExperimentReport) -> CurveSet {
        let all: Vec<&AttackOutcome> = general.iter().map(|(_, o)| o).collect();
        let xs: Vec<usize> = report.aggregate.curve.iter().map(|(x, _)| *x).collect();
        CurveSet::from_outcomes("general", &all, &xs)
    }

    /// Averages of `k` entries per (subject, PIN) ranked as one case.
    pub fn multi_entry(&self, k: usize) -> Result<ExperimentReport> {
        let t = Instant::now();
        let outcomes = run_attack(
            &self.dictionary,
            &self.cohort,
            &AttackMode::MultiEntry(k),
            self.plan.metric,
        )?;
        let cases: Vec<(usize, AttackOutcome)> =
            outcomes.into_iter().map(|o| (self.level_of(&o.true_pin), o)).collect();
        let general = self.general_outcomes()?;
        let mut report = self.report(
            &format!("multi-entry k={k}"),
            0,
            self.dictionary.len(),
            &cases,
            vec![("attack".into(), elapsed(t))],
        )?;
        report.comparison = Some(self.comparison(&general, &report));
        difference_note(&mut report);
        Ok(report)
    }

    /// Every choice of `revealed` positions, with those digits of the true
    /// PIN known; all position subsets are pooled.
    pub fn known_digits(&self, revealed: usize) -> Result<ExperimentReport> {
        let l = self.plan.pin_length;
        if revealed == 0 || revealed >= l {
            return Err(Error::OutOfRange(format!("revealed digits {revealed} outside 1..{l}")));
        }
        if !self.dictionary.is_complete() {
            return Err(Error::Unsupported(
                "known-digit attacks need a complete dictionary".into(),
            ));
        }
        let t = Instant::now();
        let subsets = position_subsets(l, revealed);
        let per_entry: Vec<Vec<(usize, AttackOutcome)>> = self
            .cohort
            .par_iter()
            .map(|e| self.known_digit_cases(e, &subsets))
            .collect::<Result<_>>()?;
        let cases: Vec<(usize, AttackOutcome)> = per_entry.into_iter().flatten().collect();
        let mut report = self.report(
            &format!("known-digits revealed={revealed}"),
            revealed,
            space_size(l - revealed) as usize,
            &cases,
            vec![("attack".into(), elapsed(t))],
        )?;
        report
            .metadata
            .push(("position_subsets".to_string(), subsets.len().to_string()));
        Ok(report)
    }

    fn known_digit_cases(&self, e: &ObservedEntry, subsets: &[Vec<usize>]) -> Result<Vec<(usize, AttackOutcome)>> {
        let l = self.plan.pin_length;
        let pin = e
            .true_pin
            .ok_or_else(|| Error::InvalidPlan(format!("entry {} has no true PIN", e.case_id)))?;
        let scores = score_candidates(&self.dictionary, &e.sequence, self.plan.metric)?;
        let target = pin.value() as usize;
        let own = scores[target];
        // candidates ranked ahead of the true PIN in the full dictionary
        let ahead: Vec<usize> = scores
            .iter()
            .enumerate()
            .filter(|(i, s)| match s.total_cmp(&own) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => *i < target,
                _ => false,
            })
            .map(|(i, _)| i)
            .collect();
        let digits = pin.digits();
        let level = self.level_of(&e.true_pin);
        Ok(subsets
            .iter()
            .map(|positions| {
                let matching = ahead
                    .iter()
                    .filter(|&&i| {
                        positions.iter().all(|&p| {
                            let scale = 10usize.pow((l - p) as u32);
                            (i / scale) % 10 == digits[p - 1] as usize
                        })
                    })
                    .count();
                let tag: Vec<String> = positions.iter().map(|p| p.to_string()).collect();
                (
                    level,
                    AttackOutcome {
                        case_id: format!("{}@{}", e.case_id, tag.join("+")),
                        true_pin: Some(pin),
                        rank: Some(matching + 1),
                        score: Some(own),
                        candidates: space_size(l - positions.len()) as usize,
                        consistent: true,
                    },
                )
            })
            .collect())
    }
}

fn subject_pin_groups(cohort: &[ObservedEntry]) -> Vec<((String, Pin), Vec<&ObservedEntry>)> {
    let mut index: HashMap<(String, Pin), usize> = HashMap::new();
    let mut groups: Vec<((String, Pin), Vec<&ObservedEntry>)> = Vec::new();
    for e in cohort {
        let Some(pin) = e.true_pin else { continue };
        let key = (e.subject_id.clone(), pin);
        let i = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(e);
    }
    groups
}

/// All `k`-subsets of positions `1..=l`, lexicographic.
pub fn position_subsets(l: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, l: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for p in start..=l {
            cur.push(p);
            rec(p + 1, l, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, l, k, &mut Vec::new(), &mut out);
    out
}

fn level_order_note(report: &mut ExperimentReport) {
    let at: Vec<(String, f64)> = report
        .levels
        .iter()
        .filter_map(|c| c.at(100).map(|r| (c.label.clone(), r)))
        .collect();
    for w in at.windows(2) {
        if w[1].1 > w[0].1 {
            report.notes.push(format!(
                "{} beats {} at x=100 ({:.4} > {:.4})",
                w[1].0, w[0].0, w[1].1, w[0].1
            ));
        }
    }
}

fn difference_note(report: &mut ExperimentReport) {
    if let Some(g) = &report.comparison {
        let diffs: Vec<String> = report
            .aggregate
            .curve
            .iter()
            .zip(&g.curve)
            .map(|((x, a), (_, b))| format!("{x}:{:+.4}", a - b))
            .collect();
        report.notes.push(format!("success minus general: {}", diffs.join(" ")));
        report.notes.push(format!(
            "mean rank {:.2} vs general {:.2}",
            report.aggregate.mean_rank, g.mean_rank
        ));
    }
}

pub fn run_general(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    Experiment::prepare(plan, None)?.general()
}

pub fn run_targeted(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    Experiment::prepare(plan, None)?.targeted()
}

pub fn run_multi_entry(plan: &ExperimentPlan, k: usize) -> Result<ExperimentReport> {
    Experiment::prepare(plan, None)?.multi_entry(k)
}

pub fn run_known_digits(plan: &ExperimentPlan, revealed: usize) -> Result<ExperimentReport> {
    Experiment::prepare(plan, None)?.known_digits(revealed)
}

/// Interleaved ENTER entry (`d1 E d2 E ... dl E E`) on the plan's layout,
/// with PINs drawn uniformly.
pub fn run_countermeasure(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    let layout = plan.layout.resolve()?;
    if plan.strict && !layout.is_circular(1e-9) {
        return Err(Error::NotCircular(layout.name().to_string()));
    }
    let pattern = EntryPattern::Interleaved {
        final_double: plan.final_double,
    };
    let exp = Experiment::prepare_inner(plan, pattern, None)?;
    let mut report = exp.general()?;
    report.experiment = "countermeasure".to_string();
    report.metadata.push(("pattern".to_string(), format!("{pattern:?}")));
    let rows = exp.dictionary();
    let first = rows.row(0);
    let identical = (1..rows.len()).all(|i| rows.row(i) == first);
    report.notes.push(format!("all dictionary rows identical: {identical}"));
    Ok(report)
}
