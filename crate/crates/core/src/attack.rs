//! Ranking dictionary PINs against observed timing sequences.
//!
//! All metrics are "higher is better": cosine and Pearson similarities as
//! they are, Euclidean as a negated distance. Ties are broken by ascending
//! PIN value so every ranking is deterministic.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dictionary::{reduce_dictionary, TimingDictionary};
use crate::error::{parse_err, Error, Result};
use crate::pin::{space_size, DigitConstraint, Pin, TimingSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SimilarityMetric {
    #[default]
    Cosine,
    Euclidean,
    Pearson,
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityMetric::Cosine => "cosine",
            SimilarityMetric::Euclidean => "euclidean",
            SimilarityMetric::Pearson => "pearson",
        })
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" => Ok(SimilarityMetric::Cosine),
            "euclidean" => Ok(SimilarityMetric::Euclidean),
            "pearson" => Ok(SimilarityMetric::Pearson),
            other => Err(Error::OutOfRange(format!("unknown metric {other:?}"))),
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// sqrt(|a|^2 |b|^2) rather than |a| |b| so that cos(v, v) is exactly 1.
#[inline]
fn cosine_with_norm(a: &[f64], a_sq: f64, b: &[f64]) -> f64 {
    let b_sq = dot(b, b);
    (dot(a, b) / (a_sq * b_sq).sqrt()).clamp(-1.0, 1.0)
}

/// `sum(a_i b_i) / (|A| |B|)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(cosine_with_norm(a, dot(a, a), b))
}

/// Negated Euclidean distance, so identical vectors score 0 (the maximum).
pub fn euclidean_score(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(neg_distance(a, b))
}

#[inline]
fn neg_distance(a: &[f64], b: &[f64]) -> f64 {
    0.0 - a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let ss = dot(&c, &c);
    (c, ss)
}

#[inline]
fn pearson_centered(ca: &[f64], ss_a: f64, b: &[f64]) -> Result<f64> {
    if is_constant(b) {
        return Err(Error::UndefinedCorrelation);
    }
    let (cb, ss_b) = centered(b);
    Ok((dot(ca, &cb) / (ss_a * ss_b).sqrt()).clamp(-1.0, 1.0))
}

/// Centered (Pearson) correlation; errors on a constant vector.
pub fn pearson_score(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    if is_constant(a) {
        return Err(Error::UndefinedCorrelation);
    }
    let (ca, ss_a) = centered(a);
    pearson_centered(&ca, ss_a, b)
}

/// Metric-specific state precomputed from the observation.
struct Scorer<'a> {
    metric: SimilarityMetric,
    observed: &'a [f64],
    sq_norm: f64,
    centered: Vec<f64>,
}

impl<'a> Scorer<'a> {
    fn new(metric: SimilarityMetric, observed: &'a [f64]) -> Result<Self> {
        let mut s = Scorer {
            metric,
            observed,
            sq_norm: 0.0,
            centered: Vec::new(),
        };
        match metric {
            SimilarityMetric::Cosine => s.sq_norm = dot(observed, observed),
            SimilarityMetric::Euclidean => {}
            SimilarityMetric::Pearson => {
                if is_constant(observed) {
                    return Err(Error::UndefinedCorrelation);
                }
                let (c, ss) = centered(observed);
                s.centered = c;
                s.sq_norm = ss;
            }
        }
        Ok(s)
    }

    #[inline]
    fn score(&self, row: &[f64]) -> Result<f64> {
        Ok(match self.metric {
            SimilarityMetric::Cosine => cosine_with_norm(self.observed, self.sq_norm, row),
            SimilarityMetric::Euclidean => neg_distance(self.observed, row),
            SimilarityMetric::Pearson => pearson_centered(&self.centered, self.sq_norm, row)?,
        })
    }

    fn score_all(&self, dict: &TimingDictionary) -> Result<Vec<f64>> {
        let w = dict.width();
        dict.values().par_chunks(w).map(|row| self.score(row)).collect()
    }
}

fn check_observation(dict: &TimingDictionary, observed: &[f64]) -> Result<()> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if observed.len() != dict.width() {
        return Err(Error::DimensionMismatch {
            expected: dict.width(),
            actual: observed.len(),
        });
    }
    Ok(())
}

/// Every dictionary PIN ordered best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedGuessList {
    pins: Vec<Pin>,
    scores: Vec<f64>,
}

impl RankedGuessList {
    pub fn len(&self) -> usize {
        self.pins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pins.is_empty()
    }

    pub fn pins(&self) -> &[Pin] {
        &self.pins
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pin, f64)> + '_ {
        self.pins.iter().copied().zip(self.scores.iter().copied())
    }

    /// 1-based rank of `pin`, if present.
    pub fn rank_of(&self, pin: &Pin) -> Option<usize> {
        self.pins.iter().position(|p| p == pin).map(|i| i + 1)
    }
}

/// Score of every dictionary row, in dictionary order.
pub fn score_candidates(dict: &TimingDictionary, observed: &[f64], metric: SimilarityMetric) -> Result<Vec<f64>> {
    check_observation(dict, observed)?;
    Scorer::new(metric, observed)?.score_all(dict)
}

/// Full ordering of the dictionary: descending score, ascending PIN on ties.
pub fn rank_candidates(dict: &TimingDictionary, observed: &[f64], metric: SimilarityMetric) -> Result<RankedGuessList> {
    check_observation(dict, observed)?;
    let scores = Scorer::new(metric, observed)?.score_all(dict)?;
    let mut order: Vec<u32> = (0..dict.len() as u32).collect();
    // rows are stored in ascending PIN order, so the index is the tie key
    order.par_sort_unstable_by(|&i, &j| scores[j as usize].total_cmp(&scores[i as usize]).then(i.cmp(&j)));
    Ok(RankedGuessList {
        pins: order.iter().map(|&i| dict.pin(i as usize)).collect(),
        scores: order.iter().map(|&i| scores[i as usize]).collect(),
    })
}

/// Rank and score of one PIN without sorting the whole dictionary. Agrees
/// with [`rank_candidates`] exactly. `None` if the PIN is not in the dictionary.
pub fn rank_of_pin(
    dict: &TimingDictionary,
    observed: &[f64],
    metric: SimilarityMetric,
    pin: &Pin,
) -> Result<Option<(usize, f64)>> {
    check_observation(dict, observed)?;
    let Some(target) = dict.index_of(pin) else {
        return Ok(None);
    };
    let scorer = Scorer::new(metric, observed)?;
    let own = scorer.score(dict.row(target))?;
    let w = dict.width();
    let ahead = dict
        .values()
        .par_chunks(w)
        .enumerate()
        .map(|(i, row)| {
            let s = scorer.score(row)?;
            Ok::<usize, Error>(match s.total_cmp(&own) {
                std::cmp::Ordering::Greater => 1usize,
                std::cmp::Ordering::Equal if i < target => 1,
                _ => 0,
            })
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(Some((ahead + 1, own)))
}

/// Rescales each sequence to the mean total duration, then averages.
pub fn average_entries(entries: &[TimingSequence]) -> Result<TimingSequence> {
    let first = entries
        .first()
        .ok_or_else(|| Error::EmptyInput("no sequences to average".into()))?;
    let dim = first.len();
    if let Some(e) = entries.iter().find(|e| e.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: e.len(),
        });
    }
    let k = entries.len() as f64;
    let sums: Vec<f64> = entries.iter().map(|e| e.iter().sum()).collect();
    let mean_sum = sums.iter().sum::<f64>() / k;
    let mut out = vec![0.0; dim];
    for (e, s) in entries.iter().zip(&sums) {
        let scale = mean_sum / s;
        for (o, v) in out.iter_mut().zip(e.iter()) {
            *o += v * scale;
        }
    }
    out.iter_mut().for_each(|v| *v /= k);
    TimingSequence::new(out)
}

/// Probability that uniform guessing hits an `l`-digit PIN with `k` digits
/// known within `x` attempts: `x / 10^(l-k)`.
pub fn random_baseline(pin_length: usize, known_digits: usize, attempts: u64) -> Result<f64> {
    crate::pin::check_length(pin_length)?;
    if known_digits >= pin_length {
        return Err(Error::OutOfRange(format!(
            "known digits {known_digits} must be below length {pin_length}"
        )));
    }
    let n = space_size(pin_length - known_digits);
    if attempts == 0 || attempts > n {
        return Err(Error::OutOfRange(format!("attempts {attempts} outside 1..={n}")));
    }
    Ok(attempts as f64 / n as f64)
}

/// One observed PIN entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedEntry {
    pub case_id: String,
    pub subject_id: String,
    /// Known in evaluation, absent when attacking for real.
    pub true_pin: Option<Pin>,
    pub sequence: TimingSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackMode {
    /// Each entry ranked on its own.
    General,
    /// Entries grouped by (subject, PIN) and averaged `k` at a time.
    MultiEntry(usize),
    /// Dictionary reduced to PINs matching the known digits first.
    KnownDigits(Vec<DigitConstraint>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub case_id: String,
    pub true_pin: Option<Pin>,
    /// 1-based position of the true PIN; `None` when unknown or excluded.
    pub rank: Option<usize>,
    /// Score of the true PIN.
    pub score: Option<f64>,
    /// Size of the dictionary the case was ranked against.
    pub candidates: usize,
    /// False when known digits contradict the true PIN.
    pub consistent: bool,
}

impl AttackOutcome {
    /// Whether the PIN falls within `x` login attempts.
    pub fn succeeds_within(&self, x: usize) -> bool {
        self.rank.is_some_and(|r| r <= x)
    }
}

fn outcome_for(
    dict: &TimingDictionary,
    case_id: String,
    true_pin: Option<Pin>,
    observed: &[f64],
    metric: SimilarityMetric,
) -> Result<AttackOutcome> {
    let ranked = match &true_pin {
        Some(p) => rank_of_pin(dict, observed, metric, p)?,
        None => {
            check_observation(dict, observed)?;
            None
        }
    };
    Ok(AttackOutcome {
        case_id,
        true_pin,
        rank: ranked.map(|r| r.0),
        score: ranked.map(|r| r.1),
        candidates: dict.len(),
        consistent: true,
    })
}

fn check_entry(dict: &TimingDictionary, e: &ObservedEntry) -> Result<()> {
    if let Some(p) = &e.true_pin {
        if p.len() != dict.pin_length() {
            return Err(Error::DimensionMismatch {
                expected: dict.pin_length(),
                actual: p.len(),
            });
        }
    }
    if e.sequence.len() != dict.width() {
        return Err(Error::DimensionMismatch {
            expected: dict.width(),
            actual: e.sequence.len(),
        });
    }
    Ok(())
}

/// Groups entries by (subject, true PIN) in order of first appearance and
/// averages each run of `k` consecutive entries; leftovers are dropped.
pub fn multi_entry_groups(entries: &[ObservedEntry], k: usize) -> Result<Vec<(String, Option<Pin>, TimingSequence)>> {
    if k == 0 {
        return Err(Error::OutOfRange("multi-entry k must be at least 1".into()));
    }
    let mut order: Vec<(String, Option<Pin>)> = Vec::new();
    let mut groups: HashMap<(String, Option<Pin>), Vec<&ObservedEntry>> = HashMap::new();
    for e in entries {
        let key = (e.subject_id.clone(), e.true_pin);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(e);
    }
    let mut out = Vec::new();
    for key in order {
        let members = &groups[&key];
        if members.len() < k {
            let label = match &key.1 {
                Some(p) => format!("{}/{p}", key.0),
                None => key.0.clone(),
            };
            return Err(Error::GroupTooSmall(label, k));
        }
        for chunk in members.chunks_exact(k) {
            let seqs: Vec<TimingSequence> = chunk.iter().map(|e| e.sequence.clone()).collect();
            let id = if k == 1 {
                chunk[0].case_id.clone()
            } else {
                format!("{}..{}", chunk[0].case_id, chunk[k - 1].case_id)
            };
            out.push((id, key.1, average_entries(&seqs)?));
        }
    }
    Ok(out)
}

/// One outcome per attacking case.
pub fn run_attack(
    dict: &TimingDictionary,
    entries: &[ObservedEntry],
    mode: &AttackMode,
    metric: SimilarityMetric,
) -> Result<Vec<AttackOutcome>> {
    for e in entries {
        check_entry(dict, e)?;
    }
    match mode {
        AttackMode::General => entries
            .par_iter()
            .map(|e| outcome_for(dict, e.case_id.clone(), e.true_pin, &e.sequence, metric))
            .collect(),
        AttackMode::MultiEntry(k) => multi_entry_groups(entries, *k)?
            .into_par_iter()
            .map(|(id, pin, seq)| outcome_for(dict, id, pin, &seq, metric))
            .collect(),
        AttackMode::KnownDigits(constraints) => {
            let reduced = reduce_dictionary(dict, constraints)?;
            entries
                .par_iter()
                .map(|e| {
                    let consistent = e
                        .true_pin
                        .as_ref()
                        .is_none_or(|p| constraints.iter().all(|c| c.matches(p)));
                    if consistent {
                        outcome_for(&reduced, e.case_id.clone(), e.true_pin, &e.sequence, metric)
                    } else {
                        Ok(AttackOutcome {
                            case_id: e.case_id.clone(),
                            true_pin: e.true_pin,
                            rank: None,
                            score: None,
                            candidates: reduced.len(),
                            consistent: false,
                        })
                    }
                })
                .collect()
        }
    }
}

/// Fraction of ranked outcomes whose rank is at most `x`, for each `x`.
/// Outcomes without a rank are ignored; with none ranked every rate is 0.
pub fn success_curve(outcomes: &[AttackOutcome], xs: &[usize]) -> Vec<(usize, f64)> {
    let mut ranks: Vec<usize> = outcomes.iter().filter_map(|o| o.rank).collect();
    ranks.sort_unstable();
    let n = ranks.len();
    xs.iter()
        .map(|&x| {
            let hits = ranks.partition_point(|r| *r <= x);
            (x, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
        })
        .collect()
}

pub fn write_observed_entries(entries: &[ObservedEntry]) -> String {
    let mut out = String::from("# case_id,subject_id,true_pin,dt1..dtl\n");
    for e in entries {
        out.push_str(&e.case_id);
        out.push(',');
        out.push_str(&e.subject_id);
        out.push(',');
        match &e.true_pin {
            Some(p) => out.push_str(&p.to_string()),
            None => out.push('-'),
        }
        for v in e.sequence.iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_observed_entries(text: &str) -> Result<Vec<ObservedEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(parse_err(lineno, "expected case_id,subject_id,true_pin,dt1,..."));
        }
        let true_pin = match fields[2] {
            "-" => None,
            p => Some(
                p.parse::<Pin>()
                    .map_err(|_| parse_err(lineno, format!("bad PIN {p:?}")))?,
            ),
        };
        let values = fields[3..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("malformed interval {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let sequence = TimingSequence::new(values).map_err(|e| parse_err(lineno, e.to_string()))?;
        out.push(ObservedEntry {
            case_id: fields[0].to_string(),
            subject_id: fields[1].to_string(),
            true_pin,
            sequence,
        });
    }
    Ok(out)
}

pub fn write_outcomes(outcomes: &[AttackOutcome]) -> String {
    let mut out = String::from("# case_id,true_pin,rank,score\n");
    for o in outcomes {
        let pin = o.true_pin.map_or("-".to_string(), |p| p.to_string());
        let rank = o.rank.map_or("-".to_string(), |r| r.to_string());
        let score = o.score.map_or("-".to_string(), |s| format!("{s}"));
        out.push_str(&format!("{},{pin},{rank},{score}\n", o.case_id));
    }
    out
}

/// Reads an outcome file; `candidates` is not stored and is left at 0.
pub fn parse_outcomes(text: &str) -> Result<Vec<AttackOutcome>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(parse_err(lineno, "expected case_id,true_pin,rank,score"));
        }
        fn opt(s: &str) -> Option<&str> {
            (s != "-").then_some(s)
        }
        out.push(AttackOutcome {
            case_id: f[0].to_string(),
            true_pin: opt(f[1])
                .map(str::parse)
                .transpose()
                .map_err(|_| parse_err(lineno, "bad PIN"))?,
            rank: opt(f[2])
                .map(str::parse)
                .transpose()
                .map_err(|_| parse_err(lineno, "bad rank"))?,
            score: opt(f[3])
                .map(str::parse)
                .transpose()
                .map_err(|_| parse_err(lineno, "bad score"))?,
            candidates: 0,
            consistent: true,
        });
    }
    Ok(out)
}

pub fn write_curve(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("# x,success_rate\n");
    for (x, r) in curve {
        out.push_str(&format!("{x},{r}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::build_dictionary;
    use crate::geometry::standard_numpad;
    use crate::model::FittsModel;
    use approx::assert_abs_diff_eq;

    fn seq(v: &[f64]) -> TimingSequence {
        TimingSequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let v = [232.95, 199.0, 135.9, 240.0];
        assert_eq!(cosine_similarity(&v, &v).unwrap(), 1.0);
        let w: Vec<f64> = v.iter().map(|x| x * 2.5).collect();
        assert_abs_diff_eq!(cosine_similarity(&v, &w).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0, 100.0], &[100.0, 1.0]).unwrap(),
            200.0 / 10001.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn euclidean_and_pearson() {
        let v = [10.0, 20.0, 15.0];
        assert_eq!(euclidean_score(&v, &v).unwrap(), 0.0);
        assert!(euclidean_score(&v, &[10.0, 20.0, 16.0]).unwrap() < 0.0);
        let w: Vec<f64> = v.iter().map(|x| 3.0 * x + 7.0).collect();
        assert_abs_diff_eq!(pearson_score(&v, &w).unwrap(), 1.0, epsilon = 1e-12);
        let err = pearson_score(&[5.0, 5.0, 5.0], &v).unwrap_err();
        assert!(err.to_string().contains("undefined correlation"));
        assert!(pearson_score(&v, &[5.0, 5.0, 5.0]).is_err());
    }

    #[test]
    fn averaging_examples() {
        let v = seq(&[120.0, 200.0, 310.0]);
        let same = average_entries(&[v.clone(), v.clone(), v.clone()]).unwrap();
        for (a, b) in same.iter().zip(v.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let avg = average_entries(&[v.clone(), v.scaled(2.0).unwrap()]).unwrap();
        assert_abs_diff_eq!(cosine_similarity(&avg, &v).unwrap(), 1.0, epsilon = 1e-15);

        let avg = average_entries(&[seq(&[100.0, 200.0]), seq(&[300.0, 100.0])]).unwrap();
        assert_abs_diff_eq!(avg[0], 189.583_333_333, epsilon = 1e-6);
        assert_abs_diff_eq!(avg[1], 160.416_666_667, epsilon = 1e-6);

        assert!(average_entries(&[]).is_err());
        assert!(average_entries(&[seq(&[1.0]), seq(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(random_baseline(6, 0, 3).unwrap(), 3e-6);
        assert_eq!(random_baseline(6, 2, 100).unwrap(), 1e-2);
        assert_eq!(random_baseline(6, 0, 1_000_000).unwrap(), 1.0);
        assert!(random_baseline(6, 6, 1).is_err());
        assert!(random_baseline(6, 0, 0).is_err());
        assert!(random_baseline(4, 0, 10_001).is_err());
    }

    #[test]
    fn ranking_breaks_ties_by_pin() {
        let d = build_dictionary(&FittsModel::reference(), &standard_numpad(), 2).unwrap();
        let obs = [150.0, 150.0];
        let r = rank_candidates(&d, &obs, SimilarityMetric::Cosine).unwrap();
        assert_eq!(r.len(), 100);
        for w in r.scores().windows(2) {
            assert!(w[0] >= w[1]);
        }
        for (i, w) in r.pins().windows(2).enumerate() {
            if r.scores()[i] == r.scores()[i + 1] {
                assert!(w[0] < w[1]);
            }
        }
        for p in r.pins().iter().step_by(7) {
            let (rank, score) = rank_of_pin(&d, &obs, SimilarityMetric::Cosine, p).unwrap().unwrap();
            assert_eq!(Some(rank), r.rank_of(p));
            assert_eq!(score, r.scores()[rank - 1]);
        }
    }

    #[test]
    fn ranking_errors() {
        let d = build_dictionary(&FittsModel::reference(), &standard_numpad(), 2).unwrap();
        assert!(matches!(
            rank_candidates(&d, &[1.0, 2.0, 3.0], SimilarityMetric::Cosine),
            Err(Error::DimensionMismatch { .. })
        ));
        let one = crate::dictionary::reduce_dictionary(
            &d,
            &[DigitConstraint::new(1, 4).unwrap(), DigitConstraint::new(2, 2).unwrap()],
        )
        .unwrap();
        let r = rank_candidates(&one, &[100.0, 300.0], SimilarityMetric::Euclidean).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.rank_of(&"42".parse().unwrap()), Some(1));
    }

    #[test]
    fn curve_examples() {
        let mk = |rank| AttackOutcome {
            case_id: "c".into(),
            true_pin: None,
            rank: Some(rank),
            score: None,
            candidates: 100,
            consistent: true,
        };
        let all_one: Vec<_> = (0..5).map(|_| mk(1)).collect();
        assert!(success_curve(&all_one, &[1, 10, 100]).iter().all(|(_, r)| *r == 1.0));
        let single = [mk(57)];
        let c = success_curve(&single, &[1, 56, 57, 100]);
        assert_eq!(c, vec![(1, 0.0), (56, 0.0), (57, 1.0), (100, 1.0)]);
        assert_eq!(success_curve(&[], &[5]), vec![(5, 0.0)]);
    }

    #[test]
    fn observed_file_round_trip() {
        let entries = vec![
            ObservedEntry {
                case_id: "c1".into(),
                subject_id: "S1".into(),
                true_pin: Some("0042".parse().unwrap()),
                sequence: seq(&[232.9502, 0.1 + 0.2, 1e-3, 255.0]),
            },
            ObservedEntry {
                case_id: "c2".into(),
                subject_id: "S2".into(),
                true_pin: None,
                sequence: seq(&[1.5, 2.25, 3.0, 4.0]),
            },
        ];
        let text = write_observed_entries(&entries);
        assert_eq!(parse_observed_entries(&text).unwrap(), entries);
        assert!(parse_observed_entries("a,b,12\n").is_err());
        assert!(parse_observed_entries("a,b,12,1.0,x\n").is_err());
        assert!(parse_observed_entries("a,b,12,1.0,-2\n").is_err());
    }

    #[test]
    fn outcome_file_round_trip() {
        let o = vec![
            AttackOutcome {
                case_id: "c1".into(),
                true_pin: Some("0420".parse().unwrap()),
                rank: Some(17),
                score: Some(0.987_654_321),
                candidates: 0,
                consistent: true,
            },
            AttackOutcome {
                case_id: "c2".into(),
                true_pin: None,
                rank: None,
                score: None,
                candidates: 0,
                consistent: true,
            },
        ];
        assert_eq!(parse_outcomes(&write_outcomes(&o)).unwrap(), o);
    }
}
