//! PIN strength from the directional density of timing vectors.
//!
//! For every PIN the cosine similarities to all other dictionary vectors are
//! sorted in descending order and averaged in decade bands: band `j` holds
//! sorted ranks `10^(j-1) ..= 10^j - 1`. PINs are then stable-sorted
//! ascending on the band means and cut into levels of 100, 900, 9000, ...
//! PINs, level 1 being the weakest.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dictionary::TimingDictionary;
use crate::error::{parse_err, Error, Result};
use crate::pin::{space_size, Pin};
use crate::seeds::derive_seed;

/// Per-PIN band means `(G1, ..., Gl)` over the full PIN space.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthProfile {
    pin_length: usize,
    tuples: Vec<f64>,
    /// Counterparts sampled per PIN when the profile is an estimate.
    sampled: Option<usize>,
}

impl StrengthProfile {
    pub fn from_parts(pin_length: usize, tuples: Vec<f64>, sampled: Option<usize>) -> Result<Self> {
        crate::pin::check_length(pin_length)?;
        Ok(StrengthProfile {
            pin_length,
            tuples,
            sampled,
        })
    }

    pub fn pin_length(&self) -> usize {
        self.pin_length
    }

    /// Number of PINs with a tuple.
    pub fn len(&self) -> usize {
        self.tuples.len() / self.pin_length
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.tuples.len() as u64 == space_size(self.pin_length) * self.pin_length as u64
    }

    /// `Some(m)` for a sampled estimate with `m` counterparts per PIN.
    pub fn sampled(&self) -> Option<usize> {
        self.sampled
    }

    pub fn tuple(&self, pin_value: usize) -> &[f64] {
        let l = self.pin_length;
        &self.tuples[pin_value * l..(pin_value + 1) * l]
    }

    pub fn tuples(&self) -> &[f64] {
        &self.tuples
    }
}

/// `(start, len)` of each band in a descending list of `10^l - 1` values.
pub fn band_ranges(pin_length: usize) -> Vec<(usize, usize)> {
    (1..=pin_length)
        .map(|j| {
            let start = 10usize.pow(j as u32 - 1) - 1;
            (start, 9 * 10usize.pow(j as u32 - 1))
        })
        .collect()
}

fn check_input(dict: &TimingDictionary) -> Result<()> {
    if !dict.is_complete() {
        return Err(Error::Unsupported(
            "strength needs a complete (unconstrained) dictionary".into(),
        ));
    }
    if dict.pin_length() < 2 {
        return Err(Error::OutOfRange("strength needs PIN length >= 2".into()));
    }
    Ok(())
}

fn unit_rows(dict: &TimingDictionary) -> Vec<f64> {
    let w = dict.width();
    let mut units = dict.values().to_vec();
    units.par_chunks_mut(w).for_each(|row| {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    });
    units
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Band sums of `vals` (length 10^l - 1) by successive selection rather than a
// full sort; band order inside each partition does not matter for the mean.
fn band_means(vals: &mut [f64], bands: &[(usize, usize)], out: &mut [f64]) {
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    let mut rest: &mut [f64] = vals;
    for (slot, &(_, len)) in out.iter_mut().zip(bands) {
        if len < rest.len() {
            rest.select_nth_unstable_by(len, desc);
        }
        let (band, tail) = rest.split_at_mut(len);
        *slot = band.iter().sum::<f64>() / len as f64;
        rest = tail;
    }
}

/// Exact band means, `O(l * 10^(2l))` work. Parallel over PINs.
pub fn strength_measure(dict: &TimingDictionary) -> Result<StrengthProfile> {
    check_input(dict)?;
    let l = dict.pin_length();
    let w = dict.width();
    let n = dict.len();
    let units = unit_rows(dict);
    let bands = band_ranges(l);
    let mut tuples = vec![0.0; n * l];
    tuples.par_chunks_mut(l).enumerate().for_each_init(
        || vec![0.0f64; n - 1],
        |buf, (i, out)| {
            let ui = &units[i * w..(i + 1) * w];
            let mut k = 0;
            for (j, uj) in units.chunks_exact(w).enumerate() {
                if j != i {
                    buf[k] = dot(ui, uj);
                    k += 1;
                }
            }
            band_means(buf, &bands, out);
        },
    );
    Ok(StrengthProfile {
        pin_length: l,
        tuples,
        sampled: None,
    })
}

/// Sampled estimate: `samples` random counterparts per PIN (drawn from a
/// per-PIN substream of `seed`), with each band mean taken as the average
/// of the empirical quantile function over the band's rank interval.
/// Falls back to the exact computation when `samples >= 10^l - 1`.
pub fn strength_measure_sampled(dict: &TimingDictionary, samples: usize, seed: u64) -> Result<StrengthProfile> {
    check_input(dict)?;
    let l = dict.pin_length();
    let n = dict.len();
    if samples >= n - 1 {
        return strength_measure(dict);
    }
    if samples == 0 {
        return Err(Error::OutOfRange("sample count must be positive".into()));
    }
    let w = dict.width();
    let units = unit_rows(dict);
    let bands = band_ranges(l);
    let others = (n - 1) as f64;
    let per_sample = others / samples as f64;
    let mut tuples = vec![0.0; n * l];
    tuples.par_chunks_mut(l).enumerate().for_each_init(
        || vec![0.0f64; samples],
        |buf, (i, out)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5354_5245, i as u64]));
            let ui = &units[i * w..(i + 1) * w];
            for v in buf.iter_mut() {
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                *v = dot(ui, &units[j * w..(j + 1) * w]);
            }
            buf.sort_unstable_by(|a, b| b.total_cmp(a));
            for (slot, &(start, len)) in out.iter_mut().zip(&bands) {
                let lo = start as f64;
                let hi = (start + len) as f64;
                let first = (lo / per_sample).floor() as usize;
                let last = ((hi / per_sample).ceil() as usize).min(samples);
                let mut acc = 0.0;
                for (k, s) in buf.iter().enumerate().take(last).skip(first) {
                    let a = (k as f64 * per_sample).max(lo);
                    let b = ((k + 1) as f64 * per_sample).min(hi);
                    if b > a {
                        acc += s * (b - a);
                    }
                }
                *slot = acc / len as f64;
            }
        },
    );
    Ok(StrengthProfile {
        pin_length: l,
        tuples,
        sampled: Some(samples),
    })
}

/// Level sizes for `l`-digit PINs: 100, 900, 9000, ... (`l - 1` levels).
pub fn level_sizes(pin_length: usize) -> Vec<usize> {
    (1..pin_length)
        .map(|k| if k == 1 { 100 } else { 9 * 10usize.pow(k as u32) })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelPartition {
    pin_length: usize,
    /// Level (1-based) of each PIN value.
    levels: Vec<u8>,
    sizes: Vec<usize>,
    /// PIN values from weakest to strongest.
    order: Vec<u32>,
}

impl LevelPartition {
    /// Rebuilds a partition from stored per-PIN levels. Within a level the
    /// weakest-first order is not recoverable and falls back to PIN order.
    pub fn from_levels(pin_length: usize, levels: Vec<u8>) -> Result<Self> {
        let sizes = level_sizes(pin_length);
        if levels.len() as u64 != space_size(pin_length) {
            return Err(Error::Unsupported(format!(
                "incomplete profile: {} of {} PINs",
                levels.len(),
                space_size(pin_length)
            )));
        }
        let mut counts = vec![0usize; sizes.len()];
        for &l in &levels {
            if l == 0 || l as usize > sizes.len() {
                return Err(Error::OutOfRange(format!("level {l} outside 1..={}", sizes.len())));
            }
            counts[l as usize - 1] += 1;
        }
        if counts != sizes {
            return Err(Error::OutOfRange(format!(
                "level sizes {counts:?} differ from {sizes:?}"
            )));
        }
        let mut order: Vec<u32> = (0..levels.len() as u32).collect();
        order.sort_by_key(|&v| levels[v as usize]);
        Ok(LevelPartition {
            pin_length,
            levels,
            sizes,
            order,
        })
    }

    pub fn pin_length(&self) -> usize {
        self.pin_length
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn level_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn level_of(&self, pin: &Pin) -> usize {
        self.levels[pin.value() as usize] as usize
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    /// PINs from weakest to strongest.
    pub fn ranking(&self) -> impl Iterator<Item = Pin> + '_ {
        self.order
            .iter()
            .map(|&v| Pin::new(v as u64, self.pin_length).expect("valid PIN"))
    }

    /// PINs of one level in ascending numeric order.
    pub fn pins_in_level(&self, level: usize) -> Vec<Pin> {
        self.levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l as usize == level)
            .map(|(v, _)| Pin::new(v as u64, self.pin_length).expect("valid PIN"))
            .collect()
    }
}

/// Stable ascending sort on `(G1, G2, ..., Gl)`, then decade-sized levels.
pub fn partition_levels(profile: &StrengthProfile) -> Result<LevelPartition> {
    if !profile.is_complete() {
        return Err(Error::Unsupported(format!(
            "incomplete profile: {} of {} PINs",
            profile.len(),
            space_size(profile.pin_length)
        )));
    }
    let l = profile.pin_length;
    if l < 2 {
        return Err(Error::OutOfRange("levels need PIN length >= 2".into()));
    }
    let n = profile.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&x, &y| {
        let tx = profile.tuple(x as usize);
        let ty = profile.tuple(y as usize);
        tx.iter()
            .zip(ty)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sizes = level_sizes(l);
    let mut levels = vec![0u8; n];
    let mut pos = 0;
    for (k, &size) in sizes.iter().enumerate() {
        for &v in &order[pos..pos + size] {
            levels[v as usize] = (k + 1) as u8;
        }
        pos += size;
    }
    debug_assert_eq!(pos, n);
    Ok(LevelPartition {
        pin_length: l,
        levels,
        sizes,
        order,
    })
}

/// Occurrences of one PIN in a leaked corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrequencyRecord {
    pub pin: Pin,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelFrequency {
    pub level: usize,
    /// Share of total occurrence mass.
    pub proportion: f64,
    /// Level mass divided by level size.
    pub mean_frequency: f64,
}

pub fn frequency_analysis(partition: &LevelPartition, records: &[FrequencyRecord]) -> Result<Vec<LevelFrequency>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no frequency records".into()));
    }
    let mut mass = vec![0u64; partition.level_count()];
    for r in records {
        if r.pin.len() != partition.pin_length {
            return Err(Error::DimensionMismatch {
                expected: partition.pin_length,
                actual: r.pin.len(),
            });
        }
        if r.count == 0 {
            return Err(Error::OutOfRange(format!("count for {} must be at least 1", r.pin)));
        }
        mass[partition.level_of(&r.pin) - 1] += r.count;
    }
    let total: u64 = mass.iter().sum();
    Ok(mass
        .iter()
        .zip(&partition.sizes)
        .enumerate()
        .map(|(k, (&m, &size))| LevelFrequency {
            level: k + 1,
            proportion: m as f64 / total as f64,
            mean_frequency: m as f64 / size as f64,
        })
        .collect())
}

pub fn parse_frequency_records(text: &str) -> Result<Vec<FrequencyRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (p, c) = line
            .split_once(',')
            .ok_or_else(|| parse_err(i + 1, "expected pin,count"))?;
        let pin: Pin = p
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad PIN {p:?}")))?;
        let count: u64 = c
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad count {c:?}")))?;
        if count == 0 {
            return Err(parse_err(i + 1, "count must be at least 1"));
        }
        out.push(FrequencyRecord { pin, count });
    }
    Ok(out)
}

/// `pin,g1,...,gl,level` with six decimals; level is `-` without a partition.
pub fn write_strength_profile(profile: &StrengthProfile, partition: Option<&LevelPartition>) -> String {
    let l = profile.pin_length;
    let mut out = String::new();
    if let Some(m) = profile.sampled {
        out.push_str(&format!("# approximate: {m} sampled counterparts per PIN\n"));
    }
    out.push_str("# pin,");
    for j in 1..=l {
        out.push_str(&format!("g{j},"));
    }
    out.push_str("level\n");
    for v in 0..profile.len() {
        out.push_str(&format!("{v:0l$}"));
        for g in profile.tuple(v) {
            out.push_str(&format!(",{g:.6}"));
        }
        match partition {
            Some(p) => out.push_str(&format!(",{}\n", p.levels[v])),
            None => out.push_str(",-\n"),
        }
    }
    out
}

/// Reads a profile file back; returns the profile and the per-PIN levels if
/// every line carries one.
pub fn parse_strength_profile(text: &str) -> Result<(StrengthProfile, Option<Vec<u8>>)> {
    let mut length = None;
    let mut tuples = Vec::new();
    let mut levels = Vec::new();
    let mut all_levels = true;
    let mut sampled = None;
    let mut expected = 0u64;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if let Some(c) = line.strip_prefix("# approximate:") {
            sampled = c.split_whitespace().next().and_then(|m| m.parse().ok());
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let pin: Pin = f[0].parse().map_err(|_| parse_err(lineno, "bad PIN"))?;
        let l = *length.get_or_insert(pin.len());
        if pin.len() != l || f.len() != l + 2 {
            return Err(parse_err(lineno, format!("expected pin,g1..g{l},level")));
        }
        if pin.value() != expected {
            return Err(parse_err(lineno, "PINs must be complete and ascending"));
        }
        expected += 1;
        for g in &f[1..=l] {
            tuples.push(g.parse::<f64>().map_err(|_| parse_err(lineno, "bad band mean"))?);
        }
        match f[l + 1] {
            "-" => all_levels = false,
            s => levels.push(s.parse::<u8>().map_err(|_| parse_err(lineno, "bad level"))?),
        }
    }
    let l = length.ok_or_else(|| Error::EmptyInput("empty strength profile".into()))?;
    let profile = StrengthProfile::from_parts(l, tuples, sampled)?;
    Ok((profile, all_levels.then_some(levels)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::build_dictionary;
    use crate::geometry::standard_numpad;
    use crate::model::FittsModel;

    #[test]
    fn bands_cover_all_neighbours() {
        for l in 2..=6 {
            let bands = band_ranges(l);
            let total: usize = bands.iter().map(|b| b.1).sum();
            assert_eq!(total, 10usize.pow(l as u32) - 1);
            assert_eq!(bands[0], (0, 9));
            for w in bands.windows(2) {
                assert_eq!(w[0].0 + w[0].1, w[1].0);
            }
        }
    }

    #[test]
    fn level_size_rule() {
        assert_eq!(level_sizes(6), vec![100, 900, 9_000, 90_000, 900_000]);
        assert_eq!(level_sizes(3), vec![100, 900]);
        assert_eq!(level_sizes(2), vec![100]);
    }

    #[test]
    fn degenerate_model_gives_unit_tuples() {
        let m = FittsModel::new(150.0, 0.0).unwrap();
        let d = build_dictionary(&m, &standard_numpad(), 3).unwrap();
        let p = strength_measure(&d).unwrap();
        assert!(p.tuples().iter().all(|g| (g - 1.0).abs() < 1e-15));
        let part = partition_levels(&p).unwrap();
        let weakest: Vec<u64> = part.ranking().take(5).map(|p| p.value()).collect();
        assert_eq!(weakest, vec![0, 1, 2, 3, 4]);
        assert_eq!(part.level_of(&"099".parse().unwrap()), 1);
        assert_eq!(part.level_of(&"100".parse().unwrap()), 2);
    }

    #[test]
    fn tuples_are_non_increasing() {
        let d = build_dictionary(&FittsModel::reference(), &standard_numpad(), 3).unwrap();
        let p = strength_measure(&d).unwrap();
        for v in 0..p.len() {
            let t = p.tuple(v);
            assert!(t.windows(2).all(|w| w[0] >= w[1]), "{v}: {t:?}");
            assert!(t.iter().all(|g| *g > 0.0 && *g <= 1.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = build_dictionary(&FittsModel::reference(), &standard_numpad(), 1).unwrap();
        assert!(strength_measure(&d).is_err());
        let d = build_dictionary(&FittsModel::reference(), &standard_numpad(), 3).unwrap();
        let r = crate::dictionary::reduce_dictionary(&d, &[crate::pin::DigitConstraint::new(1, 1).unwrap()]).unwrap();
        assert!(strength_measure(&r).is_err());
        let short = StrengthProfile::from_parts(3, vec![0.5; 30], None).unwrap();
        assert!(partition_levels(&short).is_err());
    }

    #[test]
    fn sampled_with_all_counterparts_is_exact() {
        let d = build_dictionary(&FittsModel::reference(), &standard_numpad(), 2).unwrap();
        let exact = strength_measure(&d).unwrap();
        let sampled = strength_measure_sampled(&d, 99, 3).unwrap();
        assert_eq!(sampled, exact);
        let approx = strength_measure_sampled(&d, 50, 3).unwrap();
        assert_eq!(approx.sampled(), Some(50));
        assert_eq!(approx, strength_measure_sampled(&d, 50, 3).unwrap());
        for v in 0..100 {
            for (a, e) in approx.tuple(v).iter().zip(exact.tuple(v)) {
                assert!((a - e).abs() < 0.05, "{v}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn frequency_examples() {
        let m = FittsModel::reference();
        let d = build_dictionary(&m, &standard_numpad(), 3).unwrap();
        let part = partition_levels(&strength_measure(&d).unwrap()).unwrap();
        let weak = part.ranking().next().unwrap();
        let f = frequency_analysis(&part, &[FrequencyRecord { pin: weak, count: 50 }]).unwrap();
        assert_eq!(f[0].proportion, 1.0);
        assert_eq!(f[1].proportion, 0.0);
        assert_eq!(f[0].mean_frequency, 0.5);

        let uniform: Vec<_> = (0..1000)
            .map(|v| FrequencyRecord {
                pin: Pin::new(v, 3).unwrap(),
                count: 1,
            })
            .collect();
        let f = frequency_analysis(&part, &uniform).unwrap();
        assert_eq!(f[0].proportion, 0.1);
        assert_eq!(f[1].proportion, 0.9);
        assert!(frequency_analysis(&part, &[]).is_err());
        let wrong = [FrequencyRecord {
            pin: "1234".parse().unwrap(),
            count: 1,
        }];
        assert!(frequency_analysis(&part, &wrong).is_err());
    }

    #[test]
    fn profile_file_round_trip() {
        let d = build_dictionary(&FittsModel::reference(), &standard_numpad(), 2).unwrap();
        let p = strength_measure(&d).unwrap();
        let part = partition_levels(&p).unwrap();
        let text = write_strength_profile(&p, Some(&part));
        let (back, levels) = parse_strength_profile(&text).unwrap();
        let levels = levels.unwrap();
        assert_eq!(levels, part.levels());
        let rebuilt = LevelPartition::from_levels(2, levels.clone()).unwrap();
        assert_eq!(rebuilt.levels(), part.levels());
        assert!(LevelPartition::from_levels(2, levels[..50].to_vec()).is_err());
        assert!(LevelPartition::from_levels(2, vec![2; 100]).is_err());
        for (a, b) in back.tuples().iter().zip(p.tuples()) {
            assert!((a - b).abs() <= 5e-7);
        }
        let recs = parse_frequency_records("# pin,count\n12,4\n07,1\n").unwrap();
        assert_eq!(recs[1].pin.to_string(), "07");
        assert!(parse_frequency_records("12,0\n").is_err());
    }
}
