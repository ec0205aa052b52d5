//! Acceptance gate: one PASS/FAIL line per criterion.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pinforge::attack::{
    cosine_similarity, parse_observed_entries, random_baseline, rank_candidates, rank_of_pin, write_observed_entries,
    ObservedEntry, SimilarityMetric,
};
use pinforge::dictionary::{
    build_dictionary, build_dictionary_with, load_dictionary, reduce_dictionary, save_dictionary, DictFormat,
    EntryPattern, TimingDictionary,
};
use pinforge::geometry::{
    circular_layout, load_layout, save_layout, standard_numpad, KeyGeometry, KeyId, KeypadLayout,
};
use pinforge::harness::{run_countermeasure, truth_partition, Experiment, ExperimentPlan, LayoutSpec};
use pinforge::model::{fit_extended, parse_keystroke_log, samples_from_entry, ExtendedModel, FittsModel};
use pinforge::pin::{DigitConstraint, Pin, TimingSequence};
use pinforge::simulator::{
    export_keystroke_log, simulate_cohort, simulate_entry, GroundTruth, TruthModel, TypistProfile,
};
use pinforge::strength::{partition_levels, strength_measure, strength_measure_sampled};

type Outcome = (bool, String);

const TABLE_1: [(u64, [f64; 6]); 10] = [
    (504316, [232.9502, 232.9502, 237.2201, 231.3787, 237.2201, 226.0874]),
    (504317, [232.9502, 232.9502, 237.2201, 231.3787, 231.3787, 268.5020]),
    (504318, [232.9502, 232.9502, 237.2201, 231.3787, 237.2201, 256.9941]),
    (504319, [232.9502, 232.9502, 237.2201, 231.3787, 250.0087, 247.2787]),
    (504320, [232.9502, 232.9502, 237.2201, 199.0121, 203.7241, 244.2814]),
    (504321, [232.9502, 232.9502, 237.2201, 199.0121, 199.0121, 254.0817]),
    (504322, [232.9502, 232.9502, 237.2201, 199.0121, 135.9120, 232.9502]),
    (504323, [232.9502, 232.9502, 237.2201, 199.0121, 199.0121, 203.7241]),
    (504324, [232.9502, 232.9502, 237.2201, 199.0121, 214.2976, 259.6575]),
    (504325, [232.9502, 232.9502, 237.2201, 199.0121, 199.0121, 243.2131]),
];

fn reference() -> FittsModel {
    FittsModel::new(135.9120, 47.7334).unwrap()
}

fn table_1() -> Outcome {
    let t = Instant::now();
    let d = build_dictionary(&reference(), &standard_numpad(), 6).unwrap();
    let mut worst: f64 = 0.0;
    for (pin, row) in TABLE_1 {
        let got = d.get(&Pin::new(pin, 6).unwrap()).unwrap();
        for (g, e) in got.iter().zip(row) {
            worst = worst.max((g - e).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (
        worst <= 0.02 && secs < 1.0,
        format!("max residual {worst:.5} ms, {secs:.3}s"),
    )
}

fn dictionary_scale() -> Outcome {
    let t = Instant::now();
    let d6 = build_dictionary(&reference(), &standard_numpad(), 6).unwrap();
    let t6 = t.elapsed();
    let t = Instant::now();
    let d4 = build_dictionary(&reference(), &standard_numpad(), 4).unwrap();
    let t4 = t.elapsed();
    let ok = d6.len() == 1_000_000 && d4.len() == 10_000 && t6 < Duration::from_secs(60) && t4 < Duration::from_secs(1);
    (
        ok,
        format!(
            "l=6 {} rows in {:.3}s, l=4 {} rows in {:.4}s",
            d6.len(),
            t6.as_secs_f64(),
            d4.len(),
            t4.as_secs_f64()
        ),
    )
}

fn baseline_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    let mut bad = 0;
    while checked < 100 {
        let l = rng.random_range(1..=10usize);
        let k = rng.random_range(0..l);
        let n = 10u64.pow((l - k) as u32);
        let x = rng.random_range(1..=n);
        // decimal parsing is an independent, correctly rounded route to x / 10^(l-k)
        let expected: f64 = format!("{x}e-{}", l - k).parse().unwrap();
        if random_baseline(l, k, x).unwrap() != expected {
            bad += 1;
        }
        checked += 1;
    }
    (bad == 0, format!("{checked} combinations, {bad} mismatches"))
}

fn naive_strength(dict: &TimingDictionary) -> Vec<Vec<f64>> {
    let n = dict.len();
    let l = dict.pin_length();
    (0..n)
        .map(|i| {
            let a = dict.row(i);
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut cos: Vec<f64> = (0..n)
                .filter(|j| *j != i)
                .map(|j| {
                    let b = dict.row(j);
                    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
                })
                .collect();
            cos.sort_by(|x, y| y.partial_cmp(x).unwrap());
            (1..=l)
                .map(|j| {
                    let lo = 10usize.pow(j as u32 - 1);
                    let hi = 10usize.pow(j as u32) - 1;
                    cos[lo - 1..hi].iter().sum::<f64>() / (hi - lo + 1) as f64
                })
                .collect()
        })
        .collect()
}

fn strength_oracle() -> Outcome {
    let d3 = build_dictionary(&reference(), &standard_numpad(), 3).unwrap();
    let fast = strength_measure(&d3).unwrap();
    let slow = naive_strength(&d3);
    let mut worst: f64 = 0.0;
    for (i, row) in slow.iter().enumerate() {
        for (a, b) in fast.tuple(i).iter().zip(row) {
            worst = worst.max((a - b).abs());
        }
    }
    let d4 = build_dictionary(&reference(), &standard_numpad(), 4).unwrap();
    let t = Instant::now();
    let p4 = strength_measure(&d4).unwrap();
    let secs = t.elapsed().as_secs_f64();
    (
        worst <= 1e-12 && secs < 600.0 && p4.len() == 10_000,
        format!("l=3 max deviation {worst:.2e}, l=4 exact in {secs:.2}s"),
    )
}

fn partition_sizes() -> Outcome {
    let d6 = build_dictionary(&reference(), &standard_numpad(), 6).unwrap();
    let t = Instant::now();
    let p6 = strength_measure_sampled(&d6, 200, 11).unwrap();
    let part6 = partition_levels(&p6).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let mut counts6 = vec![0usize; part6.level_count()];
    for l in part6.levels() {
        counts6[*l as usize - 1] += 1;
    }
    let d3 = build_dictionary(&reference(), &standard_numpad(), 3).unwrap();
    let part3 = partition_levels(&strength_measure(&d3).unwrap()).unwrap();
    let mut counts3 = vec![0usize; part3.level_count()];
    for l in part3.levels() {
        counts3[*l as usize - 1] += 1;
    }
    let ok = counts6 == [100, 900, 9_000, 90_000, 900_000] && counts3 == [100, 900];
    (
        ok,
        format!("l=6 {counts6:?} (sampled profile, {secs:.1}s), l=3 {counts3:?}"),
    )
}

fn distinct_pins(n: usize, l: usize, seed: u64) -> Vec<Pin> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let space = 10u64.pow(l as u32);
    let mut out = Vec::new();
    while out.len() < n {
        let v = rng.random_range(0..space);
        if seen.insert(v) {
            out.push(Pin::new(v, l).unwrap());
        }
    }
    out
}

fn zero_noise() -> Outcome {
    let layout = standard_numpad();
    let d = build_dictionary(&reference(), &layout, 4).unwrap();
    let truth = GroundTruth::fitts(reference(), layout);
    let pins = distinct_pins(1000, 4, 5);
    let cohort = simulate_cohort(&truth, &pins, &[TypistProfile::exact(9)], 1).unwrap();
    let mut score_ok = 0;
    let mut unique = 0;
    let mut unique_rank1 = 0;
    let mut tied_ok = 0;
    for e in &cohort {
        let pin = e.true_pin.unwrap();
        let (rank, score) = rank_of_pin(&d, &e.sequence, SimilarityMetric::Cosine, &pin)
            .unwrap()
            .unwrap();
        if score == 1.0 {
            score_ok += 1;
        }
        // brute-force tie class: rows parallel to the true row
        let own = d.get(&pin).unwrap();
        let class = (0..d.len())
            .filter(|&j| d.pin(j) != pin && 1.0 - cosine_similarity(own, d.row(j)).unwrap() < 1e-12)
            .count();
        if class == 0 {
            unique += 1;
            if rank == 1 {
                unique_rank1 += 1;
            }
        } else if rank <= class + 1 {
            tied_ok += 1;
        }
    }
    let tied = cohort.len() - unique;
    (
        score_ok == cohort.len() && unique_rank1 == unique && tied_ok == tied,
        format!(
            "score 1.0 in {score_ok}/{}, rank 1 in {unique_rank1}/{unique} unique rows, {tied_ok}/{tied} tied rows within class",
            cohort.len()
        ),
    )
}

fn scale_invariance() -> Outcome {
    let layout = standard_numpad();
    let d = build_dictionary(&reference(), &layout, 4).unwrap();
    let truth = GroundTruth::fitts(reference(), layout);
    let pins = distinct_pins(100, 4, 8);
    let profile = TypistProfile::new(1.1, 25.0, 0.0, 30.0, 77).unwrap();
    let cohort = simulate_cohort(&truth, &pins, &[profile], 1).unwrap();
    let mut identical = 0;
    for e in &cohort {
        let base = rank_candidates(&d, &e.sequence, SimilarityMetric::Cosine).unwrap();
        let same = [0.5, 2.0, 7.3].iter().all(|f| {
            let s = e.sequence.scaled(*f).unwrap();
            rank_candidates(&d, &s, SimilarityMetric::Cosine).unwrap().pins() == base.pins()
        });
        if same {
            identical += 1;
        }
    }
    (
        identical == cohort.len(),
        format!("{identical}/{} cases identical under x0.5, x2, x7.3", cohort.len()),
    )
}

fn monotonicity() -> Outcome {
    let plan = ExperimentPlan::default();
    let partition = truth_partition(&plan).unwrap();
    let (mut a, mut b, mut c) = (0, 0, 0);
    let mut details = Vec::new();
    for seed in 1..=5u64 {
        let p = ExperimentPlan { seed, ..plan.clone() };
        let exp = Experiment::prepare(&p, Some(partition.clone())).unwrap();
        let general = exp.general().unwrap();
        let beats = [3usize, 10, 100]
            .iter()
            .all(|&x| general.aggregate.at(x).unwrap() >= 10.0 * random_baseline(4, 0, x as u64).unwrap());
        let known: Vec<_> = (1..4).map(|k| exp.known_digits(k).unwrap()).collect();
        let nondecreasing = known.windows(2).all(|w| {
            w[1].aggregate
                .curve
                .iter()
                .all(|(x, r)| w[0].aggregate.at(*x).is_none_or(|prev| *r >= prev))
        });
        let multi = exp.multi_entry(10).unwrap();
        let better = multi.aggregate.mean_rank <= general.aggregate.mean_rank;
        a += beats as usize;
        b += nondecreasing as usize;
        c += better as usize;
        details.push(format!(
            "seed {seed}: s3={:.4} s10={:.4} s100={:.4} rank {:.1}/{:.1}",
            general.aggregate.at(3).unwrap(),
            general.aggregate.at(10).unwrap(),
            general.aggregate.at(100).unwrap(),
            multi.aggregate.mean_rank,
            general.aggregate.mean_rank
        ));
    }
    for d in &details {
        println!("    {d}");
    }
    (
        a >= 4 && b >= 4 && c >= 4,
        format!("(a) {a}/5, (b) {b}/5, (c) {c}/5 seeds pass"),
    )
}

fn countermeasure() -> Outcome {
    let layout = circular_layout(1.0, true).unwrap();
    let d = build_dictionary_with(
        &reference(),
        &layout,
        4,
        EntryPattern::Interleaved { final_double: true },
    )
    .unwrap();
    let first = d.row(0).to_vec();
    let deviation = (0..d.len())
        .map(|i| (1.0 - cosine_similarity(&first, d.row(i)).unwrap()).abs())
        .fold(0.0, f64::max);
    let plan = ExperimentPlan {
        layout: LayoutSpec::Circular(1.0),
        uniform_pins: 2000,
        entries_per_pin: 3,
        ..ExperimentPlan::default()
    };
    let report = run_countermeasure(&plan).unwrap();
    let s100 = report.aggregate.at(100).unwrap();
    let ratio = s100 / 0.01;
    (
        deviation < 1e-12 && (0.5..=2.0).contains(&ratio),
        format!("max cosine deviation {deviation:.1e}, success@100 {s100:.4} ({ratio:.2}x baseline)"),
    )
}

fn extended_statistics() -> Outcome {
    let layout = standard_numpad();
    let l = 6;
    let base = reference();
    let null_truth = GroundTruth::new(
        TruthModel::Extended(base.into()),
        layout.clone(),
        EntryPattern::Standard,
    )
    .unwrap();
    let mut nonsig = [0usize; 4];
    for run in 0..100u64 {
        let profile = TypistProfile::new(1.0, 15.0, 0.0, 1e-6, 1000 + run).unwrap();
        let pins = distinct_pins(225, l, run);
        let mut samples = Vec::new();
        for pin in &pins {
            let s = simulate_entry(&null_truth, pin, &profile, 0).unwrap();
            samples.extend(samples_from_entry(pin, &s).unwrap());
        }
        assert_eq!(samples.len(), 1350);
        let (_, report) = fit_extended(&samples, &layout, l).unwrap();
        for (k, slot) in nonsig.iter_mut().enumerate() {
            if !report.significant(k + 2, 0.01) {
                *slot += 1;
            }
        }
    }
    let coefs = [140.0, 45.0, 30.0, -12.0, 7.5, 18.0];
    let truth = GroundTruth::new(
        TruthModel::Extended(ExtendedModel::new(coefs).unwrap()),
        layout.clone(),
        EntryPattern::Standard,
    )
    .unwrap();
    let mut samples = Vec::new();
    for pin in distinct_pins(225, l, 99) {
        let s = simulate_entry(&truth, &pin, &TypistProfile::exact(1), 0).unwrap();
        samples.extend(samples_from_entry(&pin, &s).unwrap());
    }
    let (fit, _) = fit_extended(&samples, &layout, l).unwrap();
    let worst = fit
        .coefficients()
        .iter()
        .zip(coefs)
        .map(|(g, e)| ((g - e) / e).abs())
        .fold(0.0, f64::max);
    (
        nonsig.iter().all(|n| *n >= 90) && worst <= 1e-9,
        format!("non-significant runs c,d,e,f = {nonsig:?}/100, noiseless max relative error {worst:.1e}"),
    )
}

fn random_layout(rng: &mut ChaCha8Rng) -> KeypadLayout {
    let keys = KeyId::ALL
        .iter()
        .map(|k| {
            KeyGeometry::new(
                *k,
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.05..1.5),
            )
        })
        .collect();
    KeypadLayout::new(format!("rand{}", rng.random::<u32>()), keys).unwrap()
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut fails = [0usize; 5];
    for case in 0..200 {
        let layout = random_layout(&mut rng);
        if load_layout(&save_layout(&layout)).unwrap() != layout {
            fails[0] += 1;
        }

        let model = FittsModel::new(rng.random_range(50.0..300.0), rng.random_range(0.0..120.0)).unwrap();
        let l = rng.random_range(1..=3usize);
        let mut dict = build_dictionary(&model, &layout, l).unwrap();
        if l > 1 && case % 2 == 0 {
            let c = DigitConstraint::new(rng.random_range(1..=l), rng.random_range(0..10)).unwrap();
            dict = reduce_dictionary(&dict, &[c]).unwrap();
        }
        let mut bin = Vec::new();
        save_dictionary(&dict, DictFormat::Binary, &mut bin).unwrap();
        let back = load_dictionary(&mut bin.as_slice()).unwrap();
        if back != dict
            || back
                .values()
                .iter()
                .zip(dict.values())
                .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            fails[1] += 1;
        }
        // text stores four decimals: equal at that precision and stable on re-save
        let mut txt = Vec::new();
        save_dictionary(&dict, DictFormat::Text, &mut txt).unwrap();
        let back = load_dictionary(&mut txt.as_slice()).unwrap();
        let mut again = Vec::new();
        save_dictionary(&back, DictFormat::Text, &mut again).unwrap();
        let close = back.len() == dict.len()
            && back.fingerprint().matches(dict.fingerprint())
            && (0..dict.len()).all(|i| back.pin(i) == dict.pin(i))
            && back
                .values()
                .iter()
                .zip(dict.values())
                .all(|(a, b)| (a - b).abs() <= 5e-5 + 1e-9);
        if !close || again != txt {
            fails[2] += 1;
        }

        let truth = GroundTruth::fitts(model, layout.clone());
        let n_pins = rng.random_range(1..5usize);
        let pins: Vec<Pin> = (0..n_pins)
            .map(|_| Pin::new(rng.random_range(0..10u64.pow(l as u32)), l).unwrap())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        let grid = [15.0, 1.0, 0.5, 0.25][case % 4];
        let profile = TypistProfile::new(rng.random_range(0.7..1.4), 25.0, grid, 30.0, rng.random()).unwrap();
        let cohort = simulate_cohort(&truth, &pins, &[profile], rng.random_range(1..4)).unwrap();
        let log = export_keystroke_log(&cohort, EntryPattern::Standard).unwrap();
        let sessions = parse_keystroke_log(&log).unwrap();
        let log_ok = sessions.len() == cohort.len()
            && sessions.iter().zip(&cohort).all(|(s, e)| {
                s.id == e.case_id
                    && s.intervals() == e.sequence.values()
                    && s.keys == EntryPattern::Standard.key_sequence(&e.true_pin.unwrap())
            });
        if !log_ok {
            fails[3] += 1;
        }

        let entries: Vec<ObservedEntry> = (0..rng.random_range(1..6))
            .map(|i| ObservedEntry {
                case_id: format!("c{case}-{i}"),
                subject_id: format!("S{}", rng.random_range(0..9)),
                true_pin: rng
                    .random_bool(0.7)
                    .then(|| Pin::new(rng.random_range(0..1000), 3).unwrap()),
                sequence: TimingSequence::new((0..3).map(|_| rng.random_range(1e-3..1e4)).collect()).unwrap(),
            })
            .collect();
        if parse_observed_entries(&write_observed_entries(&entries)).unwrap() != entries {
            fails[4] += 1;
        }
    }
    (
        fails.iter().all(|f| *f == 0),
        format!(
            "200 cases each; failures layout={} dict-binary={} dict-text={} keystroke-log={} observed-entries={}",
            fails[0], fails[1], fails[2], fails[3], fails[4]
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("Table 1 reproduction", table_1),
        ("dictionary scale", dictionary_scale),
        ("baseline closed form", baseline_closed_form),
        ("strength oracle equivalence", strength_oracle),
        ("partition sizes", partition_sizes),
        ("zero-noise perfection", zero_noise),
        ("scale invariance", scale_invariance),
        ("monotonicity suite", monotonicity),
        ("countermeasure nullification", countermeasure),
        ("extended-model statistics", extended_statistics),
        ("round trips", round_trips),
    ];
    // numeric arguments select criteria; flags from the test runner are ignored
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = check();
        println!(
            "criterion {:>2} {}: {name}: {detail} [{:.1}s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        failed += (!ok) as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
