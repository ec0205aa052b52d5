//! `pinforge`: build timing dictionaries, rank PINs from keystroke timings,
//! measure PIN strength and run reproducible attack experiments.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pinforge::attack::{
    parse_observed_entries, rank_candidates, run_attack, success_curve, write_curve, write_observed_entries,
    write_outcomes, AttackMode, SimilarityMetric,
};
use pinforge::dictionary::{
    build_dictionary_with, load_dictionary, reduce_dictionary, save_dictionary, DictFormat, EntryPattern,
};
use pinforge::geometry::{difficulty_table, KeyId};
use pinforge::harness::{run_countermeasure, Experiment, ExperimentPlan, ExperimentReport, LayoutSpec};
use pinforge::model::{fit_extended, fit_fitts, ingest_keystroke_log, FittsModel};
use pinforge::pin::{DigitConstraint, Pin};
use pinforge::seeds::derive_seed;
use pinforge::simulator::{cohort_profiles, export_keystroke_log, simulate_cohort, GroundTruth, TruthModel};
use pinforge::strength::{
    frequency_analysis, parse_frequency_records, parse_strength_profile, partition_levels, strength_measure,
    strength_measure_sampled, write_strength_profile, LevelPartition,
};

const PIN_TAG: u64 = 0x5049_4e53;

#[derive(Parser)]
#[command(name = "pinforge", version, about = "Keystroke-timing PIN inference toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect keypad layouts.
    #[command(subcommand)]
    Layout(LayoutCmd),
    /// Fit a timing model to a keystroke log.
    Fit(FitArgs),
    /// Build or reduce timing dictionaries.
    #[command(subcommand)]
    Dict(DictCmd),
    /// Rank dictionary PINs against observed entries.
    #[command(subcommand)]
    Attack(AttackCmd),
    /// PIN strength levels.
    #[command(subcommand)]
    Strength(StrengthCmd),
    /// Generate a synthetic cohort of observed entries.
    Simulate(SimulateArgs),
    /// Run an experiment and write its report.
    Eval(EvalArgs),
    /// Evaluate the circular-keypad countermeasure.
    Countermeasure(PlanArgs),
}

#[derive(Args)]
struct LayoutArg {
    /// standard, circular[:radius] or file:PATH
    #[arg(long, default_value = "standard")]
    layout: String,
}

impl LayoutArg {
    fn resolve(&self) -> Result<pinforge::KeypadLayout> {
        Ok(self.layout.parse::<LayoutSpec>()?.resolve()?)
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = FittsModel::reference().a)]
    a: f64,
    #[arg(long, default_value_t = FittsModel::reference().b)]
    b: f64,
}

impl ModelArgs {
    fn model(&self) -> Result<FittsModel> {
        Ok(FittsModel::new(self.a, self.b)?)
    }
}

#[derive(Subcommand)]
enum LayoutCmd {
    /// Print key centers and widths.
    Show {
        #[command(flatten)]
        layout: LayoutArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the index of difficulty for every key pair.
    Difficulty {
        #[command(flatten)]
        layout: LayoutArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Keystroke log: session_id,key,key_down_ms
    #[arg(long)]
    log: PathBuf,
    #[command(flatten)]
    layout: LayoutArg,
    /// Fit the position-aware model for PINs of this length.
    #[arg(long)]
    extended: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for DictFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => DictFormat::Text,
            FormatArg::Binary => DictFormat::Binary,
        }
    }
}

#[derive(Subcommand)]
enum DictCmd {
    /// Predicted sequences for every PIN of a length.
    Build {
        #[arg(long)]
        length: usize,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        layout: LayoutArg,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep only PINs matching known digits (position=digit).
    Reduce {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long = "known", required = true)]
        known: Vec<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AttackCmd {
    /// One outcome row per observed entry (or per averaged group).
    Rank {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        entries: PathBuf,
        #[arg(long, default_value = "cosine")]
        metric: String,
        /// Average this many entries per (subject, PIN) first.
        #[arg(long)]
        multi: Option<usize>,
        /// Known digits as position=digit; repeatable.
        #[arg(long = "known")]
        known: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the success curve here.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,3,10,100,1000")]
        xs: Vec<usize>,
    },
    /// Top guesses for a single timing sequence.
    Guess {
        #[arg(long)]
        dict: PathBuf,
        /// Comma-separated intervals in ms.
        #[arg(long, value_delimiter = ',', required = true)]
        sequence: Vec<f64>,
        #[arg(long, default_value = "cosine")]
        metric: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

#[derive(Subcommand)]
enum StrengthCmd {
    /// Band means and levels for every PIN.
    Measure {
        #[arg(long)]
        length: usize,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        layout: LayoutArg,
        /// Estimate from this many sampled counterparts per PIN.
        #[arg(long)]
        sampled: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Required above length 4 without --sampled.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Share of leaked-PIN occurrences per level.
    Frequency {
        #[arg(long)]
        profile: PathBuf,
        /// pin,count lines
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    length: usize,
    /// Explicit PINs, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pins: Vec<String>,
    /// Draw this many PINs uniformly instead.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 1)]
    subjects: usize,
    #[arg(long, default_value_t = 15)]
    entries: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    layout: LayoutArg,
    #[arg(long, default_value_t = pinforge::simulator::DEFAULT_NOISE_SD)]
    noise_sd: f64,
    #[arg(long, default_value_t = pinforge::simulator::DEFAULT_QUANTIZATION)]
    quantization: f64,
    #[arg(long, default_value_t = pinforge::simulator::DEFAULT_MIN_INTERVAL)]
    min_interval: f64,
    #[arg(long, default_value_t = pinforge::simulator::DEFAULT_SPEED_RANGE.0)]
    speed_min: f64,
    #[arg(long, default_value_t = pinforge::simulator::DEFAULT_SPEED_RANGE.1)]
    speed_max: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the cohort as a keystroke log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    General,
    Targeted,
    Multi,
    Known,
    Countermeasure,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(value_enum)]
    experiment: ExperimentKind,
    #[command(flatten)]
    plan: PlanArgs,
}

/// Plan file plus one flag per plan key; flags override the file.
#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    length: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    truth_a: Option<String>,
    #[arg(long)]
    truth_b: Option<String>,
    #[arg(long)]
    layout: Option<String>,
    #[arg(long)]
    dictionary: Option<String>,
    #[arg(long)]
    cohort: Option<String>,
    #[arg(long)]
    train_subjects: Option<String>,
    #[arg(long)]
    train_pins: Option<String>,
    #[arg(long)]
    train_entries: Option<String>,
    #[arg(long)]
    subjects: Option<String>,
    #[arg(long)]
    entries_per_pin: Option<String>,
    #[arg(long)]
    pins_per_level: Option<String>,
    #[arg(long)]
    uniform_pins: Option<String>,
    #[arg(long)]
    noise_sd: Option<String>,
    #[arg(long)]
    quantization: Option<String>,
    #[arg(long)]
    min_interval: Option<String>,
    #[arg(long)]
    speed_min: Option<String>,
    #[arg(long)]
    speed_max: Option<String>,
    #[arg(long)]
    xs: Option<String>,
    #[arg(long)]
    strength: Option<String>,
    #[arg(long)]
    multi_k: Option<String>,
    #[arg(long)]
    revealed: Option<String>,
    #[arg(long)]
    targeted_entries: Option<String>,
    #[arg(long)]
    final_double: Option<String>,
    #[arg(long)]
    strict: Option<String>,
    #[arg(long)]
    disjoint: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl PlanArgs {
    fn flags(&self) -> [(&'static str, &Option<String>); 28] {
        [
            ("length", &self.length),
            ("seed", &self.seed),
            ("metric", &self.metric),
            ("truth_a", &self.truth_a),
            ("truth_b", &self.truth_b),
            ("layout", &self.layout),
            ("dictionary", &self.dictionary),
            ("cohort", &self.cohort),
            ("train_subjects", &self.train_subjects),
            ("train_pins", &self.train_pins),
            ("train_entries", &self.train_entries),
            ("subjects", &self.subjects),
            ("entries_per_pin", &self.entries_per_pin),
            ("pins_per_level", &self.pins_per_level),
            ("uniform_pins", &self.uniform_pins),
            ("noise_sd", &self.noise_sd),
            ("quantization", &self.quantization),
            ("min_interval", &self.min_interval),
            ("speed_min", &self.speed_min),
            ("speed_max", &self.speed_max),
            ("xs", &self.xs),
            ("strength", &self.strength),
            ("multi_k", &self.multi_k),
            ("revealed", &self.revealed),
            ("targeted_entries", &self.targeted_entries),
            ("final_double", &self.final_double),
            ("strict", &self.strict),
            ("disjoint", &self.disjoint),
        ]
    }

    fn build(&self, defaults: &[(&str, &str)]) -> Result<ExperimentPlan> {
        let mut plan = ExperimentPlan::default();
        for (k, v) in defaults {
            plan.set(k, v)?;
        }
        if let Some(p) = &self.plan {
            let text = read(p)?;
            plan = ExperimentPlan::parse(&text).with_context(|| format!("plan {}", p.display()))?;
        }
        for (k, v) in self.flags() {
            if let Some(v) = v {
                plan.set(k, v)?;
            }
        }
        plan.validate()?;
        Ok(plan)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Writes `body` under a metadata header to `out`, or to stdout.
fn emit(out: Option<&Path>, header: &[String], body: &str) -> Result<()> {
    let mut text = format!("# pinforge {}\n", env!("CARGO_PKG_VERSION"));
    for h in header {
        text.push_str(&format!("# {h}\n"));
    }
    text.push_str(body);
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn constraints(known: &[String]) -> Result<Vec<DigitConstraint>> {
    known
        .iter()
        .flat_map(|k| k.split(','))
        .map(|k| Ok(k.trim().parse::<DigitConstraint>()?))
        .collect()
}

fn load_dict(path: &Path) -> Result<pinforge::dictionary::TimingDictionary> {
    let mut f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    load_dictionary(&mut f).with_context(|| format!("dictionary {}", path.display()))
}

fn save_dict(dict: &pinforge::dictionary::TimingDictionary, format: FormatArg, out: &Path) -> Result<()> {
    let mut f =
        std::io::BufWriter::new(fs::File::create(out).with_context(|| format!("cannot write {}", out.display()))?);
    save_dictionary(dict, format.into(), &mut f)?;
    f.flush()?;
    Ok(())
}

fn cmd_layout(cmd: LayoutCmd) -> Result<()> {
    match cmd {
        LayoutCmd::Show { layout, out } => {
            let l = layout.resolve()?;
            emit(
                out.as_deref(),
                &[format!("layout {}", layout.layout)],
                &pinforge::geometry::save_layout(&l),
            )
        }
        LayoutCmd::Difficulty { layout, out } => {
            let l = layout.resolve()?;
            let t = difficulty_table(&l);
            let mut body = String::from("from,to,index_of_difficulty\n");
            for from in KeyId::ALL {
                for to in KeyId::ALL {
                    body.push_str(&format!("{from},{to},{:.6}\n", t[from.index()][to.index()]));
                }
            }
            emit(out.as_deref(), &[format!("layout {}", layout.layout)], &body)
        }
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let layout = args.layout.resolve()?;
    let samples = ingest_keystroke_log(&read(&args.log)?).with_context(|| format!("log {}", args.log.display()))?;
    let report = match args.extended {
        Some(l) => fit_extended(&samples, &layout, l)?.1,
        None => fit_fitts(&samples, &layout)?.1,
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let header = [
        format!("fit log={} layout={}", args.log.display(), args.layout.layout),
        format!("model {}", if args.extended.is_some() { "extended" } else { "fitts" }),
    ];
    emit(args.out.as_deref(), &header, &report.to_csv())
}

fn cmd_dict(cmd: DictCmd) -> Result<()> {
    match cmd {
        DictCmd::Build {
            length,
            model,
            layout,
            format,
            out,
        } => {
            let d = build_dictionary_with(&model.model()?, &layout.resolve()?, length, EntryPattern::Standard)?;
            save_dict(&d, format, &out)?;
            eprintln!("{} entries written to {}", d.len(), out.display());
            Ok(())
        }
        DictCmd::Reduce {
            dict,
            known,
            format,
            out,
        } => {
            let d = reduce_dictionary(&load_dict(&dict)?, &constraints(&known)?)?;
            save_dict(&d, format, &out)?;
            eprintln!("{} entries written to {}", d.len(), out.display());
            Ok(())
        }
    }
}

fn cmd_attack(cmd: AttackCmd) -> Result<()> {
    match cmd {
        AttackCmd::Rank {
            dict,
            entries,
            metric,
            multi,
            known,
            out,
            curve,
            xs,
        } => {
            let d = load_dict(&dict)?;
            let obs =
                parse_observed_entries(&read(&entries)?).with_context(|| format!("entries {}", entries.display()))?;
            let metric: SimilarityMetric = metric.parse()?;
            let known = constraints(&known)?;
            let mode = match (multi, known.is_empty()) {
                (Some(_), false) => bail!("--multi and --known cannot be combined"),
                (Some(k), true) => AttackMode::MultiEntry(k),
                (None, false) => AttackMode::KnownDigits(known),
                (None, true) => AttackMode::General,
            };
            let outcomes = run_attack(&d, &obs, &mode, metric)?;
            let header = [
                format!(
                    "attack dict={} entries={} metric={metric} mode={mode:?}",
                    dict.display(),
                    entries.display()
                ),
                format!("model {}", d.fingerprint()),
            ];
            emit(out.as_deref(), &header, &write_outcomes(&outcomes))?;
            if let Some(c) = curve {
                emit(Some(&c), &header, &write_curve(&success_curve(&outcomes, &xs)))?;
            }
            Ok(())
        }
        AttackCmd::Guess {
            dict,
            sequence,
            metric,
            top,
        } => {
            let d = load_dict(&dict)?;
            let ranked = rank_candidates(&d, &sequence, metric.parse()?)?;
            let mut body = String::from("rank,pin,score\n");
            for (i, (p, s)) in ranked.iter().take(top).enumerate() {
                body.push_str(&format!("{},{p},{s:.9}\n", i + 1));
            }
            emit(None, &[format!("guess dict={} metric={metric}", dict.display())], &body)
        }
    }
}

fn cmd_strength(cmd: StrengthCmd) -> Result<()> {
    match cmd {
        StrengthCmd::Measure {
            length,
            model,
            layout,
            sampled,
            seed,
            full,
            out,
        } => {
            if length > 4 && sampled.is_none() && !full {
                bail!("exact strength above length 4 takes hours; pass --full or --sampled M");
            }
            let d = build_dictionary_with(&model.model()?, &layout.resolve()?, length, EntryPattern::Standard)?;
            let t = std::time::Instant::now();
            let profile = match sampled {
                Some(m) => strength_measure_sampled(&d, m, seed)?,
                None => strength_measure(&d)?,
            };
            let partition = partition_levels(&profile)?;
            eprintln!("strength computed in {:.2}s", t.elapsed().as_secs_f64());
            let header = [
                format!("strength length={length} layout={} seed={seed}", layout.layout),
                format!("model {}", d.fingerprint()),
            ];
            emit(
                out.as_deref(),
                &header,
                &write_strength_profile(&profile, Some(&partition)),
            )
        }
        StrengthCmd::Frequency { profile, records, out } => {
            let (p, levels) = parse_strength_profile(&read(&profile)?)?;
            let partition = match levels {
                Some(levels) => LevelPartition::from_levels(p.pin_length(), levels)?,
                None => partition_levels(&p)?,
            };
            let recs = parse_frequency_records(&read(&records)?)?;
            let mut body = String::from("level,size,proportion,mean_frequency\n");
            for (f, size) in frequency_analysis(&partition, &recs)?.iter().zip(partition.sizes()) {
                body.push_str(&format!(
                    "{},{size},{:.6},{:.6}\n",
                    f.level, f.proportion, f.mean_frequency
                ));
            }
            emit(
                out.as_deref(),
                &[format!(
                    "frequency profile={} records={}",
                    profile.display(),
                    records.display()
                )],
                &body,
            )
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let layout = args.layout.resolve()?;
    let truth = GroundTruth::new(TruthModel::Fitts(args.model.model()?), layout, EntryPattern::Standard)?;
    let pins: Vec<Pin> = match (args.random, args.pins.is_empty()) {
        (Some(_), false) => bail!("--pins and --random cannot be combined"),
        (None, true) => bail!("give --pins or --random"),
        (None, false) => args
            .pins
            .iter()
            .map(|p| {
                let pin: Pin = p.parse()?;
                if pin.len() != args.length {
                    bail!("PIN {p} does not have length {}", args.length);
                }
                Ok(pin)
            })
            .collect::<Result<_>>()?,
        (Some(n), true) => {
            let space = pinforge::pin::space_size(args.length);
            (0..n as u64)
                .map(|i| Pin::new(derive_seed(args.seed, &[PIN_TAG, i]) % space, args.length).map_err(Into::into))
                .collect::<Result<_>>()?
        }
    };
    let profiles = cohort_profiles(
        args.subjects,
        args.seed,
        (args.speed_min, args.speed_max),
        args.noise_sd,
        args.quantization,
        args.min_interval,
    )?;
    let cohort = simulate_cohort(&truth, &pins, &profiles, args.entries)?;
    let header = [format!(
        "simulate length={} pins={} subjects={} entries={} a={:?} b={:?} layout={} noise_sd={:?} quantization={:?} min_interval={:?} speed=[{:?},{:?}] seed={}",
        args.length,
        pins.len(),
        args.subjects,
        args.entries,
        args.model.a,
        args.model.b,
        args.layout.layout,
        args.noise_sd,
        args.quantization,
        args.min_interval,
        args.speed_min,
        args.speed_max,
        args.seed
    )];
    emit(args.out.as_deref(), &header, &write_observed_entries(&cohort))?;
    if let Some(log) = &args.log {
        let text = export_keystroke_log(&cohort, EntryPattern::Standard)?;
        fs::write(log, text).with_context(|| format!("cannot write {}", log.display()))?;
    }
    Ok(())
}

fn print_timings(report: &ExperimentReport) {
    for (stage, secs) in &report.timings {
        eprintln!("{stage}: {secs:.2}s");
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let report = match args.experiment {
        ExperimentKind::Countermeasure => run_countermeasure(&args.plan.build(&[("layout", "circular:1")])?)?,
        e => {
            let plan = args.plan.build(&[])?;
            let exp = Experiment::prepare(&plan, None)?;
            match e {
                ExperimentKind::General => exp.general()?,
                ExperimentKind::Targeted => exp.targeted()?,
                ExperimentKind::Multi => exp.multi_entry(plan.multi_k)?,
                ExperimentKind::Known => exp.known_digits(plan.revealed)?,
                ExperimentKind::Countermeasure => unreachable!(),
            }
        }
    };
    write_report(&report, args.plan.out.as_deref())
}

fn write_report(report: &ExperimentReport, out: Option<&Path>) -> Result<()> {
    print_timings(report);
    emit(out, &[], &report.to_text())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Layout(c) => cmd_layout(c),
        Command::Fit(a) => cmd_fit(a),
        Command::Dict(c) => cmd_dict(c),
        Command::Attack(c) => cmd_attack(c),
        Command::Strength(c) => cmd_strength(c),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Countermeasure(p) => {
            let report = run_countermeasure(&p.build(&[("layout", "circular:1")])?)?;
            write_report(&report, p.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            eprintln!("{}", first.trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
