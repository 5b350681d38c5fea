//! `ecgauth` command-line front end.
//!
//! Exit codes: 0 success or Known, 1 partial failure, 2 usage or input
//! error, 3 Unknown, 4 Rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ecgauth::authenticator::{
    authenticate, parse_decision_log, parse_trial_manifest, run_trials, write_decision_log, ConfusionMatrix,
    Outcome,
};
use ecgauth::config::{parse_override, Settings};
use ecgauth::corpus::{load_enroll_manifest, load_trials, read_record_file, write_corpus, Corpus, CorpusSpec};
use ecgauth::enrollment::{load_db, save_db, EnrollmentDb};
use ecgauth::numfmt::fmt_sig;
use ecgauth::preprocess::preprocess_pipeline;
use ecgauth::signal::write_record;
use ecgauth::sweep::{emit_curve, run_sweep, PlanFile, SweepCorpus, SweepPlan};
use ecgauth::Error;

const EXIT_PARTIAL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_UNKNOWN: u8 = 3;
const EXIT_REJECTED: u8 = 4;

#[derive(Parser)]
#[command(name = "ecgauth", version, about = "ECG biometric enrollment and authentication")]
struct Cli {
    /// Configuration file of key=value pairs.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress warnings and progress notes.
    #[arg(long, global = true)]
    quiet: bool,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with enrollment and trial manifests.
    Synth {
        /// Corpus spec file (key=value).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run baseline, interference and polarity correction on one record.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Enroll every record of a `path,id` manifest into a database.
    Enroll {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        db: PathBuf,
        /// Replace entities already in an existing database file.
        #[arg(long)]
        replace: bool,
    },
    /// Authenticate one record against a database.
    Auth {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        record: PathBuf,
    },
    /// Score a labeled trial manifest and report the confusion matrix.
    Eval {
        /// Trial manifest (`path,actual`).
        #[arg(long)]
        trials: PathBuf,
        /// Database to authenticate against (not needed with --replay).
        #[arg(long, required_unless_present = "replay")]
        db: Option<PathBuf>,
        /// Gate limit factor for a stricter quality regime.
        #[arg(long, value_name = "FACTOR")]
        strict_gate: Option<f64>,
        /// Take outcomes from a decision log instead of matching.
        #[arg(long, value_name = "LOG", conflicts_with = "db")]
        replay: Option<PathBuf>,
        /// Write the per-trial decision log here.
        #[arg(long)]
        decisions: Option<PathBuf>,
    },
    /// Run a parameter sweep from a plan file.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Curve CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Ctx {
    settings: Settings,
    seed: Option<u64>,
    quiet: bool,
    overrides: Vec<(String, String)>,
}

impl Ctx {
    fn warn(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("warning: {}", msg.as_ref());
        }
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.settings.seed)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let overrides = cli
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<ecgauth::Result<Vec<_>>>()?;
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        let text = read_text(path)?;
        settings.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    let ctx = Ctx { settings, seed: cli.seed, quiet: cli.quiet, overrides };
    match cli.command {
        Command::Sweep { plan, out } => cmd_sweep(ctx, &plan, out.as_deref()),
        other => {
            let mut ctx = ctx;
            for (k, v) in &ctx.overrides {
                ctx.settings.set(k, v)?;
            }
            ctx.settings.validate()?;
            match other {
                Command::Synth { spec, out } => cmd_synth(&ctx, &spec, &out),
                Command::Preprocess { input, output } => cmd_preprocess(&ctx, &input, &output),
                Command::Enroll { manifest, db, replace } => cmd_enroll(&ctx, &manifest, &db, replace),
                Command::Auth { db, record } => cmd_auth(&ctx, &db, &record),
                Command::Eval { trials, db, strict_gate, replay, decisions } => {
                    cmd_eval(&ctx, &trials, db.as_deref(), strict_gate, replay.as_deref(), decisions.as_deref())
                }
                Command::Sweep { .. } => unreachable!(),
            }
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_db(path: &Path) -> Result<EnrollmentDb> {
    let file = fs::File::open(path).with_context(|| format!("cannot open database {}", path.display()))?;
    load_db(BufReader::new(file)).with_context(|| format!("in {}", path.display()))
}

fn write_db(db: &EnrollmentDb, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    save_db(db, &mut out)?;
    out.flush()?;
    Ok(())
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn cmd_synth(ctx: &Ctx, spec_path: &Path, out: &Path) -> Result<u8> {
    let spec = CorpusSpec::from_text(&read_text(spec_path)?).with_context(|| format!("in {}", spec_path.display()))?;
    let seed = ctx.seed();
    let corpus = Corpus::generate(&spec, seed)?;
    let split = corpus.split(spec.n_unknown, seed)?;
    write_corpus(&corpus, &split, out)?;
    if !ctx.quiet {
        eprintln!(
            "wrote {} subjects ({} enrolled, {} trials) to {}",
            corpus.subjects.len(),
            split.enroll.len(),
            split.trials.len(),
            out.display()
        );
    }
    Ok(0)
}

fn cmd_preprocess(ctx: &Ctx, input: &Path, output: &Path) -> Result<u8> {
    let rec = read_record_file(input)?;
    let out = preprocess_pipeline(&rec, &ctx.settings.pipeline.preprocess)?;
    let mut w = BufWriter::new(fs::File::create(output).with_context(|| format!("cannot create {}", output.display()))?);
    write_record(&out, &mut w)?;
    w.flush()?;
    Ok(0)
}

fn cmd_enroll(ctx: &Ctx, manifest: &Path, db_path: &Path, replace: bool) -> Result<u8> {
    let entries = load_enroll_manifest(manifest).with_context(|| format!("in {}", manifest.display()))?;
    if entries.is_empty() {
        bail!("manifest {} lists no records", manifest.display());
    }
    let mut db = if db_path.exists() {
        let db = read_db(db_path)?;
        if db.config != ctx.settings.pipeline {
            bail!("{} was built with a different configuration", db_path.display());
        }
        db
    } else {
        EnrollmentDb::new(ctx.settings.pipeline.clone(), unix_now())?
    };

    let mut seen = BTreeSet::new();
    let mut failures = 0;
    let mut attempted = 0;
    for (id, path) in &entries {
        if !seen.insert(id.clone()) {
            ctx.warn(format!("duplicate id `{id}` in manifest, skipping {}", path.display()));
            continue;
        }
        attempted += 1;
        let result = read_record_file(path).and_then(|rec| db.enroll(id, &rec, replace));
        if let Err(e) = result {
            failures += 1;
            match e {
                Error::DuplicateEntity(_) => ctx.warn(format!("`{id}` is already enrolled, skipping")),
                e => ctx.warn(format!("`{id}`: {e}")),
            }
        }
    }
    if failures == attempted {
        eprintln!("error: no record could be enrolled");
        return Ok(EXIT_PARTIAL);
    }
    write_db(&db, db_path)?;
    if !ctx.quiet {
        eprintln!("{} entities in {}", db.len(), db_path.display());
    }
    Ok(0)
}

fn cmd_auth(ctx: &Ctx, db_path: &Path, record: &Path) -> Result<u8> {
    let db = read_db(db_path)?;
    let rec = read_record_file(record)?;
    let d = authenticate(&db, &rec, &ctx.settings.auth)?;
    println!("outcome,best_id,best_mse,gate_mse");
    println!("{}", ecgauth::authenticator::decision_line(&d, ""));
    Ok(match d.outcome {
        Outcome::Known(_) => 0,
        Outcome::Unknown => EXIT_UNKNOWN,
        Outcome::Rejected(reason) => {
            ctx.warn(reason);
            EXIT_REJECTED
        }
    })
}

fn cmd_eval(
    ctx: &Ctx,
    trials_path: &Path,
    db_path: Option<&Path>,
    strict_gate: Option<f64>,
    replay: Option<&Path>,
    decisions_out: Option<&Path>,
) -> Result<u8> {
    let mut auth = ctx.settings.auth.clone();
    if let Some(f) = strict_gate {
        auth.gate_limit_factor = f;
        auth.validate()?;
    }

    let cm = match (replay, db_path) {
        (Some(log), _) => {
            let manifest = parse_trial_manifest(&read_text(trials_path)?)?;
            if manifest.is_empty() {
                bail!("trial manifest {} is empty", trials_path.display());
            }
            let outcomes: BTreeMap<String, Outcome> = parse_decision_log(&read_text(log)?)?.into_iter().collect();
            let mut cm = ConfusionMatrix::default();
            for (path, actual) in &manifest {
                let id = Path::new(path).file_stem().map_or(path.clone(), |s| s.to_string_lossy().into_owned());
                let outcome = outcomes.get(&id).with_context(|| format!("no decision for trial `{id}`"))?;
                cm.record(outcome, actual);
            }
            cm
        }
        (None, Some(db_path)) => {
            let db = read_db(db_path)?;
            let trials = load_trials(trials_path).with_context(|| format!("in {}", trials_path.display()))?;
            if trials.is_empty() {
                bail!("trial manifest {} is empty", trials_path.display());
            }
            let (cm, decisions) = run_trials(&db, &trials, &auth, ctx.seed())?;
            if let Some(path) = decisions_out {
                let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
                write_decision_log(&decisions, &mut w)?;
                w.flush()?;
            }
            cm
        }
        (None, None) => bail!("eval needs --db or --replay"),
    };

    let stdout = io::stdout();
    let mut out = stdout.lock();
    cm.write_csv(&mut out)?;
    if cm.total() == 0 {
        writeln!(out, "accuracy=nan recall_unknown=nan identification_accuracy=nan n_trials={} rejected={}", cm.n_trials(), cm.n_rejected)?;
        ctx.warn("every trial was rejected");
        return Ok(EXIT_PARTIAL);
    }
    let m = cm.metrics()?;
    writeln!(
        out,
        "accuracy={} recall_unknown={} identification_accuracy={} n_trials={} rejected={}",
        fmt_sig(m.accuracy, 6),
        fmt_sig(m.recall_unknown, 6),
        fmt_sig(m.identification_accuracy, 6),
        cm.n_trials(),
        cm.n_rejected
    )?;
    Ok(0)
}

fn cmd_sweep(ctx: Ctx, plan_path: &Path, out: Option<&Path>) -> Result<u8> {
    let text = read_text(plan_path)?;
    let file = PlanFile::parse(&text).with_context(|| format!("in {}", plan_path.display()))?;
    let mut settings = ctx.settings.clone();
    for (k, v) in file.settings.iter().chain(&ctx.overrides) {
        settings.set(k, v).with_context(|| format!("in {}", plan_path.display()))?;
    }
    settings.validate()?;
    let seed = ctx.seed.or(file.seed).unwrap_or(settings.seed);

    let base = plan_path.parent().unwrap_or_else(|| Path::new("."));
    let corpus = match (&file.enroll_manifest, &file.trials_manifest) {
        (Some(e), Some(t)) => {
            let enroll = load_enroll_manifest(&base.join(e))?
                .into_iter()
                .map(|(id, p)| Ok((id, read_record_file(&p)?)))
                .collect::<ecgauth::Result<Vec<_>>>()?;
            SweepCorpus::Fixed { enroll, trials: load_trials(&base.join(t))? }
        }
        _ => SweepCorpus::Synthetic { spec: file.corpus.clone(), seed },
    };
    let plan = SweepPlan {
        variable: file.variable,
        grid: file.grid.clone(),
        pipeline: settings.pipeline,
        auth: settings.auth,
        corpus,
        repeats: file.repeats,
        seed,
    };
    let curve = run_sweep(&plan)?;
    for p in curve.points.iter().filter(|p| p.is_infeasible()) {
        ctx.warn(format!("{} = {} is infeasible for this corpus", plan.variable, p.value));
    }
    match out {
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
            emit_curve(&curve, &mut w)?;
            w.flush()?;
        }
        None => emit_curve(&curve, io::stdout().lock())?,
    }
    match curve.argmax_value() {
        Some(v) => {
            println!("argmax={}s", fmt_sig(v, 6));
            Ok(0)
        }
        None => {
            println!("argmax=nan");
            ctx.warn("no grid value was feasible");
            Ok(EXIT_PARTIAL)
        }
    }
}
