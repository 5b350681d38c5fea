//! Accuracy as a function of the slicing window or the training period.
//!
//! Every (grid value, repeat) pair is an independent job seeded from
//! `(seed, value bits, repeat)`, so points do not depend on grid order and
//! the curve is identical however the jobs are scheduled.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::authenticator::{run_trials, ConfusionMatrix, Trial};
use crate::config::{parse_kv_text, parse_num, AuthConfig, PipelineConfig};
use crate::corpus::{Corpus, CorpusSpec};
use crate::enrollment::{build_model, EnrollmentDb};
use crate::error::{invalid, Error, Result};
use crate::numfmt::fmt_sig;
use crate::rng::derive_seed;
use crate::signal::EcgRecord;

pub const CURVE_DIGITS: usize = 6;
pub const CURVE_HEADER: &str = "value_s,accuracy_mean,accuracy_std,rejected_mean";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    WindowS,
    TrainPeriodS,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::WindowS => "window_s",
            SweepVariable::TrainPeriodS => "train_period_s",
        })
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "window_s" => Ok(SweepVariable::WindowS),
            "train_period_s" => Ok(SweepVariable::TrainPeriodS),
            other => invalid(format!("sweep variable must be window_s or train_period_s, got `{other}`")),
        }
    }
}

/// Where trials come from.
#[derive(Debug, Clone)]
pub enum SweepCorpus {
    /// Regenerated synthetic corpus; each repeat draws its own unknowns.
    Synthetic { spec: CorpusSpec, seed: u64 },
    /// Fixed enrollment set and trials; repeats vary only segment placement.
    Fixed { enroll: Vec<(String, EcgRecord)>, trials: Vec<Trial> },
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub pipeline: PipelineConfig,
    pub auth: AuthConfig,
    pub corpus: SweepCorpus,
    pub repeats: usize,
    pub seed: u64,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return invalid("sweep grid is empty");
        }
        if self.grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid("sweep grid values must be finite and > 0");
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("sweep grid must be strictly ascending");
        }
        if self.repeats == 0 {
            return invalid("repeats must be at least 1");
        }
        self.pipeline.validate()?;
        self.auth.validate()
    }

    fn config_at(&self, value: f64) -> PipelineConfig {
        let mut cfg = self.pipeline.clone();
        match self.variable {
            SweepVariable::WindowS => cfg.slicer.window_s = value,
            SweepVariable::TrainPeriodS => cfg.train_period_s = value,
        }
        cfg
    }
}

/// Sweep settings read from a plan file, before the corpus is attached.
#[derive(Debug, Clone)]
pub struct PlanFile {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub repeats: usize,
    pub seed: Option<u64>,
    pub corpus: CorpusSpec,
    /// `enroll=` and `trials=` manifest paths, when given.
    pub enroll_manifest: Option<String>,
    pub trials_manifest: Option<String>,
    /// Remaining keys, for the pipeline and auth settings.
    pub settings: Vec<(String, String)>,
}

/// Default slicing grid, 0.1 s to 1.0 s.
pub fn default_window_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Default training-period grid, 10 s to 60 s.
pub fn default_period_grid() -> Vec<f64> {
    (2..=12).map(|i| i as f64 * 5.0).collect()
}

impl PlanFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut variable = None;
        let mut grid = None;
        let mut plan = PlanFile {
            variable: SweepVariable::WindowS,
            grid: Vec::new(),
            repeats: 5,
            seed: None,
            corpus: CorpusSpec::default(),
            enroll_manifest: None,
            trials_manifest: None,
            settings: Vec::new(),
        };
        for (k, v) in parse_kv_text(text)? {
            match k.as_str() {
                "variable" => variable = Some(v.parse::<SweepVariable>()?),
                "grid" => {
                    grid = Some(
                        v.split(',')
                            .map(|x| parse_num::<f64>("grid", x))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "repeats" => plan.repeats = parse_num(&k, &v)?,
                "seed" => plan.seed = Some(parse_num(&k, &v)?),
                "enroll" => plan.enroll_manifest = Some(v),
                "trials" => plan.trials_manifest = Some(v),
                _ => {
                    if !plan.corpus.set(&k, &v)? {
                        plan.settings.push((k, v));
                    }
                }
            }
        }
        plan.variable = variable.ok_or_else(|| Error::Validation("plan needs `variable`".into()))?;
        plan.grid = grid.unwrap_or_else(|| match plan.variable {
            SweepVariable::WindowS => default_window_grid(),
            SweepVariable::TrainPeriodS => default_period_grid(),
        });
        if plan.enroll_manifest.is_some() != plan.trials_manifest.is_some() {
            return invalid("plan needs both `enroll` and `trials` manifests, or neither");
        }
        plan.corpus.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub value: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub n_rejected_mean: f64,
}

impl CurvePoint {
    pub fn is_infeasible(&self) -> bool {
        self.accuracy_mean.is_nan()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub points: Vec<CurvePoint>,
}

impl SweepCurve {
    /// Grid value of the best mean accuracy; ties go to the smallest value.
    /// `None` when every point is infeasible.
    pub fn argmax_value(&self) -> Option<f64> {
        let mut best: Option<&CurvePoint> = None;
        for p in self.points.iter().filter(|p| !p.is_infeasible()) {
            if best.map_or(true, |b| p.accuracy_mean > b.accuracy_mean) {
                best = Some(p);
            }
        }
        best.map(|p| p.value)
    }
}

/// Enroll `enroll` under `config` and score the trials.
pub fn run_experiment(
    config: &PipelineConfig,
    auth: &AuthConfig,
    enroll: &[(String, EcgRecord)],
    trials: &[Trial],
    seed: u64,
) -> Result<ConfusionMatrix> {
    let models = enroll
        .par_iter()
        .map(|(id, rec)| {
            let train = rec.truncated(config.train_period_s)?;
            build_model(id, &train, config).map_err(|e| Error::EnrollFailure {
                entity: id.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut db = EnrollmentDb::new(config.clone(), 0)?;
    for m in models {
        db.insert(m)?;
    }
    Ok(run_trials(&db, trials, auth, seed)?.0)
}

fn repeat_matrix(plan: &SweepPlan, corpus: Option<&Corpus>, value: f64, repeat: usize) -> Result<ConfusionMatrix> {
    let config = plan.config_at(value);
    let seed = derive_seed(plan.seed, &[value.to_bits(), repeat as u64]);
    match (&plan.corpus, corpus) {
        (SweepCorpus::Synthetic { spec, .. }, Some(c)) => {
            let split = c.split(spec.n_unknown, seed)?;
            run_experiment(&config, &plan.auth, &split.enroll, &split.trials, seed)
        }
        (SweepCorpus::Fixed { enroll, trials }, _) => {
            run_experiment(&config, &plan.auth, enroll, trials, seed)
        }
        (SweepCorpus::Synthetic { .. }, None) => unreachable!("corpus generated up front"),
    }
}

/// Run every grid point. Points whose experiments fail (for example a
/// training period longer than the records) come back as NaN rows.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepCurve> {
    plan.validate()?;
    let corpus = match &plan.corpus {
        SweepCorpus::Synthetic { spec, seed } => Some(Corpus::generate(spec, *seed)?),
        SweepCorpus::Fixed { enroll, trials } => {
            if enroll.is_empty() || trials.is_empty() {
                return invalid("fixed sweep corpus needs enrollment records and trials");
            }
            None
        }
    };
    let jobs: Vec<(usize, usize)> = (0..plan.grid.len())
        .flat_map(|g| (0..plan.repeats).map(move |r| (g, r)))
        .collect();
    let results: Vec<Option<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(g, r)| {
            repeat_matrix(plan, corpus.as_ref(), plan.grid[g], r)
                .and_then(|cm| Ok((cm.metrics()?.accuracy, cm.n_rejected as f64)))
                .ok()
        })
        .collect();

    let points = plan
        .grid
        .iter()
        .enumerate()
        .map(|(g, &value)| {
            let runs = &results[g * plan.repeats..(g + 1) * plan.repeats];
            if runs.iter().any(Option::is_none) {
                return CurvePoint {
                    value,
                    accuracy_mean: f64::NAN,
                    accuracy_std: f64::NAN,
                    n_rejected_mean: f64::NAN,
                };
            }
            let acc: Vec<f64> = runs.iter().map(|x| x.unwrap().0).collect();
            let rej: Vec<f64> = runs.iter().map(|x| x.unwrap().1).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&acc);
            CurvePoint {
                value,
                accuracy_mean,
                accuracy_std,
                n_rejected_mean: mean_std(&rej).0,
            }
        })
        .collect();
    Ok(SweepCurve { points })
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn emit_curve<W: Write>(curve: &SweepCurve, mut out: W) -> Result<()> {
    if curve.points.is_empty() {
        return invalid("cannot emit an empty curve");
    }
    let f = |x: f64| fmt_sig(x, CURVE_DIGITS);
    writeln!(out, "{CURVE_HEADER}")?;
    for p in &curve.points {
        writeln!(
            out,
            "{},{},{},{}",
            f(p.value),
            f(p.accuracy_mean),
            f(p.accuracy_std),
            f(p.n_rejected_mean)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_curve<R: BufRead>(reader: R) -> Result<SweepCurve> {
    let mut points = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != CURVE_HEADER {
                return Err(Error::Format { line: 1, msg: "unexpected curve header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols = line
            .split(',')
            .map(|c| parse_num::<f64>("curve", c))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        if cols.len() != 4 {
            return Err(Error::Format { line: i + 1, msg: "expected 4 columns".into() });
        }
        points.push(CurvePoint {
            value: cols[0],
            accuracy_mean: cols[1],
            accuracy_std: cols[2],
            n_rejected_mean: cols[3],
        });
    }
    Ok(SweepCurve { points })
}
