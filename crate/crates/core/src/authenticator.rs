//! Test phase: quality gate, nearest-reference matching and detection metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;

use crate::config::AuthConfig;
use crate::enrollment::{record_slices, EnrollmentDb};
use crate::error::{invalid, Error, Result};
use crate::numfmt::fmt_sig;
use crate::rng::{derive_seed, seeded};
use crate::signal::EcgRecord;
use crate::slicer::SliceSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Known(String),
    Unknown,
    /// Excluded by the data-quality gate or by a processing failure.
    Rejected(String),
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Known(_) => "known",
            Outcome::Unknown => "unknown",
            Outcome::Rejected(_) => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuthDecision {
    pub trial_id: String,
    pub outcome: Outcome,
    /// Score per enrolled entity. Empty when rejected before matching.
    pub scores: BTreeMap<String, f64>,
    pub best_id: Option<String>,
    pub best_mse: f64,
    pub gate_mse: f64,
}

impl AuthDecision {
    fn rejected(trial_id: &str, reason: String, gate_mse: f64) -> Self {
        Self {
            trial_id: trial_id.to_string(),
            outcome: Outcome::Rejected(reason),
            scores: BTreeMap::new(),
            best_id: None,
            best_mse: f64::NAN,
            gate_mse,
        }
    }
}

/// Ground truth of a trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Actual {
    Known(String),
    Unknown,
}

impl fmt::Display for Actual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actual::Known(id) => write!(f, "known:{id}"),
            Actual::Unknown => f.write_str("unknown"),
        }
    }
}

impl std::str::FromStr for Actual {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "unknown" => Ok(Actual::Unknown),
            other => match other.strip_prefix("known:") {
                Some(id) if !id.is_empty() => Ok(Actual::Known(id.to_string())),
                _ => invalid(format!("label `{s}` is neither known:<id> nor unknown")),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub id: String,
    pub record: EcgRecord,
    pub actual: Actual,
}

/// Detection-level 2x2 matrix; `kk` is predicted Known with actual Known,
/// `ku` predicted Known with actual Unknown, and so on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub kk: usize,
    pub ku: usize,
    pub uk: usize,
    pub uu: usize,
    pub n_rejected: usize,
    pub n_known_correct_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub recall_unknown: f64,
    pub identification_accuracy: f64,
}

impl ConfusionMatrix {
    pub fn from_counts(kk: usize, ku: usize, uk: usize, uu: usize) -> Self {
        Self { kk, ku, uk, uu, ..Self::default() }
    }

    /// Trials that reached the 2x2 counts.
    pub fn total(&self) -> usize {
        self.kk + self.ku + self.uk + self.uu
    }

    pub fn n_trials(&self) -> usize {
        self.total() + self.n_rejected
    }

    pub fn record(&mut self, outcome: &Outcome, actual: &Actual) {
        match (outcome, actual) {
            (Outcome::Rejected(_), _) => self.n_rejected += 1,
            (Outcome::Known(got), Actual::Known(want)) => {
                self.kk += 1;
                if got == want {
                    self.n_known_correct_id += 1;
                }
            }
            (Outcome::Known(_), Actual::Unknown) => self.ku += 1,
            (Outcome::Unknown, Actual::Known(_)) => self.uk += 1,
            (Outcome::Unknown, Actual::Unknown) => self.uu += 1,
        }
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            kk: self.kk + o.kk,
            ku: self.ku + o.ku,
            uk: self.uk + o.uk,
            uu: self.uu + o.uu,
            n_rejected: self.n_rejected + o.n_rejected,
            n_known_correct_id: self.n_known_correct_id + o.n_known_correct_id,
        }
    }

    pub fn metrics(&self) -> Result<Metrics> {
        let total = self.total();
        if total == 0 {
            return invalid("metrics need at least one non-rejected trial");
        }
        let actual_unknown = self.ku + self.uu;
        Ok(Metrics {
            accuracy: (self.kk + self.uu) as f64 / total as f64,
            recall_unknown: if actual_unknown == 0 {
                0.0
            } else {
                self.uu as f64 / actual_unknown as f64
            },
            identification_accuracy: if self.kk == 0 {
                1.0
            } else {
                self.n_known_correct_id as f64 / self.kk as f64
            },
        })
    }

    /// Two-row CSV of the matrix, rows are predictions.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "predicted,actual_known,actual_unknown")?;
        writeln!(out, "known,{},{}", self.kk, self.ku)?;
        writeln!(out, "unknown,{},{}", self.uk, self.uu)?;
        Ok(())
    }
}

/// Mean over slices of the MSE between each slice and the mean waveform.
pub fn gate_statistic(ss: &SliceSet) -> f64 {
    let mean = ss.mean_waveform();
    let total: f64 = ss
        .rows()
        .map(|row| row.iter().zip(&mean).map(|(a, m)| (a - m).powi(2)).sum::<f64>())
        .sum();
    total / ss.data.len() as f64
}

/// Authenticate the head of `record` (cut to the test period).
pub fn authenticate(db: &EnrollmentDb, record: &EcgRecord, cfg: &AuthConfig) -> Result<AuthDecision> {
    authenticate_trial(db, record, cfg, record.subject_id())
}

fn authenticate_trial(
    db: &EnrollmentDb,
    record: &EcgRecord,
    cfg: &AuthConfig,
    trial_id: &str,
) -> Result<AuthDecision> {
    cfg.validate()?;
    let median = match db.median_mean_mse() {
        Some(m) => m,
        None => return invalid("cannot authenticate against an empty database"),
    };
    let test = record.truncated(cfg.test_period_s)?;
    let ss = match record_slices(&test, &db.config) {
        Ok(ss) => ss,
        Err(e @ (Error::EmptyDetection | Error::EmptySliceSet)) => {
            return Ok(AuthDecision::rejected(trial_id, e.to_string(), f64::NAN));
        }
        Err(e) => return Err(e),
    };
    let gate_mse = gate_statistic(&ss);
    let limit = cfg.gate_limit_factor * median;
    if !(gate_mse <= limit) {
        return Ok(AuthDecision::rejected(
            trial_id,
            format!(
                "data quality: slice consistency {} exceeds limit {}",
                fmt_sig(gate_mse, 6),
                fmt_sig(limit, 6)
            ),
            gate_mse,
        ));
    }

    let mut scores = BTreeMap::new();
    let mut best: Option<(&str, f64)> = None;
    for model in db.models() {
        let score = model.score(&ss, &db.config)?;
        scores.insert(model.entity_id.clone(), score);
        // Ascending-id iteration plus strict `<` keeps the first id on ties.
        if best.map_or(true, |(_, b)| score < b) {
            best = Some((&model.entity_id, score));
        }
    }
    let (best_id, best_mse) = best.expect("non-empty database");
    let outcome = if best_mse <= db.get(best_id).expect("present").ucl_mse {
        Outcome::Known(best_id.to_string())
    } else {
        Outcome::Unknown
    };
    Ok(AuthDecision {
        trial_id: trial_id.to_string(),
        outcome,
        best_id: Some(best_id.to_string()),
        best_mse,
        scores,
        gate_mse,
    })
}

/// Authenticate a randomly placed test-period segment of every trial.
///
/// Segment placement depends only on `(seed, trial index)`. Per-trial
/// failures become `Rejected` decisions.
pub fn run_trials(
    db: &EnrollmentDb,
    trials: &[Trial],
    cfg: &AuthConfig,
    seed: u64,
) -> Result<(ConfusionMatrix, Vec<AuthDecision>)> {
    cfg.validate()?;
    if db.is_empty() {
        return invalid("cannot authenticate against an empty database");
    }
    let decisions: Vec<AuthDecision> = trials
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let attempt = random_segment(&t.record, cfg.test_period_s, derive_seed(seed, &[i as u64]))
                .and_then(|seg| authenticate_trial(db, &seg, cfg, &t.id));
            attempt.unwrap_or_else(|e| AuthDecision::rejected(&t.id, e.to_string(), f64::NAN))
        })
        .collect();
    let mut cm = ConfusionMatrix::default();
    for (d, t) in decisions.iter().zip(trials) {
        cm.record(&d.outcome, &t.actual);
    }
    Ok((cm, decisions))
}

/// Uniformly placed window of `period_s` seconds.
pub fn random_segment(record: &EcgRecord, period_s: f64, seed: u64) -> Result<EcgRecord> {
    let need = record.samples_for(period_s);
    if need > record.len() {
        return record.truncated(period_s);
    }
    let start = seeded(seed).gen_range(0..=record.len() - need);
    record.segment(start, need)
}

/// CSV `trial_id,outcome,best_id,best_mse,gate_mse`.
pub fn write_decision_log<W: Write>(decisions: &[AuthDecision], mut out: W) -> Result<()> {
    writeln!(out, "trial_id,outcome,best_id,best_mse,gate_mse")?;
    for d in decisions {
        writeln!(out, "{}", decision_line(d, &d.trial_id))?;
    }
    Ok(())
}

/// One decision as `<lead>,outcome,best_id,best_mse,gate_mse`.
pub fn decision_line(d: &AuthDecision, lead: &str) -> String {
    let fields = format!(
        "{},{},{},{}",
        d.outcome.label(),
        d.best_id.as_deref().unwrap_or(""),
        fmt_sig(d.best_mse, 9),
        fmt_sig(d.gate_mse, 9)
    );
    if lead.is_empty() {
        fields
    } else {
        format!("{lead},{fields}")
    }
}

/// Read back a decision log as `(trial_id, outcome)` pairs. Rejection
/// reasons are not logged, so rejected rows carry a fixed reason.
pub fn parse_decision_log(text: &str) -> Result<Vec<(String, Outcome)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("trial_id,") {
            continue;
        }
        let bad = |msg: &str| Error::Format { line: i + 1, msg: msg.to_string() };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 || fields[0].is_empty() {
            return Err(bad("expected `trial_id,outcome,best_id,...`"));
        }
        let outcome = match (fields[1], fields[2]) {
            ("known", id) if !id.is_empty() => Outcome::Known(id.to_string()),
            ("known", _) => return Err(bad("known outcome without best_id")),
            ("unknown", _) => Outcome::Unknown,
            ("rejected", _) => Outcome::Rejected("replayed".into()),
            (other, _) => return Err(bad(&format!("unknown outcome `{other}`"))),
        };
        out.push((fields[0].to_string(), outcome));
    }
    Ok(out)
}

/// Parse a `path,actual` manifest. Returns `(path, actual)` pairs.
pub fn parse_trial_manifest(text: &str) -> Result<Vec<(String, Actual)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if out.is_empty() && line == "path,actual" {
            continue;
        }
        let (path, actual) = line.split_once(',').ok_or_else(|| Error::Format {
            line: i + 1,
            msg: "expected `path,actual`".into(),
        })?;
        let actual = actual.parse().map_err(|e: Error| Error::Format {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push((path.trim().to_string(), actual));
    }
    Ok(out)
}
