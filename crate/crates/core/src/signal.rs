//! Single-lead ECG records and the Record-CSV text format.
//!
//! ```text
//! fs=250,subject=s01,lead=I
//! # rpeak=0.412
//! 0.0123
//! ...
//! ```
//!
//! Line 1 is the header. Lines starting with `#` are comments; the only
//! comment the reader interprets is `# rpeak=<seconds>`, the ground-truth
//! R-peak sidecar written by the synthetic generator. Every other line holds
//! one amplitude in mV.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};
use crate::numfmt::fmt_sig;

/// Significant digits used for amplitudes and sidecar times in Record-CSV.
pub const RECORD_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Raw,
    Preprocessed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    subject_id: String,
    fs: f64,
    samples: Vec<f64>,
    lead: String,
    stage: Stage,
    r_peaks_s: Vec<f64>,
}

fn check_label(what: &str, s: &str) -> Result<()> {
    if s.contains([',', '=', '\n', '\r']) {
        return invalid(format!("{what} `{s}` may not contain ',', '=' or line breaks"));
    }
    Ok(())
}

impl EcgRecord {
    /// Build a raw record, validating the sampling rate and amplitudes.
    pub fn new(
        subject_id: impl Into<String>,
        fs: f64,
        samples: Vec<f64>,
        lead: impl Into<String>,
    ) -> Result<Self> {
        let rec = Self {
            subject_id: subject_id.into(),
            fs,
            samples,
            lead: lead.into(),
            stage: Stage::Raw,
            r_peaks_s: Vec::new(),
        };
        rec.validate()?;
        Ok(rec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return invalid(format!("sampling frequency must be > 0, got {}", self.fs));
        }
        if self.samples.len() < 2 {
            return invalid(format!(
                "record needs at least 2 samples, got {}",
                self.samples.len()
            ));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return invalid(format!("sample {i} is not finite"));
        }
        check_label("subject id", &self.subject_id)?;
        check_label("lead", &self.lead)?;
        Ok(())
    }

    pub fn with_r_peaks(mut self, r_peaks_s: Vec<f64>) -> Self {
        self.r_peaks_s = r_peaks_s;
        self
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.stage = stage;
        self
    }

    /// Same metadata, new samples. Ground-truth peaks are kept only when the
    /// sample count is unchanged.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        let keep_peaks = samples.len() == self.samples.len();
        let rec = Self {
            subject_id: self.subject_id.clone(),
            fs: self.fs,
            samples,
            lead: self.lead.clone(),
            stage: self.stage,
            r_peaks_s: if keep_peaks { self.r_peaks_s.clone() } else { Vec::new() },
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn lead(&self) -> &str {
        &self.lead
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    /// Ground-truth R-peak times in seconds, empty when unknown.
    pub fn r_peaks_s(&self) -> &[f64] {
        &self.r_peaks_s
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.fs
    }

    /// Number of samples that make up a period of `period_s` seconds.
    pub fn samples_for(&self, period_s: f64) -> usize {
        (period_s * self.fs).round() as usize
    }

    /// Cut `len` samples starting at `start`. Ground-truth peaks inside the
    /// segment are carried over, re-based to the segment start.
    pub fn segment(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.samples.len() {
            return invalid(format!(
                "segment {start}..{} exceeds record length {}",
                start + len,
                self.samples.len()
            ));
        }
        let t0 = start as f64 / self.fs;
        let t1 = (start + len) as f64 / self.fs;
        let mut rec = self.with_samples(self.samples[start..start + len].to_vec())?;
        rec.r_peaks_s = self
            .r_peaks_s
            .iter()
            .filter(|&&t| t >= t0 && t < t1)
            .map(|t| t - t0)
            .collect();
        Ok(rec)
    }

    /// Keep the first `period_s` seconds (`round(period_s * fs)` samples).
    pub fn truncated(&self, period_s: f64) -> Result<Self> {
        let need = self.samples_for(period_s);
        if need > self.samples.len() {
            return Err(Error::InsufficientData {
                needed_s: period_s,
                got_s: self.samples.len() as f64 / self.fs,
            });
        }
        self.segment(0, need)
    }
}

fn parse_header(line: &str) -> Result<(f64, String, String)> {
    let fmt_err = |msg: String| Error::Format { line: 1, msg };
    let mut fs = None;
    let mut subject = None;
    let mut lead = None;
    for field in line.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| fmt_err(format!("header field `{field}` is not key=value")))?;
        match key.trim() {
            "fs" => {
                fs = Some(value.trim().parse::<f64>().map_err(|_| {
                    fmt_err(format!("header fs `{value}` is not a number"))
                })?)
            }
            "subject" => subject = Some(value.to_string()),
            "lead" => lead = Some(value.to_string()),
            other => return Err(fmt_err(format!("unknown header key `{other}`"))),
        }
    }
    match (fs, subject, lead) {
        (Some(fs), Some(s), Some(l)) => Ok((fs, s, l)),
        _ => Err(fmt_err("header must define fs, subject and lead".into())),
    }
}

/// Parse a Record-CSV stream. The returned record is always [`Stage::Raw`].
pub fn read_record<R: BufRead>(reader: R) -> Result<EcgRecord> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(Error::Format {
                line: 1,
                msg: "empty stream".into(),
            })
        }
    };
    let (fs, subject, lead) = parse_header(header.trim_end_matches('\r'))?;
    if !(fs > 0.0) {
        return invalid(format!("sampling frequency must be > 0, got {fs}"));
    }

    let mut samples = Vec::new();
    let mut r_peaks = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(t) = comment.trim().strip_prefix("rpeak=") {
                let t = t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("bad rpeak time `{t}`"),
                })?;
                r_peaks.push(t);
            }
            continue;
        }
        let v = line.trim().parse::<f64>().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("`{line}` is not a number"),
        })?;
        samples.push(v);
    }
    Ok(EcgRecord::new(subject, fs, samples, lead)?.with_r_peaks(r_peaks))
}

/// Emit a record as Record-CSV, amplitudes at 9 significant digits.
pub fn write_record<W: Write>(record: &EcgRecord, mut out: W) -> Result<()> {
    record.validate()?;
    writeln!(
        out,
        "fs={},subject={},lead={}",
        record.fs, record.subject_id, record.lead
    )?;
    for t in &record.r_peaks_s {
        writeln!(out, "# rpeak={}", fmt_sig(*t, RECORD_DIGITS))?;
    }
    for v in &record.samples {
        writeln!(out, "{}", fmt_sig(*v, RECORD_DIGITS))?;
    }
    out.flush()?;
    Ok(())
}
