//! Standard synthetic corpus: one training session and several test sessions
//! per subject, split at random into enrolled and never-enrolled identities.
//!
//! On disk a corpus is a directory with `train/<id>.csv`, `test/<id>_<k>.csv`,
//! an enrollment manifest `enroll.csv` (`path,id`) and a trial manifest
//! `trials.csv` (`path,actual`). Record files carry their ground-truth R
//! peaks as `# rpeak=` comment lines.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::authenticator::{parse_trial_manifest, Actual, Trial};
use crate::config::{parse_kv_text, parse_num};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::signal::{read_record, write_record, EcgRecord};
use crate::synth::{synth_ecg, SynthSpec};

const TAG_MORPHOLOGY: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_TEST: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    /// Subject count, rate, noise and interference settings. Its duration
    /// and seeds are overridden per session.
    pub synth: SynthSpec,
    pub n_unknown: usize,
    pub train_s: f64,
    pub test_s: f64,
    pub n_tests: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            synth: SynthSpec { n_subjects: 12, ..SynthSpec::default() },
            n_unknown: 2,
            train_s: 60.0,
            test_s: 20.0,
            n_tests: 3,
        }
    }
}

impl CorpusSpec {
    /// Apply one key. Returns `Ok(false)` for keys this spec does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let s = &mut self.synth;
        match key {
            "n_subjects" => s.n_subjects = parse_num(key, value)?,
            "fs" => s.fs = parse_num(key, value)?,
            "heart_rate_bpm" => s.heart_rate_bpm = parse_num(key, value)?,
            "heart_rate_spread_bpm" => s.heart_rate_spread_bpm = parse_num(key, value)?,
            "noise_snr_db" => s.noise_snr_db = parse_num(key, value)?,
            "baseline_drift_mv_per_s" => s.baseline_drift_mv_per_s = parse_num(key, value)?,
            "pli_amplitude_mv" => s.pli_amplitude_mv = parse_num(key, value)?,
            "synth_pli_freq_hz" => s.pli_freq_hz = parse_num(key, value)?,
            "n_unknown" => self.n_unknown = parse_num(key, value)?,
            "train_s" => self.train_s = parse_num(key, value)?,
            "test_s" => self.test_s = parse_num(key, value)?,
            "n_tests" => self.n_tests = parse_num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parse a `key=value` text; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (k, v) in parse_kv_text(text)? {
            if !spec.set(&k, &v)? {
                return invalid(format!("unknown corpus key `{k}`"));
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for d in [self.train_s, self.test_s] {
            SynthSpec { duration_s: d, ..self.synth.clone() }.validate()?;
        }
        if self.n_unknown >= self.synth.n_subjects {
            return invalid(format!(
                "n_unknown {} leaves no subject to enroll out of {}",
                self.n_unknown, self.synth.n_subjects
            ));
        }
        if self.n_tests == 0 {
            return invalid("n_tests must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SubjectRecords {
    pub id: String,
    pub train: EcgRecord,
    pub tests: Vec<EcgRecord>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub subjects: Vec<SubjectRecords>,
}

/// Enrolled identities with their training records, and labeled trials.
#[derive(Debug, Clone)]
pub struct Split {
    pub enroll: Vec<(String, EcgRecord)>,
    pub trials: Vec<Trial>,
}

impl Corpus {
    pub fn generate(spec: &CorpusSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let morphology_seed = derive_seed(seed, &[TAG_MORPHOLOGY]);
        let session = |duration_s: f64, session_seed: u64| SynthSpec {
            duration_s,
            morphology_seed,
            session_seed,
            ..spec.synth.clone()
        };
        let train_spec = session(spec.train_s, derive_seed(seed, &[TAG_TRAIN]));
        let test_specs: Vec<SynthSpec> = (0..spec.n_tests)
            .map(|k| session(spec.test_s, derive_seed(seed, &[TAG_TEST, k as u64])))
            .collect();
        let subjects = (0..spec.synth.n_subjects)
            .map(|i| {
                let train = synth_ecg(&train_spec, i)?;
                let tests = test_specs
                    .iter()
                    .map(|ts| synth_ecg(ts, i))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SubjectRecords { id: train.subject_id().to_string(), train, tests })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { subjects })
    }

    /// Hold out `n_unknown` subjects chosen by `seed`; every test session of
    /// every subject becomes a trial.
    pub fn split(&self, n_unknown: usize, seed: u64) -> Result<Split> {
        if n_unknown >= self.subjects.len() {
            return invalid(format!(
                "cannot hold out {n_unknown} of {} subjects",
                self.subjects.len()
            ));
        }
        let mut order: Vec<usize> = (0..self.subjects.len()).collect();
        order.shuffle(&mut seeded(seed));
        let mut unknown = vec![false; self.subjects.len()];
        for &i in &order[..n_unknown] {
            unknown[i] = true;
        }
        let mut enroll = Vec::new();
        let mut trials = Vec::new();
        for (s, held_out) in self.subjects.iter().zip(unknown) {
            if !held_out {
                enroll.push((s.id.clone(), s.train.clone()));
            }
            for (k, t) in s.tests.iter().enumerate() {
                trials.push(Trial {
                    id: format!("{}_{}", s.id, k + 1),
                    record: t.clone(),
                    actual: if held_out { Actual::Unknown } else { Actual::Known(s.id.clone()) },
                });
            }
        }
        Ok(Split { enroll, trials })
    }
}

fn write_record_file(path: &Path, rec: &EcgRecord) -> Result<()> {
    let out = BufWriter::new(fs::File::create(path)?);
    write_record(rec, out)
}

pub fn read_record_file(path: &Path) -> Result<EcgRecord> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_record(BufReader::new(file))
}

/// Write a corpus split to `dir` (created if needed).
pub fn write_corpus(corpus: &Corpus, split: &Split, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("train"))?;
    fs::create_dir_all(dir.join("test"))?;
    for s in &corpus.subjects {
        write_record_file(&dir.join("train").join(format!("{}.csv", s.id)), &s.train)?;
        for (k, t) in s.tests.iter().enumerate() {
            write_record_file(&dir.join("test").join(format!("{}_{}.csv", s.id, k + 1)), t)?;
        }
    }
    let mut enroll = String::from("path,id\n");
    for (id, _) in &split.enroll {
        enroll.push_str(&format!("train/{id}.csv,{id}\n"));
    }
    fs::write(dir.join("enroll.csv"), enroll)?;
    let mut trials = String::from("path,actual\n");
    for t in &split.trials {
        trials.push_str(&format!("test/{}.csv,{}\n", t.id, t.actual));
    }
    fs::write(dir.join("trials.csv"), trials)?;
    Ok(())
}

/// Parse a `path,id` enrollment manifest.
pub fn parse_enroll_manifest(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (out.is_empty() && line == "path,id") {
            continue;
        }
        match line.split_once(',') {
            Some((p, id)) if !p.trim().is_empty() && !id.trim().is_empty() => {
                out.push((p.trim().to_string(), id.trim().to_string()))
            }
            _ => {
                return Err(Error::Format {
                    line: i + 1,
                    msg: "expected `path,id`".into(),
                })
            }
        }
    }
    Ok(out)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

/// Load an enrollment manifest; paths resolve relative to the manifest.
pub fn load_enroll_manifest(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let text = fs::read_to_string(path)?;
    let base = manifest_dir(path);
    Ok(parse_enroll_manifest(&text)?
        .into_iter()
        .map(|(p, id)| (id, resolve(base, &p)))
        .collect())
}

/// Load a trial manifest and its records; trial ids are the file stems.
pub fn load_trials(path: &Path) -> Result<Vec<Trial>> {
    let text = fs::read_to_string(path)?;
    let base = manifest_dir(path);
    parse_trial_manifest(&text)?
        .into_iter()
        .map(|(p, actual)| {
            let full = resolve(base, &p);
            let id = full
                .file_stem()
                .map_or_else(|| p.clone(), |s| s.to_string_lossy().into_owned());
            Ok(Trial { id, record: read_record_file(&full)?, actual })
        })
        .collect()
}
