//! Seeded synthetic ECG generator.
//!
//! Each subject owns a beat template of five Gaussian waves (P, Q, R, S, T)
//! drawn once from the morphology stream. A record repeats that template at
//! the subject's heart rate with per-beat RR jitter of up to 3%, then adds a
//! linear baseline drift, a powerline tone and white noise at the requested
//! SNR. Beat jitter, tone phase and noise come from a separate session
//! stream, so the same subject can be "recorded" many times with identical
//! morphology.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::rng::{derive_seed, seeded};
use crate::signal::EcgRecord;

/// Maximum relative RR deviation between consecutive beats.
pub const RR_JITTER: f64 = 0.03;

/// Ground-truth peaks closer than this to either record edge are not
/// reliably localizable and are skipped by the detection scorers.
pub const EDGE_MARGIN_S: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub fs: f64,
    pub duration_s: f64,
    /// Centre of the per-subject mean heart rate.
    pub heart_rate_bpm: f64,
    /// Per-subject mean rate is drawn uniformly from centre ± spread.
    pub heart_rate_spread_bpm: f64,
    pub morphology_seed: u64,
    /// Seeds beat jitter, tone phase and noise; vary it to record a new session.
    pub session_seed: u64,
    /// `f64::INFINITY` disables noise.
    pub noise_snr_db: f64,
    pub baseline_drift_mv_per_s: f64,
    pub pli_amplitude_mv: f64,
    pub pli_freq_hz: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 10,
            fs: 250.0,
            duration_s: 60.0,
            heart_rate_bpm: 75.0,
            heart_rate_spread_bpm: 15.0,
            morphology_seed: 0,
            session_seed: 0,
            noise_snr_db: 20.0,
            baseline_drift_mv_per_s: 0.05,
            pli_amplitude_mv: 0.1,
            pli_freq_hz: 50.0,
        }
    }
}

impl SynthSpec {
    /// Noise-free, drift-free, tone-free variant of this spec.
    pub fn clean(&self) -> Self {
        Self {
            noise_snr_db: f64::INFINITY,
            baseline_drift_mv_per_s: 0.0,
            pli_amplitude_mv: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return invalid("n_subjects must be at least 1");
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return invalid(format!("fs must be > 0, got {}", self.fs));
        }
        if self.pli_freq_hz != 50.0 && self.pli_freq_hz != 60.0 {
            return invalid(format!("pli_freq_hz must be 50 or 60, got {}", self.pli_freq_hz));
        }
        if self.fs < 4.0 * self.pli_freq_hz {
            return invalid(format!(
                "fs {} must be at least 4 x pli_freq_hz {}",
                self.fs, self.pli_freq_hz
            ));
        }
        let lo = self.heart_rate_bpm - self.heart_rate_spread_bpm;
        let hi = self.heart_rate_bpm + self.heart_rate_spread_bpm;
        if self.heart_rate_spread_bpm < 0.0 || lo < 40.0 || hi > 180.0 {
            return invalid(format!("heart rate range [{lo}, {hi}] bpm is outside [40, 180]"));
        }
        if !(self.duration_s > 2.0 * 60.0 / lo) {
            return invalid(format!(
                "duration {} s must exceed two beats at {lo} bpm",
                self.duration_s
            ));
        }
        if self.noise_snr_db.is_nan() {
            return invalid("noise_snr_db is NaN");
        }
        for (name, v) in [
            ("baseline_drift_mv_per_s", self.baseline_drift_mv_per_s),
            ("pli_amplitude_mv", self.pli_amplitude_mv),
        ] {
            if !v.is_finite() {
                return invalid(format!("{name} must be finite"));
            }
        }
        Ok(())
    }
}

/// One Gaussian wave of the beat template, positioned relative to the R peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub amplitude_mv: f64,
    pub width_s: f64,
    pub offset_s: f64,
}

impl Wave {
    fn at(&self, dt: f64) -> f64 {
        let z = (dt - self.offset_s) / self.width_s;
        self.amplitude_mv * (-0.5 * z * z).exp()
    }
}

/// Per-subject morphology: waves in P, Q, R, S, T order plus mean RR.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatTemplate {
    pub waves: [Wave; 5],
    pub rr_s: f64,
}

impl BeatTemplate {
    /// Noise-free single beat evaluated at `dt` seconds from the R peak.
    pub fn at(&self, dt: f64) -> f64 {
        self.waves.iter().map(|w| w.at(dt)).sum()
    }

    /// One beat sampled on `[-before_s, after_s)` at `fs`.
    pub fn waveform(&self, fs: f64, before_s: f64, after_s: f64) -> Vec<f64> {
        let n = ((before_s + after_s) * fs).round() as usize;
        (0..n)
            .map(|i| self.at(i as f64 / fs - before_s))
            .collect()
    }

    /// Largest extent of any wave from the R peak, at 5 standard deviations.
    fn support_s(&self) -> f64 {
        self.waves
            .iter()
            .map(|w| w.offset_s.abs() + 5.0 * w.width_s)
            .fold(0.0, f64::max)
    }
}

/// Draw the morphology of subject `subject_index`.
pub fn subject_template(spec: &SynthSpec, subject_index: usize) -> BeatTemplate {
    let mut rng = seeded(derive_seed(spec.morphology_seed, &[subject_index as u64]));
    let hr = spec.heart_rate_bpm
        + spec.heart_rate_spread_bpm * rng.gen_range(-1.0..=1.0);
    let rr_s = 60.0 / hr;
    // P and T move with the cycle length roughly like sqrt(RR).
    let stretch = rr_s.sqrt();
    let mut wave = |amp: (f64, f64), width: (f64, f64), offset: (f64, f64), scale: f64| Wave {
        amplitude_mv: rng.gen_range(amp.0..amp.1),
        width_s: rng.gen_range(width.0..width.1),
        offset_s: if offset.0 == offset.1 { offset.0 } else { rng.gen_range(offset.0..offset.1) * scale },
    };
    let p = wave((0.08, 0.25), (0.020, 0.040), (-0.22, -0.15), stretch);
    let q = wave((-0.25, -0.05), (0.008, 0.014), (-0.040, -0.025), 1.0);
    let r = wave((0.8, 1.6), (0.008, 0.016), (0.0, 0.0), 1.0);
    let s = wave((-0.45, -0.10), (0.008, 0.016), (0.025, 0.045), 1.0);
    let t = wave((0.15, 0.50), (0.040, 0.070), (0.22, 0.32), stretch);
    BeatTemplate {
        waves: [p, q, r, s, t],
        rr_s,
    }
}

/// Generate one record of subject `subject_index`.
///
/// The returned record carries the ground-truth R-peak times (all beats whose
/// R wave centre falls inside the record) as its sidecar.
pub fn synth_ecg(spec: &SynthSpec, subject_index: usize) -> Result<EcgRecord> {
    spec.validate()?;
    if subject_index >= spec.n_subjects {
        return invalid(format!(
            "subject index {subject_index} out of range for {} subjects",
            spec.n_subjects
        ));
    }
    let template = subject_template(spec, subject_index);
    let mut rng = seeded(derive_seed(spec.session_seed, &[subject_index as u64]));

    let n = (spec.duration_s * spec.fs).round() as usize;
    let fs = spec.fs;
    let support = template.support_s();

    // Beat times start before the record so its head is not an artificial gap.
    let mut beats = Vec::new();
    let mut t = -template.rr_s * rng.gen_range(0.0..1.0);
    while t < spec.duration_s + support {
        beats.push(t);
        t += template.rr_s * (1.0 + rng.gen_range(-RR_JITTER..=RR_JITTER));
    }

    let mut clean = vec![0.0; n];
    for &tb in &beats {
        let lo = (((tb - support) * fs).floor().max(0.0)) as usize;
        let hi = (((tb + support) * fs).ceil().max(0.0) as usize).min(n);
        for (i, v) in clean.iter_mut().enumerate().take(hi).skip(lo) {
            *v += template.at(i as f64 / fs - tb);
        }
    }

    let power = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let noise_sd = if spec.noise_snr_db.is_finite() {
        (power / 10f64.powf(spec.noise_snr_db / 10.0)).sqrt()
    } else {
        0.0
    };
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let omega = std::f64::consts::TAU * spec.pli_freq_hz;

    let samples: Vec<f64> = clean
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let t = i as f64 / fs;
            let noise = if noise_sd > 0.0 {
                noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            c + spec.baseline_drift_mv_per_s * t
                + spec.pli_amplitude_mv * (omega * t + phase).sin()
                + noise
        })
        .collect();

    let r_peaks: Vec<f64> = beats
        .into_iter()
        .filter(|&tb| tb >= 0.0 && tb <= (n - 1) as f64 / fs)
        .collect();

    Ok(EcgRecord::new(format!("s{:02}", subject_index + 1), fs, samples, "synthetic")?
        .with_r_peaks(r_peaks))
}

/// Maximum normalized cross-correlation between two waveforms over all lags.
pub fn max_normalized_xcorr(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let n = a.len() as isize;
    let m = b.len() as isize;
    let mut best = f64::NEG_INFINITY;
    for lag in -(m - 1)..n {
        let mut acc = 0.0;
        for j in 0..m {
            let i = lag + j;
            if (0..n).contains(&i) {
                acc += a[i as usize] * b[j as usize];
            }
        }
        best = best.max(acc);
    }
    best / (na * nb)
}
