//! R-peak detection and R-anchored fixed-width slicing.

use crate::error::{invalid, Error, Result};
use crate::signal::{EcgRecord, Stage};

/// Minimum spacing between accepted peaks (240 bpm ceiling).
pub const REFRACTORY_S: f64 = 0.25;
/// Candidate threshold as a fraction of the typical beat amplitude.
pub const THRESHOLD_FACTOR: f64 = 0.6;
/// Block length used to estimate the typical beat amplitude. Longer than the
/// slowest supported RR interval (1.5 s at 40 bpm), so every full block holds
/// at least one R wave.
pub const AMPLITUDE_BLOCK_S: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SlicerConfig {
    pub window_s: f64,
    /// Fraction of the window that precedes the R peak.
    pub anchor_fraction: f64,
}

impl Default for SlicerConfig {
    fn default() -> Self {
        Self {
            window_s: 0.6,
            anchor_fraction: 0.25,
        }
    }
}

impl SlicerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return invalid(format!("window_s must be > 0, got {}", self.window_s));
        }
        if !(0.0..1.0).contains(&self.anchor_fraction) {
            return invalid(format!(
                "anchor_fraction must lie in [0, 1), got {}",
                self.anchor_fraction
            ));
        }
        Ok(())
    }
}

/// Beat windows cut from one record, one row per kept beat.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSet {
    pub window_s: f64,
    pub anchor_fraction: f64,
    pub fs: f64,
    pub row_len: usize,
    /// Row-major `n_slices x row_len` amplitudes.
    pub data: Vec<f64>,
    pub anchor_times_s: Vec<f64>,
    /// RR interval preceding each anchor (following one for the first beat).
    pub rr_s: Vec<f64>,
}

impl SliceSet {
    pub fn n_slices(&self) -> usize {
        self.anchor_times_s.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.row_len..(i + 1) * self.row_len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.row_len)
    }

    /// Column index of the R peak inside every row.
    pub fn anchor_column(&self) -> usize {
        (self.anchor_fraction * self.window_s * self.fs).round() as usize
    }

    /// Column-wise mean waveform.
    pub fn mean_waveform(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.row_len];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.n_slices() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// (offset, amplitude) pairs, one per sample of every slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTable {
    pub offsets: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl TrainingTable {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Robust estimate of the R-wave amplitude: the median of the maxima of
/// consecutive full blocks of [`AMPLITUDE_BLOCK_S`].
fn typical_beat_amplitude(x: &[f64], fs: f64) -> f64 {
    let block = ((AMPLITUDE_BLOCK_S * fs).round() as usize).max(1);
    let mut maxima: Vec<f64> = x
        .chunks_exact(block)
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    if maxima.is_empty() {
        maxima.push(x.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    maxima.sort_by(f64::total_cmp);
    let m = maxima.len();
    if m % 2 == 1 {
        maxima[m / 2]
    } else {
        0.5 * (maxima[m / 2 - 1] + maxima[m / 2])
    }
}

/// Adaptive-threshold R-peak detector on a preprocessed record.
///
/// Candidates are local maxima above `0.6 x` the typical beat amplitude.
/// Any two kept peaks closer than [`REFRACTORY_S`] are resolved in favour of
/// the larger one. Returns ascending sample indices.
pub fn detect_r_peaks(record: &EcgRecord) -> Result<Vec<usize>> {
    if record.stage() != Stage::Preprocessed {
        return invalid("R-peak detection needs a preprocessed record");
    }
    let x = record.samples();
    let theta = THRESHOLD_FACTOR * typical_beat_amplitude(x, record.fs());
    let refractory = (REFRACTORY_S * record.fs()).round() as usize;

    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..x.len() - 1 {
        if !(x[i] > theta && x[i] > x[i - 1] && x[i] >= x[i + 1]) {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if i - *last < refractory => {
                if x[i] > x[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }
    if peaks.is_empty() {
        return Err(Error::EmptyDetection);
    }
    Ok(peaks)
}

/// Cut one window per peak; windows reaching outside the record are dropped.
pub fn slice(
    record: &EcgRecord,
    peaks: &[usize],
    window_s: f64,
    anchor_fraction: f64,
) -> Result<SliceSet> {
    SlicerConfig { window_s, anchor_fraction }.validate()?;
    let fs = record.fs();
    let x = record.samples();
    let row_len = (window_s * fs).round() as usize;
    if row_len < 2 {
        return invalid(format!("window of {window_s} s at {fs} Hz is under 2 samples"));
    }
    if peaks.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("peak indices must be strictly ascending");
    }
    if peaks.last().is_some_and(|&p| p >= x.len()) {
        return invalid("peak index beyond record end");
    }
    let pre = (anchor_fraction * window_s * fs).round() as usize;

    let mut data = Vec::new();
    let mut anchor_times_s = Vec::new();
    let mut rr_s = Vec::new();
    for (k, &p) in peaks.iter().enumerate() {
        if p < pre || p - pre + row_len > x.len() {
            continue;
        }
        let start = p - pre;
        data.extend_from_slice(&x[start..start + row_len]);
        anchor_times_s.push(p as f64 / fs);
        let rr = if k > 0 {
            (p - peaks[k - 1]) as f64 / fs
        } else if peaks.len() > 1 {
            (peaks[1] - p) as f64 / fs
        } else {
            0.0
        };
        rr_s.push(rr);
    }
    if anchor_times_s.is_empty() {
        return Err(Error::EmptySliceSet);
    }
    Ok(SliceSet {
        window_s,
        anchor_fraction,
        fs,
        row_len,
        data,
        anchor_times_s,
        rr_s,
    })
}

/// Flatten slices into (offset, amplitude) pairs, row order then column order.
pub fn to_training_table(ss: &SliceSet) -> TrainingTable {
    let offsets_row: Vec<f64> = (0..ss.row_len).map(|c| c as f64 / ss.fs).collect();
    let mut offsets = Vec::with_capacity(ss.data.len());
    for _ in 0..ss.n_slices() {
        offsets.extend_from_slice(&offsets_row);
    }
    TrainingTable {
        offsets,
        amplitudes: ss.data.clone(),
    }
}

/// Match detected peaks against ground truth within `tolerance_s`.
///
/// Peaks within `margin_s` of either record edge are ignored on both sides.
/// Returns `(true_positives, n_detected, n_truth)`.
pub fn match_peaks(
    detected_s: &[f64],
    truth_s: &[f64],
    duration_s: f64,
    tolerance_s: f64,
    margin_s: f64,
) -> (usize, usize, usize) {
    let inside = |t: &&f64| **t >= margin_s && **t <= duration_s - margin_s;
    let det: Vec<f64> = detected_s.iter().filter(inside).copied().collect();
    let truth: Vec<f64> = truth_s.iter().filter(inside).copied().collect();
    let mut used = vec![false; det.len()];
    let mut tp = 0;
    for t in &truth {
        let best = det
            .iter()
            .enumerate()
            .filter(|(j, d)| !used[*j] && (*d - t).abs() <= tolerance_s)
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()));
        if let Some((j, _)) = best {
            used[j] = true;
            tp += 1;
        }
    }
    (tp, det.len(), truth.len())
}
