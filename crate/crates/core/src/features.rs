//! Per-sample regression inputs built from a slice set.
//!
//! The default input is the within-window offset alone. The `beat` mode adds
//! two beat-local statistics (the R amplitude of the slice and its preceding
//! RR interval); in that mode the columns are ranked by mutual information
//! with the amplitude and only the top `mi_keep` are used for the tree.

use std::fmt;
use std::str::FromStr;

use crate::dtree::FeatureMatrix;
use crate::error::{invalid, Error, Result};
use crate::infotheory::{rank_features, HistogramConfig, Labels};
use crate::slicer::SliceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    Offset,
    OffsetBeat,
}

impl FeatureMode {
    pub fn n_features(self) -> usize {
        match self {
            FeatureMode::Offset => 1,
            FeatureMode::OffsetBeat => 3,
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Offset => "offset",
            FeatureMode::OffsetBeat => "beat",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offset" => Ok(FeatureMode::Offset),
            "beat" => Ok(FeatureMode::OffsetBeat),
            other => invalid(format!("`features` expects offset or beat, got `{other}`")),
        }
    }
}

/// All feature columns for every sample of every slice, row order then
/// column order (matching [`crate::slicer::to_training_table`]).
pub fn slice_features(ss: &SliceSet, mode: FeatureMode) -> Vec<Vec<f64>> {
    let n = ss.data.len();
    let mut offset = Vec::with_capacity(n);
    for _ in 0..ss.n_slices() {
        offset.extend((0..ss.row_len).map(|c| c as f64 / ss.fs));
    }
    match mode {
        FeatureMode::Offset => vec![offset],
        FeatureMode::OffsetBeat => {
            let anchor = ss.anchor_column().min(ss.row_len - 1);
            let mut r_amp = Vec::with_capacity(n);
            let mut rr = Vec::with_capacity(n);
            for (i, row) in ss.rows().enumerate() {
                r_amp.extend(std::iter::repeat(row[anchor]).take(ss.row_len));
                rr.extend(std::iter::repeat(ss.rr_s[i]).take(ss.row_len));
            }
            vec![offset, r_amp, rr]
        }
    }
}

/// Feature indices a tree should use. The offset-only mode always keeps the
/// single column; the beat mode keeps the `keep` best by estimated MI with
/// the amplitude, returned in ascending index order.
pub fn select_features(
    ss: &SliceSet,
    mode: FeatureMode,
    hist: &HistogramConfig,
    keep: usize,
) -> Result<Vec<usize>> {
    let columns = slice_features(ss, mode);
    if columns.len() == 1 {
        return Ok(vec![0]);
    }
    let ranked = rank_features(&columns, Labels::Continuous(&ss.data), hist)?;
    let mut chosen: Vec<usize> = ranked.into_iter().take(keep.max(1)).map(|(k, _)| k).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Matrix of the chosen columns only.
pub fn feature_matrix(ss: &SliceSet, mode: FeatureMode, chosen: &[usize]) -> Result<FeatureMatrix> {
    let mut columns = slice_features(ss, mode);
    if chosen.iter().any(|&k| k >= columns.len()) {
        return invalid(format!("feature index out of range for mode {mode}"));
    }
    let picked = chosen
        .iter()
        .map(|&k| std::mem::take(&mut columns[k]))
        .collect();
    FeatureMatrix::from_columns(picked)
}
