//! Flat `key=value` configuration shared by the database header, config
//! files and command-line overrides.
//!
//! Layers merge as defaults, then config file, then flags. Unknown keys are
//! rejected at every layer.

use std::fmt::Write as _;

use crate::dtree::TreeParams;
use crate::error::{invalid, Result};
use crate::features::FeatureMode;
use crate::infotheory::{HistogramConfig, RangePolicy};
use crate::numfmt::fmt_sig;
use crate::preprocess::PreprocessConfig;
use crate::slicer::SlicerConfig;

/// Everything that shapes an enrolled reference function. Stored in the
/// database header so enrollment and authentication agree.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub slicer: SlicerConfig,
    pub tree: TreeParams,
    pub features: FeatureMode,
    pub histogram: HistogramConfig,
    /// Number of top-ranked features kept when extra features are enabled.
    pub mi_keep: usize,
    pub ucl_k: f64,
    pub train_period_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            slicer: SlicerConfig::default(),
            tree: TreeParams::default(),
            features: FeatureMode::Offset,
            histogram: HistogramConfig::default(),
            mi_keep: 2,
            ucl_k: 3.0,
            train_period_s: 50.0,
        }
    }
}

/// Test-phase settings, not persisted with the database.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthConfig {
    pub test_period_s: f64,
    /// Quality gate limit as a multiple of the median enrolled mean MSE.
    pub gate_limit_factor: f64,
}

impl Default for AuthConfig {
    fn default() -> Self {
        Self {
            test_period_s: 15.0,
            gate_limit_factor: 4.0,
        }
    }
}

impl AuthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_period_s > 0.0) {
            return invalid(format!("test_period_s must be > 0, got {}", self.test_period_s));
        }
        if !(self.gate_limit_factor > 0.0) {
            return invalid(format!(
                "gate_limit_factor must be > 0, got {}",
                self.gate_limit_factor
            ));
        }
        Ok(())
    }
}

/// Merged tool settings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub auth: AuthConfig,
    pub seed: u64,
}

pub(crate) fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .or_else(|_| invalid(format!("`{key}` expects a number, got `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => invalid(format!("`{key}` expects true/false, got `{value}`")),
    }
}

fn parse_range_policy(value: &str) -> Result<RangePolicy> {
    let v = value.trim();
    if v == "data_min_max" {
        return Ok(RangePolicy::DataMinMax);
    }
    if let Some(rest) = v.strip_prefix("fixed:") {
        if let Some((lo, hi)) = rest.split_once(':') {
            return Ok(RangePolicy::Fixed(
                parse_num("mi_range_policy", lo)?,
                parse_num("mi_range_policy", hi)?,
            ));
        }
    }
    invalid(format!(
        "`mi_range_policy` expects data_min_max or fixed:<lo>:<hi>, got `{value}`"
    ))
}

fn fmt_range_policy(p: RangePolicy) -> String {
    match p {
        RangePolicy::DataMinMax => "data_min_max".into(),
        RangePolicy::Fixed(lo, hi) => format!("fixed:{lo}:{hi}"),
    }
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 15] = [
        "poly_order",
        "pli_freq_hz",
        "pli_bandwidth_hz",
        "flip_check",
        "window_s",
        "anchor_fraction",
        "min_leaf",
        "max_depth",
        "min_gain",
        "features",
        "mi_bins",
        "mi_range_policy",
        "mi_keep",
        "ucl_k",
        "train_period_s",
    ];

    /// Apply one key. Returns `Ok(false)` when the key is not a pipeline key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "poly_order" => self.preprocess.poly_order = parse_num(key, value)?,
            "pli_freq_hz" => self.preprocess.pli_freq_hz = parse_num(key, value)?,
            "pli_bandwidth_hz" => self.preprocess.pli_bandwidth_hz = parse_num(key, value)?,
            "flip_check" => self.preprocess.flip_check = parse_bool(key, value)?,
            "window_s" => self.slicer.window_s = parse_num(key, value)?,
            "anchor_fraction" => self.slicer.anchor_fraction = parse_num(key, value)?,
            "min_leaf" => self.tree.min_leaf = parse_num(key, value)?,
            "max_depth" => {
                self.tree.max_depth = match value.trim() {
                    "none" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "min_gain" => self.tree.min_gain = parse_num(key, value)?,
            "features" => self.features = value.trim().parse()?,
            "mi_bins" => self.histogram.n_bins = parse_num(key, value)?,
            "mi_range_policy" => self.histogram.range_policy = parse_range_policy(value)?,
            "mi_keep" => self.mi_keep = parse_num(key, value)?,
            "ucl_k" => self.ucl_k = parse_num(key, value)?,
            "train_period_s" => self.train_period_s = parse_num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.slicer.validate()?;
        self.tree.validate()?;
        self.histogram.validate()?;
        if self.mi_keep == 0 {
            return invalid("mi_keep must be at least 1");
        }
        if !(self.ucl_k >= 0.0 && self.ucl_k.is_finite()) {
            return invalid(format!("ucl_k must be finite and >= 0, got {}", self.ucl_k));
        }
        if !(self.train_period_s > 0.0) {
            return invalid(format!("train_period_s must be > 0, got {}", self.train_period_s));
        }
        Ok(())
    }

    /// Space-separated `key=value` pairs covering every pipeline key.
    pub fn to_kv_line(&self) -> String {
        let mut s = String::new();
        let p = &self.preprocess;
        let _ = write!(
            s,
            "poly_order={} pli_freq_hz={} pli_bandwidth_hz={} flip_check={} \
             window_s={} anchor_fraction={} min_leaf={} max_depth={} min_gain={} \
             features={} mi_bins={} mi_range_policy={} mi_keep={} ucl_k={} train_period_s={}",
            p.poly_order,
            fmt_sig(p.pli_freq_hz, 12),
            fmt_sig(p.pli_bandwidth_hz, 12),
            p.flip_check,
            fmt_sig(self.slicer.window_s, 12),
            fmt_sig(self.slicer.anchor_fraction, 12),
            self.tree.min_leaf,
            self.tree.max_depth.map_or("none".to_string(), |d| d.to_string()),
            fmt_sig(self.tree.min_gain, 12),
            self.features,
            self.histogram.n_bins,
            fmt_range_policy(self.histogram.range_policy),
            self.mi_keep,
            fmt_sig(self.ucl_k, 12),
            fmt_sig(self.train_period_s, 12),
        );
        s
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.pipeline.set(key, value)? {
            return Ok(());
        }
        match key {
            "test_period_s" => self.auth.test_period_s = parse_num(key, value)?,
            "gate_limit_factor" => self.auth.gate_limit_factor = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return invalid(format!("unknown configuration key `{key}`")),
        }
        Ok(())
    }

    /// Apply a `key=value` text, one pair per line (or several separated by
    /// whitespace). Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_kv_text(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.auth.validate()
    }
}

/// Split a `key=value` text into pairs.
pub fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        for token in line.split_whitespace() {
            let (k, v) = token.split_once('=').ok_or_else(|| crate::Error::Format {
                line: i + 1,
                msg: format!("`{token}` is not key=value"),
            })?;
            out.push((k.to_string(), v.to_string()));
        }
    }
    Ok(out)
}

/// Parse a single `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => invalid(format!("override `{s}` is not key=value")),
    }
}
