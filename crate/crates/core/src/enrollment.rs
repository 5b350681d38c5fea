//! Per-identity reference functions and the enrollment database.
//!
//! Database text format (`AMGDB v1`):
//!
//! ```text
//! AMGDB v1
//! created=<unix seconds> poly_order=5 ... train_period_s=50
//! ENTITY <id>
//! STATS mean=<f> std=<f> ucl=<f> k=<f> n=<int>
//! FIT fs=<f> rmse=<f> mae=<f> n=<int> features=<i,j,...>
//! TREE <n_nodes>
//! I <feature> <threshold>
//! L <prediction> <n_train>
//! ...
//! END
//! ```
//!
//! Reals are written with 12 significant digits. Tree thresholds and leaf
//! values are rounded to that precision when the model is built, so a saved
//! tree reloads bit-identically.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::config::{parse_kv_text, parse_num, PipelineConfig};
use crate::dtree::{fit, ErrorStats, TreeModel};
use crate::error::{invalid, Error, Result};
use crate::features::{feature_matrix, select_features, slice_features};
use crate::numfmt::fmt_sig;
use crate::preprocess::preprocess_pipeline;
use crate::signal::EcgRecord;
use crate::slicer::{detect_r_peaks, slice, SliceSet};

pub const DB_MAGIC: &str = "AMGDB";
pub const DB_VERSION: u32 = 1;
pub const DB_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats {
    pub mean_mse: f64,
    pub std_mse: f64,
    pub n_slices: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub entity_id: String,
    pub tree: TreeModel,
    /// Indices into the full feature vector of the configured mode.
    pub features: Vec<usize>,
    pub window_s: f64,
    pub anchor_fraction: f64,
    pub fs_train: f64,
    pub residual_stats: ResidualStats,
    pub ucl_k: f64,
    pub ucl_mse: f64,
}

impl ReferenceModel {
    /// MSE of this reference function on every slice, in slice order.
    pub fn slice_mses(&self, ss: &SliceSet, config: &PipelineConfig) -> Result<Vec<f64>> {
        let columns = slice_features(ss, config.features);
        if self.features.iter().any(|&k| k >= columns.len()) {
            return invalid("model feature index out of range for this configuration");
        }
        let mut x = vec![0.0; self.features.len()];
        let mut out = Vec::with_capacity(ss.n_slices());
        for (s, row) in ss.rows().enumerate() {
            let base = s * ss.row_len;
            let mut acc = 0.0;
            for (c, &amp) in row.iter().enumerate() {
                for (slot, &k) in x.iter_mut().zip(&self.features) {
                    *slot = columns[k][base + c];
                }
                let r = amp - self.tree.predict_unchecked(&x);
                acc += r * r;
            }
            out.push(acc / ss.row_len as f64);
        }
        Ok(out)
    }

    /// Mean of the per-slice MSEs.
    pub fn score(&self, ss: &SliceSet, config: &PipelineConfig) -> Result<f64> {
        let mses = self.slice_mses(ss, config)?;
        Ok(mses.iter().sum::<f64>() / mses.len() as f64)
    }
}

/// Upper control limit `mean + k * std` (sample standard deviation).
pub fn compute_ucl(residual_mses: &[f64], k: f64) -> Result<f64> {
    let (mean, std) = mean_std(residual_mses)?;
    Ok(mean + k * std)
}

fn mean_std(v: &[f64]) -> Result<(f64, f64)> {
    if v.len() < 2 {
        return invalid(format!("control limit needs at least 2 values, got {}", v.len()));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Condition a record and cut it into slices under `config`.
pub fn record_slices(record: &EcgRecord, config: &PipelineConfig) -> Result<SliceSet> {
    let pre = preprocess_pipeline(record, &config.preprocess)?;
    let peaks = detect_r_peaks(&pre)?;
    slice(
        &pre,
        &peaks,
        config.slicer.window_s,
        config.slicer.anchor_fraction,
    )
}

/// Train one reference model from an (already truncated) record.
pub fn build_model(entity_id: &str, record: &EcgRecord, config: &PipelineConfig) -> Result<ReferenceModel> {
    let ss = record_slices(record, config)?;
    if ss.n_slices() < 2 {
        return invalid(format!(
            "need at least 2 training slices, got {}",
            ss.n_slices()
        ));
    }
    let chosen = select_features(&ss, config.features, &config.histogram, config.mi_keep)?;
    let x = feature_matrix(&ss, config.features, &chosen)?;
    let tree = fit(&x, &ss.data, &config.tree)?.quantized(DB_DIGITS);
    let mut model = ReferenceModel {
        entity_id: entity_id.to_string(),
        tree,
        features: chosen,
        window_s: config.slicer.window_s,
        anchor_fraction: config.slicer.anchor_fraction,
        fs_train: record.fs(),
        residual_stats: ResidualStats {
            mean_mse: 0.0,
            std_mse: 0.0,
            n_slices: ss.n_slices(),
        },
        ucl_k: config.ucl_k,
        ucl_mse: 0.0,
    };
    let mses = model.slice_mses(&ss, config)?;
    let (mean, std) = mean_std(&mses)?;
    model.residual_stats.mean_mse = mean;
    model.residual_stats.std_mse = std;
    model.ucl_mse = mean + config.ucl_k * std;
    Ok(model)
}

fn check_entity_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return invalid(format!("entity id `{id}` must be non-empty without whitespace"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentDb {
    pub version: u32,
    pub created: u64,
    pub config: PipelineConfig,
    models: BTreeMap<String, ReferenceModel>,
}

impl EnrollmentDb {
    pub fn new(config: PipelineConfig, created: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            version: DB_VERSION,
            created,
            config,
            models: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ReferenceModel> {
        self.models.get(id)
    }

    /// Models in ascending entity-id order.
    pub fn models(&self) -> impl Iterator<Item = &ReferenceModel> {
        self.models.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    /// Train and store the reference function of `entity_id`.
    ///
    /// The record is cut to the configured training period (the head is
    /// kept). Detection and slicing failures surface as
    /// [`Error::EnrollFailure`].
    pub fn enroll(&mut self, entity_id: &str, record: &EcgRecord, replace: bool) -> Result<()> {
        check_entity_id(entity_id)?;
        if !replace && self.models.contains_key(entity_id) {
            return Err(Error::DuplicateEntity(entity_id.to_string()));
        }
        let train = record.truncated(self.config.train_period_s)?;
        let model = build_model(entity_id, &train, &self.config).map_err(|e| Error::EnrollFailure {
            entity: entity_id.to_string(),
            source: Box::new(e),
        })?;
        self.models.insert(entity_id.to_string(), model);
        Ok(())
    }

    /// Insert a prebuilt model, enforcing a shared window.
    pub fn insert(&mut self, model: ReferenceModel) -> Result<()> {
        check_entity_id(&model.entity_id)?;
        if model.window_s != self.config.slicer.window_s
            || model.anchor_fraction != self.config.slicer.anchor_fraction
        {
            return invalid(format!(
                "model `{}` uses window {} s, database uses {} s",
                model.entity_id, model.window_s, self.config.slicer.window_s
            ));
        }
        if self.models.contains_key(&model.entity_id) {
            return Err(Error::DuplicateEntity(model.entity_id));
        }
        self.models.insert(model.entity_id.clone(), model);
        Ok(())
    }

    /// Combine two partial databases built under the same configuration.
    pub fn merge(mut self, other: EnrollmentDb) -> Result<Self> {
        if self.config != other.config {
            return invalid("cannot merge databases with different configurations");
        }
        for model in other.models.into_values() {
            self.insert(model)?;
        }
        Ok(self)
    }

    /// Median of the per-entity mean training MSE.
    pub fn median_mean_mse(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.models.values().map(|m| m.residual_stats.mean_mse).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }
}

pub fn save_db<W: Write>(db: &EnrollmentDb, mut out: W) -> Result<()> {
    let f = |x: f64| fmt_sig(x, DB_DIGITS);
    writeln!(out, "{DB_MAGIC} v{}", db.version)?;
    writeln!(out, "created={} {}", db.created, db.config.to_kv_line())?;
    for m in db.models.values() {
        let s = &m.residual_stats;
        let t = m.tree.train_stats();
        writeln!(out, "ENTITY {}", m.entity_id)?;
        writeln!(
            out,
            "STATS mean={} std={} ucl={} k={} n={}",
            f(s.mean_mse),
            f(s.std_mse),
            f(m.ucl_mse),
            f(m.ucl_k),
            s.n_slices
        )?;
        let feats: Vec<String> = m.features.iter().map(usize::to_string).collect();
        writeln!(
            out,
            "FIT fs={} rmse={} mae={} n={} features={}",
            f(m.fs_train),
            f(t.rmse),
            f(t.mae),
            t.n,
            feats.join(",")
        )?;
        writeln!(out, "TREE {}", m.tree.nodes().len())?;
        for line in m.tree.to_lines(DB_DIGITS) {
            writeln!(out, "{line}")?;
        }
    }
    writeln!(out, "END")?;
    out.flush()?;
    Ok(())
}

struct Lines {
    lines: Vec<String>,
    at: usize,
}

impl Lines {
    fn next(&mut self) -> Result<(usize, &str)> {
        let at = self.at;
        match self.lines.get(at) {
            Some(l) => {
                self.at += 1;
                Ok((at + 1, l.as_str()))
            }
            None => Err(Error::Format {
                line: at + 1,
                msg: "unexpected end of database stream".into(),
            }),
        }
    }
}

fn fields<'a>(line_no: usize, line: &'a str, tag: &str) -> Result<BTreeMap<&'a str, &'a str>> {
    let rest = line.strip_prefix(tag).ok_or_else(|| Error::Format {
        line: line_no,
        msg: format!("expected `{tag}` line"),
    })?;
    let mut map = BTreeMap::new();
    for token in rest.split_whitespace() {
        let (k, v) = token.split_once('=').ok_or_else(|| Error::Format {
            line: line_no,
            msg: format!("`{token}` is not key=value"),
        })?;
        map.insert(k, v);
    }
    Ok(map)
}

fn field<T: std::str::FromStr>(
    map: &BTreeMap<&str, &str>,
    key: &str,
    line_no: usize,
) -> Result<T> {
    let v = map.get(key).ok_or_else(|| Error::Format {
        line: line_no,
        msg: format!("missing `{key}`"),
    })?;
    parse_num(key, v).map_err(|_| Error::Format {
        line: line_no,
        msg: format!("bad value for `{key}`: `{v}`"),
    })
}

pub fn load_db<R: BufRead>(reader: R) -> Result<EnrollmentDb> {
    let lines = reader.lines().collect::<std::io::Result<Vec<_>>>()?;
    let mut it = Lines { lines, at: 0 };

    let (n, magic) = it.next()?;
    let version = match magic.trim().split_once(' ') {
        Some((DB_MAGIC, v)) => v.to_string(),
        _ => {
            return Err(Error::Format {
                line: n,
                msg: format!("not an {DB_MAGIC} stream"),
            })
        }
    };
    if version != format!("v{DB_VERSION}") {
        return Err(Error::Version { found: version });
    }

    let (n, header) = it.next()?;
    let mut config = PipelineConfig::default();
    let mut created = None;
    for (k, v) in parse_kv_text(header)? {
        if k == "created" {
            created = Some(parse_num::<u64>(&k, &v)?);
        } else if !config.set(&k, &v)? {
            return Err(Error::Format {
                line: n,
                msg: format!("unknown header key `{k}`"),
            });
        }
    }
    let created = created.ok_or_else(|| Error::Format {
        line: n,
        msg: "missing `created`".into(),
    })?;
    let mut db = EnrollmentDb::new(config, created)?;

    loop {
        let (n, line) = it.next()?;
        if line.trim() == "END" {
            break;
        }
        let id = line
            .strip_prefix("ENTITY ")
            .ok_or_else(|| Error::Format {
                line: n,
                msg: "expected `ENTITY <id>` or `END`".into(),
            })?
            .trim()
            .to_string();

        let (n, line) = it.next()?;
        let stats = fields(n, line, "STATS")?;
        let residual_stats = ResidualStats {
            mean_mse: field(&stats, "mean", n)?,
            std_mse: field(&stats, "std", n)?,
            n_slices: field(&stats, "n", n)?,
        };
        let ucl_mse: f64 = field(&stats, "ucl", n)?;
        let ucl_k: f64 = field(&stats, "k", n)?;

        let (n, line) = it.next()?;
        let fitl = fields(n, line, "FIT")?;
        let fs_train: f64 = field(&fitl, "fs", n)?;
        let train_stats = ErrorStats {
            rmse: field(&fitl, "rmse", n)?,
            mae: field(&fitl, "mae", n)?,
            n: field(&fitl, "n", n)?,
        };
        let features = fitl
            .get("features")
            .ok_or_else(|| Error::Format {
                line: n,
                msg: "missing `features`".into(),
            })?
            .split(',')
            .map(|s| {
                s.parse::<usize>().map_err(|_| Error::Format {
                    line: n,
                    msg: format!("bad feature index `{s}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let (n, line) = it.next()?;
        let count: usize = line
            .strip_prefix("TREE ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Format {
                line: n,
                msg: "expected `TREE <n_nodes>`".into(),
            })?;
        let first = n + 1;
        let mut node_lines = Vec::with_capacity(count);
        for _ in 0..count {
            node_lines.push(it.next()?.1.to_string());
        }
        let refs: Vec<&str> = node_lines.iter().map(String::as_str).collect();
        let tree = TreeModel::from_lines(&refs, features.len(), train_stats, first)?;

        db.insert(ReferenceModel {
            entity_id: id,
            tree,
            features,
            window_s: db.config.slicer.window_s,
            anchor_fraction: db.config.slicer.anchor_fraction,
            fs_train,
            residual_stats,
            ucl_k,
            ucl_mse,
        })?;
    }
    Ok(db)
}
