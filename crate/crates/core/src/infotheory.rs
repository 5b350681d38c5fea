//! Shannon entropy, conditional entropy and mutual information (all in bits),
//! with a plain equal-width histogram estimator for the joint distribution.

use crate::error::{invalid, Result};

const SUM_TOL: f64 = 1e-9;

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return invalid("distribution has no outcomes");
    }
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return invalid(format!("probability {p} is negative or not finite"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return invalid(format!("probabilities sum to {total}, not 1"));
    }
    Ok(())
}

/// Probability mass function over a finite outcome set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_probs(&probs)?;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Joint mass function, row index = outcome of x, column index = outcome of y.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    nx: usize,
    ny: usize,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ny) {
            return invalid("joint distribution rows have unequal lengths");
        }
        let probs: Vec<f64> = rows.into_iter().flatten().collect();
        check_probs(&probs)?;
        Ok(Self { nx, ny, probs })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.ny + y]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.probs.chunks_exact(self.ny).map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let mut py = vec![0.0; self.ny];
        for row in self.probs.chunks_exact(self.ny) {
            for (acc, p) in py.iter_mut().zip(row) {
                *acc += p;
            }
        }
        py
    }

    pub fn transpose(&self) -> Self {
        let mut probs = vec![0.0; self.probs.len()];
        for x in 0..self.nx {
            for y in 0..self.ny {
                probs[y * self.nx + x] = self.get(x, y);
            }
        }
        Self {
            nx: self.ny,
            ny: self.nx,
            probs,
        }
    }
}

/// `H(x) = -Σ p log2 p`, with `0 log 0 = 0`.
pub fn entropy(p: &Pmf) -> f64 {
    entropy_of(&p.probs)
}

fn entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// `H(x|y) = -Σ p(x,y) log2 p(x|y)`.
pub fn conditional_entropy(j: &JointPmf) -> f64 {
    let py = j.marginal_y();
    let mut h = 0.0;
    for x in 0..j.nx {
        for (y, &pyv) in py.iter().enumerate() {
            let pxy = j.get(x, y);
            if pxy > 0.0 && pyv > 0.0 {
                h -= pxy * (pxy / pyv).log2();
            }
        }
    }
    h
}

/// `I(x;y) = Σ p(x,y) log2 [p(x,y) / (p(x) p(y))]`.
pub fn mutual_information(j: &JointPmf) -> f64 {
    let px = j.marginal_x();
    let py = j.marginal_y();
    let mut mi = 0.0;
    for (x, &pxv) in px.iter().enumerate() {
        for (y, &pyv) in py.iter().enumerate() {
            let pxy = j.get(x, y);
            if pxy > 0.0 {
                mi += pxy * (pxy / (pxv * pyv)).log2();
            }
        }
    }
    mi
}

/// `I(x;y)` through the entropy identity `H(x) - H(x|y)`.
pub fn mutual_information_from_entropies(j: &JointPmf) -> f64 {
    entropy_of(&j.marginal_x()) - conditional_entropy(j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangePolicy {
    DataMinMax,
    /// Values outside `[lo, hi]` are clamped into the edge bins.
    Fixed(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramConfig {
    pub n_bins: usize,
    pub range_policy: RangePolicy,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            n_bins: 32,
            range_policy: RangePolicy::DataMinMax,
        }
    }
}

impl HistogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return invalid(format!("n_bins must be at least 2, got {}", self.n_bins));
        }
        if let RangePolicy::Fixed(lo, hi) = self.range_policy {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return invalid(format!("fixed histogram range [{lo}, {hi}] is empty"));
            }
        }
        Ok(())
    }

    /// Equal-width bin index of every value; the maximum lands in the last bin.
    pub fn bin(&self, values: &[f64]) -> Vec<usize> {
        let (lo, hi) = match self.range_policy {
            RangePolicy::Fixed(lo, hi) => (lo, hi),
            RangePolicy::DataMinMax => values.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &v| (lo.min(v), hi.max(v)),
            ),
        };
        let width = hi - lo;
        values
            .iter()
            .map(|&v| {
                if !(width > 0.0) {
                    0
                } else {
                    let b = ((v - lo) / width * self.n_bins as f64).floor();
                    (b.max(0.0) as usize).min(self.n_bins - 1)
                }
            })
            .collect()
    }
}

/// The y side of a joint estimate.
#[derive(Debug, Clone, Copy)]
pub enum Labels<'a> {
    /// Class codes, used directly as outcomes.
    Discrete(&'a [usize]),
    /// Real values, binned with the same histogram policy as x.
    Continuous(&'a [f64]),
}

impl Labels<'_> {
    fn len(&self) -> usize {
        match self {
            Labels::Discrete(v) => v.len(),
            Labels::Continuous(v) => v.len(),
        }
    }
}

/// Histogram estimate of the joint distribution of `(xs, ys)`.
pub fn estimate_joint(xs: &[f64], ys: Labels<'_>, cfg: &HistogramConfig) -> Result<JointPmf> {
    cfg.validate()?;
    if xs.is_empty() {
        return invalid("cannot estimate a distribution from no samples");
    }
    if xs.len() != ys.len() {
        return invalid(format!(
            "xs has {} samples but ys has {}",
            xs.len(),
            ys.len()
        ));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return invalid("xs contains non-finite values");
    }
    let bx = cfg.bin(xs);
    let (by, ny) = match ys {
        Labels::Continuous(v) => {
            if v.iter().any(|v| !v.is_finite()) {
                return invalid("ys contains non-finite values");
            }
            (cfg.bin(v), cfg.n_bins)
        }
        Labels::Discrete(v) => {
            let mut classes: Vec<usize> = v.to_vec();
            classes.sort_unstable();
            classes.dedup();
            let codes = v
                .iter()
                .map(|c| classes.binary_search(c).expect("class present"))
                .collect();
            (codes, classes.len())
        }
    };
    let n = xs.len() as f64;
    let mut rows = vec![vec![0.0; ny]; cfg.n_bins];
    for (&i, &j) in bx.iter().zip(&by) {
        rows[i][j] += 1.0;
    }
    for row in &mut rows {
        row.iter_mut().for_each(|c| *c /= n);
    }
    JointPmf::new(rows)
}

/// Score every feature column by its estimated mutual information with the
/// labels; returns `(feature_index, score)` sorted by descending score, ties
/// broken by ascending index.
pub fn rank_features(
    columns: &[Vec<f64>],
    labels: Labels<'_>,
    cfg: &HistogramConfig,
) -> Result<Vec<(usize, f64)>> {
    if columns.is_empty() {
        return invalid("no features to rank");
    }
    if labels.len() < 2 {
        return invalid("ranking needs at least 2 samples");
    }
    let mut scored = columns
        .iter()
        .enumerate()
        .map(|(k, col)| Ok((k, mutual_information(&estimate_joint(col, labels, cfg)?))))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}
