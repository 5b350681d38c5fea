//! Brute-force reference computations shared by the integration suites.
//! None of these call into the code paths they are used to check.
#![allow(dead_code)]

use ecgauth::dtree::{FeatureMatrix, Node, TreeModel, TreeParams, SSE_EPS};
use rand::Rng;

pub fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Ordinary least-squares slope of `y` against `t`.
pub fn ols_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let den: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    num / den
}

fn sse(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m).powi(2)).sum()
}

/// One candidate split found by exhaustive enumeration.
#[derive(Debug, Clone, Copy)]
pub struct OracleSplit {
    pub feature: usize,
    pub threshold: f64,
    pub sse: f64,
}

/// Enumerate every (feature, midpoint) candidate over the rows in `idx`
/// that leaves at least `min_leaf` rows on each side, scoring each by a
/// direct SSE of the two partitions. The winner is the lowest SSE; SSEs
/// within `tie` of the minimum go to the lowest feature, then threshold.
pub fn oracle_split(cols: &[Vec<f64>], y: &[f64], idx: &[usize], min_leaf: usize) -> Option<OracleSplit> {
    let scale: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    let tie = SSE_EPS * scale;
    let mut cands = Vec::new();
    for (f, col) in cols.iter().enumerate() {
        let mut vals: Vec<f64> = idx.iter().map(|&i| col[i]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<f64> = idx.iter().filter(|&&i| col[i] < t).map(|&i| y[i]).collect();
            let right: Vec<f64> = idx.iter().filter(|&&i| col[i] >= t).map(|&i| y[i]).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            cands.push(OracleSplit { feature: f, threshold: t, sse: sse(&left) + sse(&right) });
        }
    }
    let min = cands.iter().map(|c| c.sse).fold(f64::INFINITY, f64::min);
    cands.into_iter().find(|c| c.sse <= min + tie)
}

/// Walk a fitted tree in preorder and compare every node with the oracle.
pub fn check_tree(model: &TreeModel, cols: &[Vec<f64>], y: &[f64], params: &TreeParams) -> Result<(), String> {
    fn walk(
        nodes: &[Node],
        at: usize,
        idx: Vec<usize>,
        depth: usize,
        cols: &[Vec<f64>],
        y: &[f64],
        p: &TreeParams,
    ) -> Result<usize, String> {
        let n = idx.len();
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let node_sse = sse(&ys);
        let scale: f64 = ys.iter().map(|v| v * v).sum();
        let depth_ok = p.max_depth.map_or(true, |d| depth < d);
        let expect = if depth_ok {
            oracle_split(cols, y, &idx, p.min_leaf).filter(|s| {
                let gain = node_sse - s.sse;
                gain > p.min_gain && gain > SSE_EPS * scale
            })
        } else {
            None
        };
        match (&nodes[at], expect) {
            (Node::Leaf { prediction, n_train }, None) => {
                let mean = ys.iter().sum::<f64>() / n as f64;
                if *n_train != n || (prediction - mean).abs() > 1e-12 * (1.0 + mean.abs()) {
                    return Err(format!("leaf {at}: got ({prediction}, {n_train}), want ({mean}, {n})"));
                }
                Ok(at + 1)
            }
            (Node::Split { feature, threshold, right }, Some(s)) => {
                if *feature != s.feature || (threshold - s.threshold).abs() > 1e-12 * (1.0 + s.threshold.abs()) {
                    return Err(format!(
                        "node {at}: split ({feature}, {threshold}) but oracle wants ({}, {}) sse {}",
                        s.feature, s.threshold, s.sse
                    ));
                }
                let col = &cols[*feature];
                let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| col[i] < *threshold);
                let after = walk(nodes, at + 1, l, depth + 1, cols, y, p)?;
                if after != *right {
                    return Err(format!("node {at}: right child at {right}, expected {after}"));
                }
                walk(nodes, *right, r, depth + 1, cols, y, p)
            }
            (Node::Leaf { .. }, Some(s)) => Err(format!("leaf {at} where oracle splits on {s:?}")),
            (Node::Split { .. }, None) => Err(format!("split {at} where oracle makes a leaf")),
        }
    }
    let end = walk(model.nodes(), 0, (0..y.len()).collect(), 0, cols, y, params)?;
    if end != model.nodes().len() {
        return Err(format!("{} nodes, oracle walk ended at {end}", model.nodes().len()));
    }
    Ok(())
}

/// A random regression instance with n <= 50 rows and d <= 2 features.
/// Every other instance draws from a small integer grid so exact ties in
/// both features and SSEs occur.
pub fn random_instance<R: Rng>(rng: &mut R, k: usize) -> (Vec<Vec<f64>>, Vec<f64>, TreeParams) {
    let n = rng.gen_range(1..=50);
    let d = rng.gen_range(1..=2);
    let discrete = k % 2 == 0;
    let draw = |rng: &mut R| {
        if discrete {
            rng.gen_range(0..6) as f64 * 0.25
        } else {
            rng.gen_range(-2.0..2.0)
        }
    };
    let cols: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| draw(rng)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    let params = TreeParams {
        min_leaf: rng.gen_range(1..=5),
        max_depth: if rng.gen_bool(0.3) { Some(rng.gen_range(0..4)) } else { None },
        min_gain: 0.0,
    };
    (cols, y, params)
}

pub fn fit_cols(cols: &[Vec<f64>], y: &[f64], params: &TreeParams) -> TreeModel {
    let x = FeatureMatrix::from_columns(cols.to_vec()).unwrap();
    ecgauth::dtree::fit(&x, y, params).unwrap()
}

/// Greedy one-to-one matching of detected to true peak times within
/// `tol`, ignoring peaks within `margin` of either end. Returns
/// (precision, recall).
pub fn peak_scores(detected: &[f64], truth: &[f64], duration: f64, tol: f64, margin: f64) -> (f64, f64) {
    let inside = |t: f64| t >= margin && t <= duration - margin;
    let det: Vec<f64> = detected.iter().copied().filter(|&t| inside(t)).collect();
    let tru: Vec<f64> = truth.iter().copied().filter(|&t| inside(t)).collect();
    let mut taken = vec![false; det.len()];
    let mut hits = 0;
    for t in &tru {
        if let Some(j) = (0..det.len()).find(|&j| !taken[j] && (det[j] - t).abs() <= tol) {
            taken[j] = true;
            hits += 1;
        }
    }
    (hits as f64 / det.len().max(1) as f64, hits as f64 / tru.len().max(1) as f64)
}

/// Peak indices in seconds.
pub fn to_seconds(peaks: &[usize], fs: f64) -> Vec<f64> {
    peaks.iter().map(|&p| p as f64 / fs).collect()
}
