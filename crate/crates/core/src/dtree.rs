//! CART regression tree grown by exhaustive best-split search.
//!
//! At every node each feature is sorted and every midpoint between two
//! consecutive distinct values is scored by the summed squared error (SSE)
//! of the two children. The best candidate is taken when it reduces the SSE
//! by more than `min_gain` and leaves at least `min_leaf` samples on each
//! side. Candidates are scanned by ascending feature index, then ascending
//! threshold, and a later candidate only wins with a strictly lower SSE, so
//! ties resolve to the lower feature and the lower threshold.
//!
//! Samples route left when `value < threshold`. Leaves predict the mean
//! target of the training samples that reached them.

use crate::error::{invalid, Error, Result};
use crate::numfmt::{fmt_sig, round_sig};
use crate::slicer::TrainingTable;

/// Two candidate SSEs closer than this (relative to the node's total sum of
/// squares) are a tie, and a gain below it is rounding noise, not a split.
pub const SSE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub min_gain: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            min_leaf: 4,
            max_depth: None,
            min_gain: 0.0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf < 1 {
            return invalid("min_leaf must be at least 1");
        }
        if !(self.min_gain >= 0.0 && self.min_gain.is_finite()) {
            return invalid(format!("min_gain must be finite and >= 0, got {}", self.min_gain));
        }
        Ok(())
    }
}

/// Column-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.is_empty() {
            return invalid("feature matrix needs at least one column");
        }
        if columns.iter().any(|c| c.len() != n_rows) {
            return invalid("feature columns have unequal lengths");
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("feature matrix contains non-finite values");
        }
        Ok(Self { n_rows, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, f: usize) -> &[f64] {
        &self.columns[f]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

/// Preorder node arena; the left child of a split at `i` is `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        right: usize,
    },
    Leaf {
        prediction: f64,
        n_train: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
    n_features: usize,
    train_stats: ErrorStats,
}

/// The winning split of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// SSE of the left plus right child.
    pub child_sse: f64,
    /// SSE of the unsplit node.
    pub node_sse: f64,
}

/// Two-pass mean; the correction term makes constant inputs exact.
fn mean_at(y: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let m = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    m + idx.iter().map(|&i| y[i] - m).sum::<f64>() / n
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m > a {
        m
    } else {
        b
    }
}

/// Exhaustive best split over `idx`, or `None` when no candidate satisfies
/// the leaf-size rule.
pub fn best_split(
    x: &FeatureMatrix,
    y: &[f64],
    idx: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = idx.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let mean = mean_at(y, idx);
    let node_sse: f64 = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    let scale = idx.iter().map(|&i| y[i] * y[i]).sum::<f64>();
    let tie = SSE_EPS * scale;

    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<usize> = idx.to_vec();
    for f in 0..x.n_features() {
        let col = x.column(f);
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        // Centred running sums keep the SSE formula away from cancellation.
        let (mut s1, mut s2) = (0.0, 0.0);
        let total1: f64 = order.iter().map(|&i| y[i] - mean).sum();
        let total2: f64 = order.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        for pos in 0..n - 1 {
            let d = y[order[pos]] - mean;
            s1 += d;
            s2 += d * d;
            let nl = pos + 1;
            let nr = n - nl;
            let (lo, hi) = (col[order[pos]], col[order[pos + 1]]);
            if nl < min_leaf || nr < min_leaf || !(lo < hi) {
                continue;
            }
            let r1 = total1 - s1;
            let r2 = total2 - s2;
            let sse = (s2 - s1 * s1 / nl as f64) + (r2 - r1 * r1 / nr as f64);
            let better = match &best {
                None => true,
                Some(b) => sse < b.child_sse - tie,
            };
            if better {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    child_sse: sse.max(0.0),
                    node_sse,
                });
            }
        }
    }
    best
}

/// Whether a candidate split is worth taking under `params`.
pub fn accepts(choice: &SplitChoice, scale: f64, min_gain: f64) -> bool {
    let gain = choice.node_sse - choice.child_sse;
    gain > min_gain && gain > SSE_EPS * scale
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) {
        let n = idx.len();
        let mean = mean_at(self.y, &idx);
        let depth_ok = self.params.max_depth.map_or(true, |d| depth < d);
        let scale = idx.iter().map(|&i| self.y[i] * self.y[i]).sum::<f64>();
        let choice = if depth_ok {
            best_split(self.x, self.y, &idx, self.params.min_leaf)
                .filter(|c| accepts(c, scale, self.params.min_gain))
        } else {
            None
        };
        match choice {
            None => self.nodes.push(Node::Leaf {
                prediction: mean,
                n_train: n,
            }),
            Some(c) => {
                let col = self.x.column(c.feature);
                let (left, right): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| col[i] < c.threshold);
                let at = self.nodes.len();
                self.nodes.push(Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    right: 0,
                });
                self.grow(left, depth + 1);
                let right_at = self.nodes.len();
                if let Node::Split { right, .. } = &mut self.nodes[at] {
                    *right = right_at;
                }
                self.grow(right, depth + 1);
            }
        }
    }
}

/// Grow a tree on `x` (n x d) against targets `y`.
pub fn fit(x: &FeatureMatrix, y: &[f64], params: &TreeParams) -> Result<TreeModel> {
    params.validate()?;
    if x.n_rows() == 0 {
        return invalid("cannot fit a tree to an empty table");
    }
    if y.len() != x.n_rows() {
        return invalid(format!(
            "{} targets for {} feature rows",
            y.len(),
            x.n_rows()
        ));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return invalid("targets contain non-finite values");
    }
    let mut b = Builder {
        x,
        y,
        params,
        nodes: Vec::new(),
    };
    b.grow((0..x.n_rows()).collect(), 0);
    let mut model = TreeModel {
        nodes: b.nodes,
        n_features: x.n_features(),
        train_stats: ErrorStats { rmse: 0.0, mae: 0.0, n: 0 },
    };
    model.train_stats = model.evaluate_matrix(x, y)?;
    Ok(model)
}

/// Fit the offset -> amplitude function of a training table.
pub fn fit_table(table: &TrainingTable, params: &TreeParams) -> Result<TreeModel> {
    let x = FeatureMatrix::from_columns(vec![table.offsets.clone()])?;
    fit(&x, &table.amplitudes, params)
}

impl TreeModel {
    /// Rebuild a model from a preorder node list, checking its structure.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize, train_stats: ErrorStats) -> Result<Self> {
        fn check(nodes: &[Node], at: usize, n_features: usize) -> Result<usize> {
            match nodes.get(at) {
                None => invalid(format!("tree node {at} is missing")),
                Some(Node::Leaf { prediction, .. }) => {
                    if !prediction.is_finite() {
                        return invalid("leaf prediction is not finite");
                    }
                    Ok(at + 1)
                }
                Some(Node::Split { feature, threshold, right }) => {
                    if *feature >= n_features || !threshold.is_finite() {
                        return invalid(format!("bad split at node {at}"));
                    }
                    let after_left = check(nodes, at + 1, n_features)?;
                    if after_left != *right {
                        return invalid(format!("node {at} right child is misplaced"));
                    }
                    check(nodes, *right, n_features)
                }
            }
        }
        if n_features == 0 {
            return invalid("tree needs at least one feature");
        }
        if check(&nodes, 0, n_features)? != nodes.len() {
            return invalid("trailing tree nodes");
        }
        Ok(Self {
            nodes,
            n_features,
            train_stats,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn train_stats(&self) -> ErrorStats {
        self.train_stats
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split { feature, threshold, right } => {
                    at = if x[feature] < threshold { at + 1 } else { right };
                }
            }
        }
    }

    /// Prediction without a dimension check.
    pub fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { prediction, .. } => prediction,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return invalid(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return invalid("prediction input is not finite");
        }
        Ok(self.predict_unchecked(x))
    }

    pub fn evaluate_matrix(&self, x: &FeatureMatrix, y: &[f64]) -> Result<ErrorStats> {
        if x.n_rows() == 0 {
            return invalid("cannot evaluate on an empty table");
        }
        if x.n_features() != self.n_features {
            return invalid(format!(
                "model expects {} features, table has {}",
                self.n_features,
                x.n_features()
            ));
        }
        let residuals = (0..x.n_rows()).map(|i| y[i] - self.predict_unchecked(&x.row(i)));
        Ok(error_stats(residuals))
    }

    /// RMSE and MAE on a 1-D offset table.
    pub fn evaluate(&self, table: &TrainingTable) -> Result<ErrorStats> {
        let x = FeatureMatrix::from_columns(vec![table.offsets.clone()])?;
        self.evaluate_matrix(&x, &table.amplitudes)
    }

    /// Round every threshold and prediction to `digits` significant digits so
    /// a text dump at that precision reloads bit-identically.
    pub fn quantized(&self, digits: usize) -> Self {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match *n {
                Node::Split { feature, threshold, right } => Node::Split {
                    feature,
                    threshold: round_sig(threshold, digits),
                    right,
                },
                Node::Leaf { prediction, n_train } => Node::Leaf {
                    prediction: round_sig(prediction, digits),
                    n_train,
                },
            })
            .collect();
        Self {
            nodes,
            n_features: self.n_features,
            train_stats: self.train_stats,
        }
    }

    /// One line per node in preorder: `I <feature> <threshold>` or
    /// `L <prediction> <n_train>`.
    pub fn to_lines(&self, digits: usize) -> Vec<String> {
        self.nodes
            .iter()
            .map(|n| match *n {
                Node::Split { feature, threshold, .. } => {
                    format!("I {feature} {}", fmt_sig(threshold, digits))
                }
                Node::Leaf { prediction, n_train } => {
                    format!("L {} {n_train}", fmt_sig(prediction, digits))
                }
            })
            .collect()
    }

    /// Inverse of [`to_lines`](Self::to_lines). `first_line` is used for
    /// error positions.
    pub fn from_lines(
        lines: &[&str],
        n_features: usize,
        train_stats: ErrorStats,
        first_line: usize,
    ) -> Result<Self> {
        let bad = |i: usize, msg: &str| Error::Format {
            line: first_line + i,
            msg: msg.to_string(),
        };
        let mut parsed = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let node = match parts.as_slice() {
                ["I", f, t] => Node::Split {
                    feature: f.parse().map_err(|_| bad(i, "bad feature index"))?,
                    threshold: t.parse().map_err(|_| bad(i, "bad threshold"))?,
                    right: 0,
                },
                ["L", p, n] => Node::Leaf {
                    prediction: p.parse().map_err(|_| bad(i, "bad prediction"))?,
                    n_train: n.parse().map_err(|_| bad(i, "bad leaf count"))?,
                },
                _ => return Err(bad(i, "expected `I <feature> <threshold>` or `L <prediction> <n>`")),
            };
            parsed.push(node);
        }
        // Resolve right-child links by walking the preorder sequence.
        fn link(nodes: &mut [Node], at: usize) -> Option<usize> {
            match nodes.get(at)? {
                Node::Leaf { .. } => Some(at + 1),
                Node::Split { .. } => {
                    let right = link(nodes, at + 1)?;
                    if let Node::Split { right: r, .. } = &mut nodes[at] {
                        *r = right;
                    }
                    link(nodes, right)
                }
            }
        }
        match link(&mut parsed, 0) {
            Some(end) if end == parsed.len() => {}
            _ => {
                return Err(Error::Format {
                    line: first_line + lines.len(),
                    msg: "tree node list is truncated or has trailing nodes".into(),
                })
            }
        }
        Self::from_nodes(parsed, n_features, train_stats)
    }
}

/// RMSE and MAE of a residual sequence.
pub fn error_stats(residuals: impl Iterator<Item = f64>) -> ErrorStats {
    let (mut sq, mut abs, mut n) = (0.0, 0.0, 0usize);
    for r in residuals {
        sq += r * r;
        abs += r.abs();
        n += 1;
    }
    if n == 0 {
        return ErrorStats { rmse: 0.0, mae: 0.0, n: 0 };
    }
    ErrorStats {
        rmse: (sq / n as f64).sqrt(),
        mae: abs / n as f64,
        n,
    }
}
