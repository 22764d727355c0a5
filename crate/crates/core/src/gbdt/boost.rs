use serde::{Deserialize, Serialize};

use crate::catalog::ClassId;
use crate::error::{Error, Result};

/// Log-prior floor for classes that never occur in training data.
const MIN_BASE_PROB: f64 = 1e-6;
/// Splits must reduce the squared error by more than this.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// Recorded for provenance; exact greedy training draws no random numbers.
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self { n_rounds: 200, max_depth: 3, learning_rate: 0.1, min_leaf: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

/// One-vs-rest boosted regression trees with a softmax link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub n_features: usize,
    pub class_order: Vec<ClassId>,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub base_scores: Vec<f64>,
    /// `trees[c]` is the ensemble for class `class_order[c]`.
    pub trees: Vec<Vec<Tree>>,
}

impl GbdtModel {
    pub fn validate(&self) -> Result<()> {
        let k = self.class_order.len();
        if k == 0 || self.base_scores.len() != k || self.trees.len() != k {
            return Err(Error::Data("gbdt model class dimensions are inconsistent".into()));
        }
        for t in self.trees.iter().flatten() {
            if t.nodes.is_empty() {
                return Err(Error::Data("empty tree".into()));
            }
            for n in &t.nodes {
                if let Node::Split { feature, left, right, .. } = *n {
                    if feature >= self.n_features || left >= t.nodes.len() || right >= t.nodes.len() {
                        return Err(Error::Data("tree node index out of range".into()));
                    }
                }
            }
            if t.depth() > self.max_depth {
                return Err(Error::Data("tree deeper than max_depth".into()));
            }
        }
        Ok(())
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::LengthMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self
            .base_scores
            .iter()
            .zip(&self.trees)
            .map(|(b, ts)| b + self.learning_rate * ts.iter().map(|t| t.predict(x)).sum::<f64>())
            .collect())
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Class probabilities in `model.class_order`.
pub fn predict_gbdt(model: &GbdtModel, x: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(&model.scores(x)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean multiclass log-loss before the first round and after each round.
    pub loss: Vec<f64>,
}

fn mean_log_loss(scores: &[Vec<f64>], y: &[usize]) -> f64 {
    scores.iter().zip(y).map(|(s, &c)| -softmax(s)[c].max(f64::MIN_POSITIVE).ln()).sum::<f64>() / y.len() as f64
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    /// Row indices sorted by each feature's value.
    sorted: &'a [Vec<usize>],
    max_depth: usize,
    min_leaf: usize,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn build(&self, residual: &[f64]) -> Tree {
        let rows: Vec<usize> = (0..self.x.len()).collect();
        let mut nodes = Vec::new();
        let mut in_node = vec![false; self.x.len()];
        self.grow(&rows, residual, 0, &mut nodes, &mut in_node);
        Tree { nodes }
    }

    fn grow(&self, rows: &[usize], residual: &[f64], depth: usize, nodes: &mut Vec<Node>, mask: &mut [bool]) -> usize {
        let id = nodes.len();
        let sum: f64 = rows.iter().map(|&i| residual[i]).sum();
        nodes.push(Node::Leaf { value: sum / rows.len() as f64 });
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(rows, residual, sum, mask) else { return id };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let left = self.grow(&left_rows, residual, depth + 1, nodes, mask);
        let right = self.grow(&right_rows, residual, depth + 1, nodes, mask);
        nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        id
    }

    /// Exact greedy search. Ties keep the lowest feature, then the lowest
    /// threshold, because candidates are visited in that order and only a
    /// strictly larger gain replaces the incumbent.
    fn best_split(&self, rows: &[usize], residual: &[f64], sum: f64, mask: &mut [bool]) -> Option<BestSplit> {
        for &i in rows {
            mask[i] = true;
        }
        let n = rows.len();
        let parent = sum * sum / n as f64;
        let mut best: Option<BestSplit> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let mut left_n = 0usize;
            let mut left_sum = 0.0;
            let mut prev: Option<f64> = None;
            for &i in order.iter().filter(|&&i| mask[i]) {
                let v = self.x[i][f];
                if let Some(pv) = prev {
                    if v > pv && left_n >= self.min_leaf && n - left_n >= self.min_leaf {
                        let right_sum = sum - left_sum;
                        let gain = left_sum * left_sum / left_n as f64
                            + right_sum * right_sum / (n - left_n) as f64
                            - parent;
                        if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                            let mid = 0.5 * (pv + v);
                            let threshold = if mid < v { mid } else { pv };
                            best = Some(BestSplit { gain, feature: f, threshold });
                        }
                    }
                }
                left_n += 1;
                left_sum += residual[i];
                prev = Some(v);
            }
        }
        for &i in rows {
            mask[i] = false;
        }
        best
    }
}

/// Trains one ensemble per class on the softmax log-loss gradient
/// `y_c - p_c`, fitting a depth-limited least-squares tree per class and
/// round. Leaves hold mean residuals.
pub fn train_gbdt(
    x: &[Vec<f64>],
    y: &[usize],
    class_order: Vec<ClassId>,
    params: &GbdtParams,
) -> Result<(GbdtModel, TrainHistory)> {
    if x.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), got: y.len() });
    }
    let k = class_order.len();
    if k == 0 {
        return Err(Error::Empty("class_order"));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= k) {
        return Err(Error::Data(format!("label index {bad} out of range for {k} classes")));
    }
    let d = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::LengthMismatch { expected: d, got: row.len() });
    }
    if !(params.learning_rate >= 0.0) || params.min_leaf < 1 {
        return Err(Error::Config("learning_rate must be >= 0 and min_leaf >= 1".into()));
    }

    let n = x.len();
    let mut counts = vec![0usize; k];
    for &c in y {
        counts[c] += 1;
    }
    let base_scores: Vec<f64> =
        counts.iter().map(|&c| (c as f64 / n as f64).max(MIN_BASE_PROB).ln()).collect();
    let mut model = GbdtModel {
        n_features: d,
        class_order,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        base_scores: base_scores.clone(),
        trees: vec![Vec::new(); k],
    };
    let mut scores: Vec<Vec<f64>> = vec![base_scores; n];
    let mut history = TrainHistory { loss: vec![mean_log_loss(&scores, y)] };
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Ok((model, history));
    }

    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let builder = TreeBuilder { x, sorted: &sorted, max_depth: params.max_depth, min_leaf: params.min_leaf };

    let mut residual = vec![0.0; n];
    for _ in 0..params.n_rounds {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut round = Vec::with_capacity(k);
        for c in 0..k {
            for i in 0..n {
                residual[i] = f64::from(u8::from(y[i] == c)) - probs[i][c];
            }
            round.push(builder.build(&residual));
        }
        for (c, tree) in round.into_iter().enumerate() {
            for (s, row) in scores.iter_mut().zip(x) {
                s[c] += params.learning_rate * tree.predict(row);
            }
            model.trees[c].push(tree);
        }
        history.loss.push(mean_log_loss(&scores, y));
    }
    Ok((model, history))
}
