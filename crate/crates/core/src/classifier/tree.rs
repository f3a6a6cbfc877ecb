//! Weighted binary decision trees grown best-first.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::impurity::{split_gain, ClassWeights, Criterion};
use crate::error::{Error, Result};

/// Row-major feature matrix with `+1 / -1` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n_features: usize,
    values: Vec<f64>,
    labels: Vec<i8>,
}

impl Dataset {
    pub fn new(n_features: usize, values: Vec<f64>, labels: Vec<i8>) -> Result<Self> {
        if n_features == 0 || values.len() != n_features * labels.len() {
            return Err(Error::DimensionMismatch { expected: n_features * labels.len(), got: values.len() });
        }
        if labels.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::parse("labels must be +1 or -1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse("non-finite feature value"));
        }
        Ok(Self { n_features, values, labels })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: Vec<i8>) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != n) {
            return Err(Error::parse("ragged feature rows"));
        }
        Self::new(n, rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, f: usize) -> f64 {
        self.values[i * self.n_features + f]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Branch { feature: usize, threshold: f64, left: usize, right: usize, gain: f64 },
    Leaf { class: i8 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> i8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Branch { feature, threshold, left, right, .. } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Branch { .. })).count()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Branch { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Model("empty tree".into()));
        }
        let mut reached = vec![false; self.nodes.len()];
        reached[0] = true;
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                Node::Leaf { class } if class != 1 && class != -1 => return Err(Error::Model(format!("leaf class {class}"))),
                Node::Branch { feature, threshold, left, right, gain } => {
                    if feature >= n_features || !threshold.is_finite() || !gain.is_finite() {
                        return Err(Error::Model(format!("bad branch at node {i}")));
                    }
                    if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(Error::Model(format!("bad child links at node {i}")));
                    }
                    reached[left] = true;
                    reached[right] = true;
                }
                _ => {}
            }
        }
        if reached.iter().any(|r| !r) {
            return Err(Error::Model("unreachable tree node".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Minimum gain, relative to node weight, for a split to count as positive.
const GAIN_TOLERANCE: f64 = 1e-12;
/// Nodes smaller than this search features sequentially.
const PARALLEL_NODE_SIZE: usize = 512;

fn class_weights(data: &Dataset, rows: &[usize], weights: &[f64]) -> ClassWeights {
    let mut cw = ClassWeights::default();
    for &k in rows {
        if data.labels[k] > 0 {
            cw.pos += weights[k];
        } else {
            cw.neg += weights[k];
        }
    }
    cw
}

fn best_split_on(data: &Dataset, rows: &[usize], weights: &[f64], feature: usize, criterion: Criterion, parent: ClassWeights) -> Option<Split> {
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| data.value(a, feature).total_cmp(&data.value(b, feature)));
    let mut left = ClassWeights::default();
    let mut best: Option<Split> = None;
    for w in 0..order.len() - 1 {
        let k = order[w];
        if data.labels[k] > 0 {
            left.pos += weights[k];
        } else {
            left.neg += weights[k];
        }
        let (a, b) = (data.value(k, feature), data.value(order[w + 1], feature));
        if a == b {
            continue;
        }
        let gain = split_gain(criterion, parent, left);
        if best.is_none_or(|s| gain > s.gain) {
            let mid = 0.5 * (a + b);
            let threshold = if mid > a { mid } else { b };
            best = Some(Split { feature, threshold, gain });
        }
    }
    best
}

fn best_split(data: &Dataset, rows: &[usize], weights: &[f64], features: &[usize], criterion: Criterion) -> Option<Split> {
    let parent = class_weights(data, rows, weights);
    if rows.len() < 2 || parent.is_pure() {
        return None;
    }
    let search = |&f: &usize| best_split_on(data, rows, weights, f, criterion, parent);
    let found: Vec<Option<Split>> = if rows.len() >= PARALLEL_NODE_SIZE {
        features.par_iter().map(search).collect()
    } else {
        features.iter().map(search).collect()
    };
    let mut best: Option<Split> = None;
    for s in found.into_iter().flatten() {
        if best.is_none_or(|b| s.gain > b.gain) {
            best = Some(s);
        }
    }
    best.filter(|s| s.gain > GAIN_TOLERANCE * parent.total())
}

fn leaf_class(data: &Dataset, rows: &[usize], weights: &[f64]) -> i8 {
    let cw = class_weights(data, rows, weights);
    if cw.pos >= cw.neg {
        1
    } else {
        -1
    }
}

/// Grows a tree on `rows` of `data` with per-row `weights` (indexed like
/// `data`), splitting only on `features`. The open leaf with the largest
/// gain is split first, until `max_splits` branches exist or no leaf has a
/// positive-gain split.
pub fn train_tree(data: &Dataset, rows: &[usize], weights: &[f64], features: &[usize], max_splits: usize, criterion: Criterion) -> Result<DecisionTree> {
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    if weights.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: weights.len() });
    }
    if features.iter().any(|&f| f >= data.n_features) {
        return Err(Error::config("feature index out of range"));
    }
    let mut nodes = vec![Node::Leaf { class: leaf_class(data, rows, weights) }];
    // Open leaves: (node index, rows, best split).
    let mut open: Vec<(usize, Vec<usize>, Split)> = Vec::new();
    if let Some(s) = best_split(data, rows, weights, features, criterion) {
        open.push((0, rows.to_vec(), s));
    }
    let mut splits = 0;
    while splits < max_splits && !open.is_empty() {
        let pick = (0..open.len()).fold(0, |b, i| if open[i].2.gain > open[b].2.gain { i } else { b });
        let (node, node_rows, s) = open.remove(pick);
        let (l, r): (Vec<usize>, Vec<usize>) = node_rows.iter().partition(|&&k| data.value(k, s.feature) < s.threshold);
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { class: leaf_class(data, &l, weights) });
        nodes.push(Node::Leaf { class: leaf_class(data, &r, weights) });
        nodes[node] = Node::Branch { feature: s.feature, threshold: s.threshold, left: li, right: ri, gain: s.gain };
        splits += 1;
        for (idx, part) in [(li, l), (ri, r)] {
            if let Some(cs) = best_split(data, &part, weights, features, criterion) {
                open.push((idx, part, cs));
            }
        }
    }
    Ok(DecisionTree { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn separable_stump() {
        let rows: Vec<[f64; 1]> = (0..10).map(|i| [i as f64]).collect();
        let labels = (0..10).map(|i| if i < 4 { -1 } else { 1 }).collect();
        let d = Dataset::from_rows(&rows, labels).unwrap();
        let idx: Vec<usize> = (0..10).collect();
        let t = train_tree(&d, &idx, &uniform(10), &[0], 1, Criterion::Gini).unwrap();
        assert_eq!(t.split_count(), 1);
        match t.nodes[0] {
            Node::Branch { threshold, .. } => assert_eq!(threshold, 3.5),
            _ => panic!("expected a split"),
        }
        assert!(idx.iter().all(|&i| t.predict(d.row(i)) == d.labels()[i]));
    }

    #[test]
    fn single_class_gives_leaf() {
        let rows: Vec<[f64; 2]> = (0..5).map(|i| [i as f64, 1.0]).collect();
        let d = Dataset::from_rows(&rows, vec![-1; 5]).unwrap();
        let t = train_tree(&d, &[0, 1, 2, 3, 4], &uniform(5), &[0, 1], 10, Criterion::Deviance).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { class: -1 }]);
    }

    #[test]
    fn xor_three_splits() {
        // Unequal quadrant sizes give the greedy search a non-zero first gain.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (x, y, n) in [(0.0, 0.0, 3), (1.0, 1.0, 1), (0.0, 1.0, 2), (1.0, 0.0, 2)] {
            for _ in 0..n {
                rows.push([x, y]);
                labels.push(if (x > 0.5) != (y > 0.5) { 1 } else { -1 });
            }
        }
        let d = Dataset::from_rows(&rows, labels).unwrap();
        let idx: Vec<usize> = (0..d.len()).collect();
        for c in Criterion::ALL {
            let t = train_tree(&d, &idx, &uniform(d.len()), &[0, 1], 3, c).unwrap();
            assert!(t.split_count() <= 3);
            assert!(idx.iter().all(|&i| t.predict(d.row(i)) == d.labels()[i]), "{c:?}");
        }
    }

    #[test]
    fn respects_split_budget_and_features() {
        let rows: Vec<[f64; 3]> = (0..50).map(|i| [(i * 7 % 13) as f64, (i % 5) as f64, i as f64]).collect();
        let labels = (0..50).map(|i| if (i * 7 % 13) % 2 == 0 { 1 } else { -1 }).collect();
        let d = Dataset::from_rows(&rows, labels).unwrap();
        let idx: Vec<usize> = (0..50).collect();
        let t = train_tree(&d, &idx, &uniform(50), &[0, 1], 4, Criterion::Gini).unwrap();
        assert!(t.split_count() <= 4);
        assert!(t.max_feature().unwrap() <= 1);
        t.validate(3).unwrap();
    }

    #[test]
    fn errors() {
        let d = Dataset::from_rows(&[[1.0]], vec![1]).unwrap();
        assert!(matches!(train_tree(&d, &[], &[1.0], &[0], 1, Criterion::Gini), Err(Error::EmptyData)));
        assert!(Dataset::from_rows(&[[1.0]], vec![0]).is_err());
    }
}
