//! Boosting with random undersampling of the majority class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::impurity::Criterion;
use super::tree::{train_tree, Dataset, DecisionTree, Node};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub num_rounds: usize,
    pub max_splits: usize,
    pub learning_rate: f64,
    pub split_criterion: Criterion,
    pub rng_seed: u64,
    /// Majority rows kept per minority row in each round; `None` disables
    /// undersampling.
    pub target_class_ratio: Option<f64>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            num_rounds: 1000,
            max_splits: 100,
            learning_rate: 0.5,
            split_criterion: Criterion::Gini,
            rng_seed: 0,
            target_class_ratio: Some(1.0),
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_rounds == 0 || self.max_splits == 0 {
            return Err(Error::config("num_rounds and max_splits must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config("learning_rate must be in (0, 1]"));
        }
        if let Some(r) = self.target_class_ratio {
            if !(r > 0.0) {
                return Err(Error::config("target_class_ratio must be positive"));
            }
        }
        Ok(())
    }
}

/// Error rates below this are clamped before taking the log-odds.
pub const MIN_ERROR: f64 = 1e-10;
/// Redraws allowed for a round whose learner is no better than chance.
pub const MAX_RETRIES: usize = 10;

/// `1/2 ln((1 - e) / e)` with `e` clamped to `[MIN_ERROR, 1 - MIN_ERROR]`.
pub fn stage_weight(error: f64) -> f64 {
    let e = error.clamp(MIN_ERROR, 1.0 - MIN_ERROR);
    0.5 * ((1.0 - e) / e).ln()
}

/// Weighted majority vote of trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
    pub alphas: Vec<f64>,
}

impl Ensemble {
    /// `sum a h(x) / sum a`, in `[-1, 1]`; 0 when every weight is 0.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (t, &a) in self.trees.iter().zip(&self.alphas) {
            num += a * t.predict(x) as f64;
            den += a;
        }
        Ok(if den > 0.0 { num / den } else { 0.0 })
    }

    /// Per tree, summed split gains per feature over its branch count;
    /// accumulated over trees.
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for t in &self.trees {
            let branches = t.split_count();
            if branches == 0 {
                continue;
            }
            for n in &t.nodes {
                if let Node::Branch { feature, gain, .. } = *n {
                    out[feature] += gain / branches as f64;
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.len() != self.alphas.len() {
            return Err(Error::Model("tree and weight counts differ".into()));
        }
        if self.alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::Model("non-finite stage weight".into()));
        }
        self.trees.iter().try_for_each(|t| t.validate(self.n_features))
    }
}

/// What happened in one boosting round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace {
    pub error: f64,
    pub alpha: f64,
    pub retries: usize,
    pub subset_size: usize,
    /// Sum of sample weights after the update.
    pub weight_sum: f64,
}

/// Efraimidis-Spirakis: the `k` items with the largest `ln(u) / w` keys.
fn weighted_sample(items: &[usize], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = items
        .iter()
        .map(|&i| {
            let u: f64 = 1.0 - rng.gen::<f64>();
            let key = if weights[i] > 0.0 { u.ln() / weights[i] } else { f64::NEG_INFINITY };
            (key, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Trains on `data` splitting only on `features`.
pub fn rusboost(data: &Dataset, features: &[usize], cfg: &BoostConfig) -> Result<(Ensemble, Vec<RoundTrace>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let labels = data.labels();
    let positives: Vec<usize> = (0..data.len()).filter(|&i| labels[i] > 0).collect();
    let negatives: Vec<usize> = (0..data.len()).filter(|&i| labels[i] < 0).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::SingleClass);
    }
    let (minority, majority) = if positives.len() < negatives.len() { (positives, negatives) } else { (negatives, positives) };
    let keep = cfg.target_class_ratio.map(|r| ((r * minority.len() as f64).round() as usize).clamp(1, majority.len()));

    let m = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut w = vec![1.0 / m as f64; m];
    let all: Vec<usize> = (0..m).collect();
    let mut trees = Vec::with_capacity(cfg.num_rounds);
    let mut alphas = Vec::with_capacity(cfg.num_rounds);
    let mut trace = Vec::with_capacity(cfg.num_rounds);

    for _ in 0..cfg.num_rounds {
        let mut retries = 0;
        let (tree, preds, error, subset_size) = loop {
            let (tree, subset_size) = match keep {
                None => (train_tree(data, &all, &w, features, cfg.max_splits, cfg.split_criterion)?, m),
                Some(k) => {
                    let mut rows = minority.clone();
                    rows.extend(weighted_sample(&majority, &w, k, &mut rng));
                    rows.sort_unstable();
                    let total: f64 = rows.iter().map(|&i| w[i]).sum();
                    let mut sub = vec![0.0; m];
                    for &i in &rows {
                        sub[i] = w[i] / total;
                    }
                    (train_tree(data, &rows, &sub, features, cfg.max_splits, cfg.split_criterion)?, rows.len())
                }
            };
            let preds: Vec<i8> = (0..m).map(|i| tree.predict(data.row(i))).collect();
            let error: f64 = (0..m).filter(|&i| preds[i] != labels[i]).map(|i| w[i]).sum();
            if error < 0.5 || retries >= MAX_RETRIES || keep.is_none() {
                break (tree, preds, error, subset_size);
            }
            retries += 1;
        };
        let alpha = if error >= 0.5 { 0.0 } else { cfg.learning_rate * stage_weight(error) };
        for i in 0..m {
            w[i] *= (-alpha * labels[i] as f64 * preds[i] as f64).exp();
        }
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        trace.push(RoundTrace { error, alpha, retries, subset_size, weight_sum: w.iter().sum() });
        trees.push(tree);
        alphas.push(alpha);
    }
    Ok((Ensemble { n_features: data.n_features(), trees, alphas }, trace))
}
