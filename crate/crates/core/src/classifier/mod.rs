//! Boosted decision-tree classifier for candidate feature vectors.

mod boost;
mod impurity;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use boost::{rusboost, stage_weight, BoostConfig, Ensemble, RoundTrace, MAX_RETRIES, MIN_ERROR};
pub use impurity::{deviance, gini, twoing, Criterion};
pub use tree::{train_tree, Dataset, DecisionTree, Node};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureVector, NormStats, NUM_FEATURES};

pub const MODEL_MAGIC: &str = "madet-model";
pub const MODEL_VERSION: u32 = 1;

/// A trained classifier together with the feature normalization it expects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedEnsemble {
    pub magic: String,
    pub version: u32,
    pub config: BoostConfig,
    /// Feature indices the trees may split on.
    pub features: Vec<usize>,
    pub norm_stats: NormStats,
    pub ensemble: Ensemble,
}

impl TrainedEnsemble {
    /// Fits normalization on `matrix` and boosts on its labelled rows.
    pub fn train(matrix: &FeatureMatrix, features: &[usize], cfg: &BoostConfig) -> Result<(Self, Vec<RoundTrace>)> {
        let labels = matrix.labels.clone().ok_or_else(|| Error::parse("training features carry no labels"))?;
        if matrix.is_empty() {
            return Err(Error::EmptyData);
        }
        if features.is_empty() || features.iter().any(|&f| f >= NUM_FEATURES) {
            return Err(Error::config("feature subset must be non-empty and within range"));
        }
        let (normalized, stats) = matrix.normalize()?;
        let data = Dataset::from_rows(&normalized.rows.iter().map(|r| r.0).collect::<Vec<_>>(), labels)?;
        let (ensemble, trace) = rusboost(&data, features, cfg)?;
        Ok((
            Self {
                magic: MODEL_MAGIC.into(),
                version: MODEL_VERSION,
                config: cfg.clone(),
                features: features.to_vec(),
                norm_stats: stats,
                ensemble,
            },
            trace,
        ))
    }

    /// Vote `H` in `[-1, 1]` for a raw (unnormalized) feature vector.
    pub fn decision(&self, raw: &FeatureVector) -> f64 {
        let z = self.norm_stats.apply(raw);
        self.ensemble.decision(&z.0).expect("29 features")
    }

    /// `(H + 1) / 2`, in `[0, 1]`.
    pub fn score(&self, raw: &FeatureVector) -> f64 {
        (self.decision(raw) + 1.0) / 2.0
    }

    pub fn feature_importance(&self) -> Vec<f64> {
        self.ensemble.feature_importance()
    }

    pub fn validate(&self) -> Result<()> {
        if self.magic != MODEL_MAGIC {
            return Err(Error::Model(format!("bad magic `{}`", self.magic)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Model(format!("model version {} is not supported (expected {MODEL_VERSION})", self.version)));
        }
        if self.ensemble.n_features != NUM_FEATURES {
            return Err(Error::Model(format!("model has {} features, expected {NUM_FEATURES}", self.ensemble.n_features)));
        }
        self.norm_stats.validate()?;
        self.config.validate().map_err(|e| Error::Model(e.to_string()))?;
        self.ensemble.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Unreadable { path: path.to_owned(), reason: e.to_string() })?;
        Self::from_json(&text)
    }
}
