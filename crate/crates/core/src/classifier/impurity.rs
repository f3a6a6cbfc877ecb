//! Split criteria.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gini,
    Deviance,
    Twoing,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Gini, Criterion::Deviance, Criterion::Twoing];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Gini => "gini",
            Criterion::Deviance => "deviance",
            Criterion::Twoing => "twoing",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Unknown { kind: "criterion", name: s.to_owned(), options: "gini, deviance, twoing".into() })
    }
}

/// `1 - sum p^2`.
pub fn gini(p: &[f64]) -> f64 {
    1.0 - p.iter().map(|v| v * v).sum::<f64>()
}

/// `-sum p ln p`, with `0 ln 0 = 0`.
pub fn deviance(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// `P(L) P(R) (sum |L(i) - R(i)|)^2` for child class fractions `left`,
/// `right` and child probabilities `pl`, `pr`. Larger is a better split.
pub fn twoing(pl: f64, pr: f64, left: &[f64], right: &[f64]) -> f64 {
    let s: f64 = left.iter().zip(right).map(|(l, r)| (l - r).abs()).sum();
    pl * pr * s * s
}

/// Weighted two-class class totals of a node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct ClassWeights {
    pub pos: f64,
    pub neg: f64,
}

impl ClassWeights {
    #[inline]
    pub fn total(self) -> f64 {
        self.pos + self.neg
    }

    #[inline]
    fn fractions(self) -> [f64; 2] {
        let t = self.total();
        if t > 0.0 {
            [self.pos / t, self.neg / t]
        } else {
            [0.0, 0.0]
        }
    }

    #[inline]
    pub fn is_pure(self) -> bool {
        self.pos <= 0.0 || self.neg <= 0.0
    }

    /// Weight times impurity; only meaningful for node criteria.
    #[inline]
    pub fn risk(self, c: Criterion) -> f64 {
        match c {
            Criterion::Gini => self.total() * gini(&self.fractions()),
            Criterion::Deviance => self.total() * deviance(&self.fractions()),
            Criterion::Twoing => 0.0,
        }
    }
}

/// Reduction in risk from splitting `parent` into `left` and the rest.
#[inline]
pub(crate) fn split_gain(c: Criterion, parent: ClassWeights, left: ClassWeights) -> f64 {
    let right = ClassWeights { pos: parent.pos - left.pos, neg: parent.neg - left.neg };
    match c {
        Criterion::Gini | Criterion::Deviance => parent.risk(c) - left.risk(c) - right.risk(c),
        Criterion::Twoing => {
            let t = parent.total();
            parent.total() * twoing(left.total() / t, right.total() / t, &left.fractions(), &right.fractions())
        }
    }
}
