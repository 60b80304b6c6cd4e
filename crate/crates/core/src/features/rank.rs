//! Feature ranking and steering-factor derivation.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::stats::FeatureStats;

/// Statistic used to rank candidate toxic features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankCriterion {
    /// Absolute difference of mean activations between the two subsets.
    MeanAbsDiff,
    /// Absolute difference of activation frequencies between the two subsets.
    FrequencyDiff,
    /// Maximum activation on the toxic subset alone.
    MaxActivation,
}

impl RankCriterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            RankCriterion::MeanAbsDiff => "mean_abs_diff",
            RankCriterion::FrequencyDiff => "frequency_diff",
            RankCriterion::MaxActivation => "max_activation",
        }
    }
}

impl FromStr for RankCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_abs_diff" => Ok(RankCriterion::MeanAbsDiff),
            "frequency_diff" => Ok(RankCriterion::FrequencyDiff),
            "max_activation" => Ok(RankCriterion::MaxActivation),
            other => Err(Error::Config(format!(
                "unknown ranking criterion `{other}` (expected mean_abs_diff, frequency_diff, or max_activation)"
            ))),
        }
    }
}

/// The ranked toxic feature set for one layer, best first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSet {
    pub layer: usize,
    pub features: Vec<usize>,
    pub criterion: RankCriterion,
    /// Ranking statistic per selected feature, aligned with `features`.
    pub scores: Vec<f64>,
}

impl FeatureSet {
    pub fn validate(&self, hidden_width: usize) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Validation("feature set is empty".to_string()));
        }
        if self.features.len() != self.scores.len() {
            return Err(Error::Validation(
                "feature/score lengths differ".to_string(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &f in &self.features {
            if f >= hidden_width {
                return Err(Error::FeatureIndex {
                    index: f,
                    width: hidden_width,
                });
            }
            if !seen.insert(f) {
                return Err(Error::Validation(format!("duplicate feature index {f}")));
            }
        }
        Ok(())
    }
}

/// Rank features by the chosen criterion, descending, ties broken by lower
/// feature index, and return the top `k` with their scores.
pub fn rank_features(
    toxic: &FeatureStats,
    nontoxic: &FeatureStats,
    criterion: RankCriterion,
    k: usize,
    layer: usize,
) -> Result<FeatureSet> {
    let n = toxic.hidden_width();
    if nontoxic.hidden_width() != n {
        return Err(Error::shape(
            "rank_features",
            n.to_string(),
            nontoxic.hidden_width().to_string(),
        ));
    }
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".to_string()));
    }
    if k > n {
        return Err(Error::Validation(format!(
            "k = {k} exceeds hidden width {n}"
        )));
    }

    let score = |f: usize| -> f64 {
        match criterion {
            RankCriterion::MeanAbsDiff => {
                (toxic.mean_activation[f] - nontoxic.mean_activation[f]).abs()
            }
            RankCriterion::FrequencyDiff => {
                (toxic.activation_frequency[f] - nontoxic.activation_frequency[f]).abs()
            }
            RankCriterion::MaxActivation => toxic.max_activation[f] as f64,
        }
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        score(b)
            .partial_cmp(&score(a))
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    let scores = order.iter().map(|&f| score(f)).collect();

    Ok(FeatureSet {
        layer,
        features: order,
        criterion,
        scores,
    })
}

/// Per-feature steering strength and conditional threshold, both scaled by
/// the feature's maximum observed activation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteeringFactors {
    /// `alpha_f = strength * max_activation[f]`
    pub alpha: BTreeMap<usize, f32>,
    /// `theta_f = threshold_fraction * max_activation[f]`
    pub theta: BTreeMap<usize, f32>,
    pub strength: f32,
    pub threshold_fraction: f32,
}

impl SteeringFactors {
    pub fn alpha_for(&self, feature: usize) -> Result<f32> {
        self.alpha.get(&feature).copied().ok_or_else(|| {
            Error::Config(format!("no steering factor alpha for feature {feature}"))
        })
    }

    pub fn theta_for(&self, feature: usize) -> Result<f32> {
        self.theta.get(&feature).copied().ok_or_else(|| {
            Error::Config(format!("no threshold theta for feature {feature}"))
        })
    }
}

/// Derive alpha/theta for every feature in the set from its max activation.
///
/// A feature that never activated has no scale to steer by; that is an error
/// rather than a silent zero.
pub fn compute_factors(
    stats: &FeatureStats,
    features: &FeatureSet,
    strength: f32,
    threshold_fraction: f32,
) -> Result<SteeringFactors> {
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::Validation(format!(
            "strength must be finite and >= 0, got {strength}"
        )));
    }
    if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
        return Err(Error::Validation(format!(
            "threshold_fraction must be in (0, 1], got {threshold_fraction}"
        )));
    }
    features.validate(stats.hidden_width())?;

    let mut alpha = BTreeMap::new();
    let mut theta = BTreeMap::new();
    for &f in &features.features {
        let max = stats.max_activation[f];
        if max <= 0.0 {
            return Err(Error::DegenerateFeature { feature: f });
        }
        alpha.insert(f, strength * max);
        theta.insert(f, threshold_fraction * max);
    }
    Ok(SteeringFactors {
        alpha,
        theta,
        strength,
        threshold_fraction,
    })
}
