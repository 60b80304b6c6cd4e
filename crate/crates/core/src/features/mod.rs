//! Toxic-feature identification: per-feature activation statistics over
//! paired corpora, ranking criteria, and derived steering factors.

mod corpus;
mod rank;
mod stats;

pub use corpus::{load_paired_corpus, load_prompts, save_paired_corpus, SentencePair};
pub use rank::{compute_factors, rank_features, FeatureSet, RankCriterion, SteeringFactors};
pub use stats::{accumulate_stats, FeatureStats, StatsAccumulator};
