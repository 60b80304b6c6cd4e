//! Streaming per-feature activation statistics.
//!
//! Aggregation is single-pass: running f64 sums for means, exact running
//! maxima, and counts of strictly positive activations for frequency. Partial
//! accumulators merge associatively, so a corpus may be split across workers
//! and re-batched freely without changing the result beyond f64 summation
//! order.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sae::{ActivationBatch, SparseAutoencoder};

/// Finalized per-feature aggregates over one corpus subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureStats {
    /// Average latent value per feature over all counted tokens.
    pub mean_activation: Vec<f64>,
    /// Fraction of counted tokens with a strictly positive latent.
    pub activation_frequency: Vec<f64>,
    /// Largest latent value observed per feature.
    pub max_activation: Vec<f32>,
    /// Tokens aggregated.
    pub token_count: u64,
}

impl FeatureStats {
    pub fn hidden_width(&self) -> usize {
        self.mean_activation.len()
    }

    /// Internal-consistency checks: frequency in [0,1], max >= mean >= 0.
    pub fn validate(&self) -> Result<()> {
        if self.token_count == 0 {
            return Err(Error::Validation("stats over zero tokens".to_string()));
        }
        for f in 0..self.hidden_width() {
            let (mean, freq, max) = (
                self.mean_activation[f],
                self.activation_frequency[f],
                self.max_activation[f] as f64,
            );
            if !(0.0..=1.0).contains(&freq) {
                return Err(Error::Validation(format!("feature {f}: frequency {freq} outside [0,1]")));
            }
            if mean < 0.0 || max + 1e-9 < mean {
                return Err(Error::Validation(format!(
                    "feature {f}: expected max >= mean >= 0, got mean {mean}, max {max}"
                )));
            }
        }
        Ok(())
    }
}

/// Mergeable partial aggregate. `update_*` calls encode tokens through the
/// SAE and fold them in; [`finalize`](Self::finalize) produces [`FeatureStats`].
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    sum: Vec<f64>,
    active_count: Vec<u64>,
    max: Vec<f32>,
    token_count: u64,
}

impl StatsAccumulator {
    pub fn new(hidden_width: usize) -> Self {
        StatsAccumulator {
            sum: vec![0.0; hidden_width],
            active_count: vec![0; hidden_width],
            max: vec![0.0; hidden_width],
            token_count: 0,
        }
    }

    pub fn token_count(&self) -> u64 {
        self.token_count
    }

    /// Fold in every non-padding token of a batch.
    pub fn update_batch(&mut self, sae: &SparseAutoencoder, batch: &ActivationBatch) -> Result<()> {
        self.update_batch_filtered(sae, batch, None)
    }

    /// Fold in non-padding tokens for which `include[(i, j)]` is true.
    /// Used to drop special tokens (BOS/EOS/pad) from statistics.
    pub fn update_batch_masked(
        &mut self,
        sae: &SparseAutoencoder,
        batch: &ActivationBatch,
        include: &Array2<bool>,
    ) -> Result<()> {
        let (b, s, _) = batch.data.dim();
        if include.dim() != (b, s) {
            return Err(Error::shape(
                "stats include mask",
                format!("{b}x{s}"),
                format!("{}x{}", include.dim().0, include.dim().1),
            ));
        }
        self.update_batch_filtered(sae, batch, Some(include))
    }

    fn update_batch_filtered(
        &mut self,
        sae: &SparseAutoencoder,
        batch: &ActivationBatch,
        include: Option<&Array2<bool>>,
    ) -> Result<()> {
        if self.sum.len() != sae.hidden_width() {
            return Err(Error::shape(
                "stats accumulator",
                self.sum.len().to_string(),
                sae.hidden_width().to_string(),
            ));
        }
        let (b, _, _) = batch.data.dim();
        for i in 0..b {
            for j in 0..batch.sequence_lengths[i] {
                if let Some(mask) = include {
                    if !mask[(i, j)] {
                        continue;
                    }
                }
                let row = batch.data.index_axis(ndarray::Axis(0), i);
                let h = sae.encode(&row.row(j))?;
                self.token_count += 1;
                for (f, &v) in h.values().iter().enumerate() {
                    self.sum[f] += v as f64;
                    if v > 0.0 {
                        self.active_count[f] += 1;
                    }
                    if v > self.max[f] {
                        self.max[f] = v;
                    }
                }
            }
        }
        Ok(())
    }

    /// Associative, commutative combination of partial aggregates.
    /// Exact for counts and maxima; means drift only with f64 summation order.
    pub fn merge(&mut self, other: &StatsAccumulator) -> Result<()> {
        if self.sum.len() != other.sum.len() {
            return Err(Error::shape(
                "stats merge",
                self.sum.len().to_string(),
                other.sum.len().to_string(),
            ));
        }
        for f in 0..self.sum.len() {
            self.sum[f] += other.sum[f];
            self.active_count[f] += other.active_count[f];
            if other.max[f] > self.max[f] {
                self.max[f] = other.max[f];
            }
        }
        self.token_count += other.token_count;
        Ok(())
    }

    pub fn finalize(&self) -> Result<FeatureStats> {
        if self.token_count == 0 {
            return Err(Error::Validation(
                "cannot finalize statistics over an empty corpus".to_string(),
            ));
        }
        let n = self.token_count as f64;
        let stats = FeatureStats {
            mean_activation: self.sum.iter().map(|s| s / n).collect(),
            activation_frequency: self.active_count.iter().map(|c| *c as f64 / n).collect(),
            max_activation: self.max.clone(),
            token_count: self.token_count,
        };
        stats.validate()?;
        Ok(stats)
    }
}

/// Single-pass aggregation over a stream of activation batches.
pub fn accumulate_stats<'a, I>(sae: &SparseAutoencoder, batches: I) -> Result<FeatureStats>
where
    I: IntoIterator<Item = &'a ActivationBatch>,
{
    let mut acc = StatsAccumulator::new(sae.hidden_width());
    for batch in batches {
        acc.update_batch(sae, batch)?;
    }
    acc.finalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sae::{ActivationFn, SparseAutoencoder};
    use ndarray::{Array1, Array2, Array3, Axis};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Encoder picks coordinates straight through (first d features mirror
    /// the input), so latents are directly controllable from residuals.
    fn passthrough_sae(n: usize, d: usize) -> SparseAutoencoder {
        let mut enc = Array2::zeros((n, d));
        for k in 0..d {
            enc[(k, k)] = 1.0;
        }
        SparseAutoencoder::new(
            enc,
            Array1::zeros(n),
            Array2::zeros((d, n)),
            Array1::zeros(d),
            ActivationFn::ReLU,
            0,
        )
        .unwrap()
    }

    fn batch_of_rows(rows: &[Vec<f32>]) -> ActivationBatch {
        let d = rows[0].len();
        let mut data = Array3::zeros((1, rows.len(), d));
        for (j, row) in rows.iter().enumerate() {
            data.index_axis_mut(Axis(0), 0)
                .row_mut(j)
                .assign(&Array1::from_vec(row.clone()));
        }
        ActivationBatch::new(data, vec![rows.len()]).unwrap()
    }

    #[test]
    fn one_token_corpus() {
        let sae = passthrough_sae(5, 2);
        let batch = batch_of_rows(&[vec![5.0, 0.0]]);
        let stats = accumulate_stats(&sae, [&batch]).unwrap();
        assert_eq!(stats.token_count, 1);
        assert_eq!(stats.mean_activation[0], 5.0);
        assert_eq!(stats.max_activation[0], 5.0);
        assert_eq!(stats.activation_frequency[0], 1.0);
        for f in 1..5 {
            assert_eq!(stats.mean_activation[f], 0.0);
            assert_eq!(stats.max_activation[f], 0.0);
            assert_eq!(stats.activation_frequency[f], 0.0);
        }
    }

    #[test]
    fn two_token_average() {
        let sae = passthrough_sae(5, 2);
        let batch = batch_of_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]);
        let stats = accumulate_stats(&sae, [&batch]).unwrap();
        assert_eq!(stats.mean_activation[0], 1.0);
        assert_eq!(stats.max_activation[0], 2.0);
        assert_eq!(stats.activation_frequency[0], 0.5);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let sae = passthrough_sae(5, 2);
        let batches: Vec<&ActivationBatch> = vec![];
        assert!(matches!(
            accumulate_stats(&sae, batches),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let sae = passthrough_sae(5, 2);
        let batch = batch_of_rows(&[vec![1.0, 2.0, 3.0]]);
        let mut acc = StatsAccumulator::new(sae.hidden_width());
        assert!(matches!(
            acc.update_batch(&sae, &batch),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn matches_full_materialization_oracle() {
        let mut rng = StdRng::seed_from_u64(42);
        let sae = crate::sae::tests::random_sae(&mut rng, 8, 4, false);
        let tokens: Vec<Vec<f32>> = (0..100)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0f32..2.0)).collect())
            .collect();

        // oracle: materialize every latent, then aggregate directly
        let latents: Vec<Vec<f32>> = tokens
            .iter()
            .map(|t| crate::sae::tests::encode_oracle(&sae, t))
            .collect();
        let n = sae.hidden_width();
        let mut mean = vec![0.0f64; n];
        let mut max = vec![0.0f32; n];
        let mut freq = vec![0.0f64; n];
        for h in &latents {
            for f in 0..n {
                mean[f] += h[f] as f64 / latents.len() as f64;
                max[f] = max[f].max(h[f]);
                if h[f] > 0.0 {
                    freq[f] += 1.0 / latents.len() as f64;
                }
            }
        }

        let batch = batch_of_rows(&tokens);
        let stats = accumulate_stats(&sae, [&batch]).unwrap();
        for f in 0..n {
            assert!((stats.mean_activation[f] - mean[f]).abs() < 1e-5);
            assert!((stats.max_activation[f] - max[f]).abs() < 1e-6);
            assert!((stats.activation_frequency[f] - freq[f]).abs() < 1e-9);
        }
    }

    #[test]
    fn partition_invariant_under_rebatching() {
        let mut rng = StdRng::seed_from_u64(7);
        let sae = crate::sae::tests::random_sae(&mut rng, 8, 4, true);
        let tokens: Vec<Vec<f32>> = (0..60)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0f32..2.0)).collect())
            .collect();

        let whole = accumulate_stats(&sae, [&batch_of_rows(&tokens)]).unwrap();
        for split in [1usize, 7, 13, 30, 59] {
            let (a, b) = tokens.split_at(split);
            let ba = batch_of_rows(a);
            let bb = batch_of_rows(b);
            let parts = accumulate_stats(&sae, [&ba, &bb]).unwrap();
            for f in 0..8 {
                assert!((whole.mean_activation[f] - parts.mean_activation[f]).abs() < 1e-6);
                assert_eq!(whole.max_activation[f], parts.max_activation[f]);
                assert_eq!(whole.activation_frequency[f], parts.activation_frequency[f]);
            }
        }
    }

    #[test]
    fn merge_matches_single_pass() {
        let mut rng = StdRng::seed_from_u64(8);
        let sae = crate::sae::tests::random_sae(&mut rng, 8, 4, false);
        let t1: Vec<Vec<f32>> = (0..20)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let t2: Vec<Vec<f32>> = (0..30)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();

        let mut left = StatsAccumulator::new(8);
        left.update_batch(&sae, &batch_of_rows(&t1)).unwrap();
        let mut right = StatsAccumulator::new(8);
        right.update_batch(&sae, &batch_of_rows(&t2)).unwrap();
        left.merge(&right).unwrap();
        let merged = left.finalize().unwrap();

        let all: Vec<Vec<f32>> = t1.into_iter().chain(t2).collect();
        let single = accumulate_stats(&sae, [&batch_of_rows(&all)]).unwrap();
        assert_eq!(merged.token_count, single.token_count);
        for f in 0..8 {
            assert!((merged.mean_activation[f] - single.mean_activation[f]).abs() < 1e-6);
            assert_eq!(merged.max_activation[f], single.max_activation[f]);
        }
    }

    #[test]
    fn masked_update_skips_excluded_positions() {
        let sae = passthrough_sae(5, 2);
        let batch = batch_of_rows(&[vec![5.0, 0.0], vec![3.0, 0.0], vec![1.0, 0.0]]);
        let mut include = Array2::from_elem((1, 3), true);
        include[(0, 0)] = false; // e.g. a BOS position
        let mut acc = StatsAccumulator::new(5);
        acc.update_batch_masked(&sae, &batch, &include).unwrap();
        let stats = acc.finalize().unwrap();
        assert_eq!(stats.token_count, 2);
        assert_eq!(stats.max_activation[0], 3.0);
        assert_eq!(stats.mean_activation[0], 2.0);
    }
}
