//! Training loop: seeded shuffling, noise augmentation, energy-score
//! loss, reverse-mode gradients and Adam updates.
//!
//! Within a step the per-item losses and sample gradients are computed
//! in parallel over disjoint row blocks and reduced with a fixed
//! pairwise tree, so results are bit-identical regardless of worker
//! count.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compute::{AdamConfig, AdamState, DenseMatrix, GradientTape};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss;
use crate::mathx;
use crate::model::{init_params, ModelConfig, ModelParams};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_epoch: usize,
    /// Minibatch size before augmentation.
    pub b_batch: usize,
    /// Ensemble copies per input; the effective minibatch is
    /// b_batch × nb rows.
    pub nb: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_shuffle")]
    pub shuffle: bool,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_shuffle() -> bool {
    true
}

impl TrainConfig {
    pub fn new(n_epoch: usize, b_batch: usize, nb: usize) -> Self {
        Self {
            n_epoch,
            b_batch,
            nb,
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            seed: 0,
            shuffle: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_epoch == 0 || self.b_batch == 0 || self.nb == 0 {
            return Err(Error::Usage(format!(
                "n_epoch, b_batch and nb must all be >= 1 (got {}, {}, {})",
                self.n_epoch, self.b_batch, self.nb
            )));
        }
        self.adam().validate()
    }
}

/// Per-epoch mean training loss and wall time, plus the number of
/// gradient updates performed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub steps: usize,
}

impl TrainHistory {
    /// CSV with one row per epoch: epoch, loss, seconds.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "loss", "seconds"])?;
        for (e, (l, s)) in self.epoch_loss.iter().zip(&self.epoch_seconds).enumerate() {
            w.write_record(&[e.to_string(), format!("{l}"), format!("{s}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A minibatch after noise augmentation: each original input occupies
/// `group_size` consecutive rows, each paired with a fresh uniform
/// noise draw.
#[derive(Debug, Clone)]
pub struct AugmentedBatch {
    pub inputs: DenseMatrix,
    pub noise: DenseMatrix,
    /// Rows per original input (Nb).
    pub group_size: usize,
}

impl AugmentedBatch {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Duplicates every input `nb` times and pairs each copy with an
/// independent draw from U[0,1]^{noise_dim}.
pub fn augment_batch(
    x_rows: &[&[f64]],
    nb: usize,
    noise_dim: usize,
    rng: &mut ChaCha8Rng,
) -> AugmentedBatch {
    let d_x = x_rows.first().map(|r| r.len()).unwrap_or(0);
    let total = x_rows.len() * nb;
    let mut inputs = DenseMatrix::zeros(total, d_x);
    let mut noise = DenseMatrix::zeros(total, noise_dim);
    let mut row = 0usize;
    for x in x_rows {
        for _ in 0..nb {
            inputs.row_mut(row).copy_from_slice(x);
            for v in noise.row_mut(row) {
                *v = rng.gen::<f64>();
            }
            row += 1;
        }
    }
    AugmentedBatch {
        inputs,
        noise,
        group_size: nb,
    }
}

/// Trains a freshly initialized network on `dataset`.
///
/// Each epoch: seeded shuffle, partition into minibatches of
/// `b_batch` (the last partial batch is kept), augmentation, a traced
/// forward pass over all b_batch × nb rows, the mean energy loss over
/// the batch, reverse-mode gradients and one Adam update.
pub fn train(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    model_config.validate()?;
    train_config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Usage("training dataset is empty".into()));
    }
    if dataset.target_dim() != model_config.output_dim {
        return Err(Error::ShapeMismatch(format!(
            "dataset targets are {}-dimensional, model outputs {}",
            dataset.target_dim(),
            model_config.output_dim
        )));
    }
    if dataset.feature_dim() != model_config.feature_dim {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} features, model expects {}",
            dataset.feature_dim(),
            model_config.feature_dim
        )));
    }

    let mut params = init_params(model_config)?;
    let mut adam = AdamState::for_params(&params.param_list());
    let adam_cfg = train_config.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let n = dataset.len();
    let dim = model_config.output_dim;
    let nb = train_config.nb;

    let mut history = TrainHistory {
        epoch_loss: Vec::with_capacity(train_config.n_epoch),
        epoch_seconds: Vec::with_capacity(train_config.n_epoch),
        steps: 0,
    };
    let mut indices: Vec<usize> = (0..n).collect();
    let mut tape = GradientTape::new();

    for epoch in 0..train_config.n_epoch {
        let epoch_start = Instant::now();
        if train_config.shuffle {
            indices.shuffle(&mut rng);
        }
        let mut epoch_loss_sum = 0.0;
        for chunk in indices.chunks(train_config.b_batch) {
            let x_rows: Vec<&[f64]> = chunk.iter().map(|&i| dataset.features.row(i)).collect();
            let aug = augment_batch(&x_rows, nb, model_config.noise_dim, &mut rng);

            tape.reset();
            let out = params.trace_forward(&mut tape, &aug.inputs, &aug.noise)?;
            let mut seed = DenseMatrix::zeros(aug.len(), dim);
            let preds = tape.value(out);

            let inv_b = 1.0 / chunk.len() as f64;
            let item_losses: Vec<f64> = seed
                .data_mut()
                .par_chunks_mut(nb * dim)
                .enumerate()
                .map(|(i, grad_rows)| {
                    let target = dataset.targets.row(chunk[i]);
                    let samples: Vec<&[f64]> =
                        (0..nb).map(|k| preds.row(i * nb + k)).collect();
                    let l = loss::energy_loss(target, &samples)?;
                    loss::energy_loss_grad_into(target, &samples, inv_b, grad_rows)?;
                    Ok(l)
                })
                .collect::<Result<_>>()?;

            let batch_loss = mathx::pairwise_sum(&item_losses);
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: "non-finite minibatch loss".into(),
                });
            }
            epoch_loss_sum += batch_loss;

            let grads = tape.backward(&seed)?;
            adam.step(&adam_cfg, &mut params.param_list_mut(), &grads)
                .map_err(|e| match e {
                    Error::NonFiniteGradient => Error::Diverged {
                        epoch,
                        detail: "non-finite gradient".into(),
                    },
                    other => other,
                })?;
            history.steps += 1;
        }
        // item-weighted mean loss over the epoch
        history.epoch_loss.push(epoch_loss_sum / n as f64);
        history.epoch_seconds.push(epoch_start.elapsed().as_secs_f64());
    }
    Ok((params, history))
}

/// Seeded disjoint, exhaustive train/test split.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Usage(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Usage("cannot split a dataset with fewer than 2 rows".into()));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let test_idx = &indices[..n_test];
    let train_idx = &indices[n_test..];
    Ok((dataset.subset(train_idx), dataset.subset(test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_unimodal;

    fn tiny_dataset(n: usize, seed: u64) -> Dataset {
        gen_unimodal(n, seed).unwrap()
    }

    #[test]
    fn augment_counts_and_determinism() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0], vec![2.0], vec![3.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let aug = augment_batch(&refs, 1, 1, &mut rng);
        assert_eq!(aug.len(), 3);
        assert_eq!(aug.inputs.row(1), &[2.0]);

        // paper-style sizes: 20 inputs × 50 copies -> 1000 rows
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let aug = augment_batch(&refs, 50, 1, &mut rng);
        assert_eq!(aug.len(), 1000);
        assert_eq!(aug.group_size, 50);
        assert!(aug.noise.data().iter().all(|v| (0.0..=1.0).contains(v)));

        // fixed seed, identical draws
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a1 = augment_batch(&refs, 5, 2, &mut r1);
        let a2 = augment_batch(&refs, 5, 2, &mut r2);
        assert_eq!(a1.noise, a2.noise);
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::new(0, 1, 1).validate().is_err());
        assert!(TrainConfig::new(1, 0, 1).validate().is_err());
        assert!(TrainConfig::new(1, 1, 0).validate().is_err());
        assert!(TrainConfig::new(1, 1, 1).validate().is_ok());
    }

    #[test]
    fn one_point_dataset_one_update() {
        let data = tiny_dataset(1, 5);
        let mcfg = ModelConfig::new(1, 1, 1).with_seed(1);
        let tcfg = TrainConfig::new(1, 20, 4).with_seed(2);
        let (_, history) = train(&data, &mcfg, &tcfg).unwrap();
        assert_eq!(history.steps, 1);
        assert_eq!(history.epoch_loss.len(), 1);
        assert_eq!(history.epoch_seconds.len(), 1);
    }

    #[test]
    fn partial_batches_are_kept() {
        let data = tiny_dataset(7, 5);
        let mcfg = ModelConfig::new(1, 1, 1).with_seed(1);
        let tcfg = TrainConfig::new(2, 5, 3).with_seed(2);
        let (_, history) = train(&data, &mcfg, &tcfg).unwrap();
        // ceil(7/5) = 2 steps per epoch, 2 epochs
        assert_eq!(history.steps, 4);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = tiny_dataset(30, 11);
        let mcfg = ModelConfig::new(1, 1, 1).with_seed(7);
        let tcfg = TrainConfig::new(3, 10, 5).with_seed(9);
        let (p1, h1) = train(&data, &mcfg, &tcfg).unwrap();
        let (p2, h2) = train(&data, &mcfg, &tcfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(h1.epoch_loss, h2.epoch_loss);
        // and across thread counts
        let (p3, h3) = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| train(&data, &mcfg, &tcfg))
            .unwrap();
        assert_eq!(p1, p3);
        assert_eq!(h1.epoch_loss, h3.epoch_loss);
    }

    #[test]
    fn most_parameters_move_after_an_epoch() {
        let data = tiny_dataset(50, 3);
        let mcfg = ModelConfig::new(1, 1, 1).with_seed(4);
        let tcfg = TrainConfig::new(1, 10, 8).with_seed(5);
        let init = init_params(&mcfg).unwrap();
        let (trained, _) = train(&data, &mcfg, &tcfg).unwrap();
        let before: Vec<f64> = init.param_list().iter().flat_map(|m| m.data().to_vec()).collect();
        let after: Vec<f64> = trained
            .param_list()
            .iter()
            .flat_map(|m| m.data().to_vec())
            .collect();
        let moved = before
            .iter()
            .zip(&after)
            .filter(|(a, b)| a != b)
            .count();
        assert!(
            moved as f64 >= 0.99 * before.len() as f64,
            "{moved} of {} moved",
            before.len()
        );
    }

    #[test]
    fn training_loss_decreases() {
        let data = tiny_dataset(60, 21);
        let mcfg = ModelConfig::new(1, 1, 1).with_seed(2);
        let tcfg = TrainConfig::new(30, 20, 10).with_seed(3);
        let (_, history) = train(&data, &mcfg, &tcfg).unwrap();
        let first: f64 = history.epoch_loss[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = history.epoch_loss[history.epoch_loss.len() - 10..]
            .iter()
            .sum::<f64>()
            / 10.0;
        assert!(last < first, "first {first}, last {last}");
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let data = tiny_dataset(10, 1);
        let mcfg = ModelConfig::new(1, 1, 1).with_seed(1);
        let mut tcfg = TrainConfig::new(3, 10, 3).with_seed(1);
        tcfg.lr = 1e200;
        match train(&data, &mcfg, &tcfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = tiny_dataset(10, 1);
        let mcfg = ModelConfig::new(2, 1, 1);
        assert!(train(&data, &mcfg, &TrainConfig::new(1, 5, 2)).is_err());
        let mcfg = ModelConfig::new(1, 2, 2);
        assert!(train(&data, &mcfg, &TrainConfig::new(1, 5, 2)).is_err());
    }

    #[test]
    fn split_contract() {
        let data = tiny_dataset(100, 8);
        let (train_set, test_set) = split(&data, 0.1, 42).unwrap();
        assert_eq!(train_set.len(), 90);
        assert_eq!(test_set.len(), 10);
        // determinism
        let (t2, s2) = split(&data, 0.1, 42).unwrap();
        assert_eq!(train_set, t2);
        assert_eq!(test_set, s2);
        // union is the original multiset (sort feature column)
        let mut all: Vec<f64> = (0..train_set.len())
            .map(|i| train_set.features.get(i, 0))
            .chain((0..test_set.len()).map(|i| test_set.features.get(i, 0)))
            .collect();
        let mut orig: Vec<f64> = (0..data.len()).map(|i| data.features.get(i, 0)).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        orig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, orig);
        // bounds
        assert!(split(&data, 0.0, 1).is_err());
        assert!(split(&data, 1.0, 1).is_err());
    }

    #[test]
    fn history_csv() {
        let dir = tempfile::tempdir().unwrap();
        let h = TrainHistory {
            epoch_loss: vec![0.5, 0.4],
            epoch_seconds: vec![0.01, 0.011],
            steps: 4,
        };
        let path = dir.path().join("history.csv");
        h.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,loss,seconds"));
        assert_eq!(text.lines().count(), 3);
    }
}
