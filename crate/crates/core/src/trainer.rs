//! Mini-batch probe training with plateau decay and early stopping.
//!
//! Each epoch shuffles the training sentences with a seeded ChaCha8 stream,
//! steps the optimizer once per batch on the mean sentence loss, then
//! evaluates the full dev set. The learning rate is halved (by default)
//! whenever the dev loss stops improving and training stops after a fixed
//! number of decays. The parameters with the lowest dev loss are returned.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{Matrix, Vectors};
use crate::optim::{Optimizer, OptimizerKind, PlateauSchedule};
use crate::probe::{Kernel, ProbeError, ProbeParams, RbfMode};
use crate::treebank::TreeDistances;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    /// Epochs without dev improvement before the learning rate decays.
    pub plateau_patience: usize,
    /// Minimum relative dev-loss improvement that resets the plateau count.
    pub plateau_threshold: f64,
    /// Stop after this many learning-rate decays.
    pub early_stop_after: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub layer: usize,
    pub rank: usize,
    pub kernel: Kernel,
    pub poly_shift: f64,
    pub poly_degree: u32,
    pub rbf_sigma: f64,
    pub rbf_mode: RbfMode,
    pub sigmoid_scale: f64,
    pub sigmoid_offset: f64,
    /// Also learn the sigmoid's `a` and `b`.
    pub train_sigmoid_affine: bool,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            initial_lr: 0.001,
            lr_decay_factor: 0.5,
            plateau_patience: 1,
            plateau_threshold: 1e-4,
            early_stop_after: 5,
            batch_size: 20,
            seed: 0,
            layer: 0,
            rank: 128,
            kernel: Kernel::Linear,
            poly_shift: 0.0,
            poly_degree: 2,
            rbf_sigma: 1.0,
            rbf_mode: RbfMode::Elementwise,
            sigmoid_scale: 1.0,
            sigmoid_offset: 0.0,
            train_sigmoid_affine: false,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let check = |ok: bool, msg: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(TrainError::Config(msg))
            }
        };
        check(self.max_epochs >= 1, "max_epochs must be >= 1")?;
        check(self.batch_size >= 1, "batch_size must be >= 1")?;
        check(self.rank >= 1, "rank must be >= 1")?;
        check(
            self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0,
            "lr_decay_factor must be in (0, 1)",
        )?;
        check(
            self.initial_lr > 0.0 && self.initial_lr.is_finite(),
            "initial_lr must be > 0",
        )?;
        check(self.plateau_patience >= 1, "plateau_patience must be >= 1")?;
        check(self.early_stop_after >= 1, "early_stop_after must be >= 1")?;
        Ok(())
    }

    /// Freshly initialized probe for embeddings of width `dim`, drawn from
    /// the configured seed.
    pub fn initial_params(&self, dim: usize) -> ProbeParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.initial_params_with(dim, &mut rng)
    }

    fn initial_params_with(&self, dim: usize, rng: &mut ChaCha8Rng) -> ProbeParams {
        let mut params = ProbeParams::random(self.kernel, self.rank, dim, rng);
        params.poly_shift = self.poly_shift;
        params.poly_degree = self.poly_degree;
        params.rbf_sigma = self.rbf_sigma;
        params.rbf_mode = self.rbf_mode;
        params.sigmoid_scale = self.sigmoid_scale;
        params.sigmoid_offset = self.sigmoid_offset;
        params
    }

    fn trains_affine(&self) -> bool {
        self.train_sigmoid_affine && self.kernel == Kernel::Sigmoid
    }
}

/// One sentence prepared for training: its word vectors at the chosen
/// layer and its gold tree distances.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub sent_id: &'a str,
    pub vectors: Vectors<'a>,
    pub gold: TreeDistances,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Learning rate used for this epoch's updates.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    pub lr_decays: usize,
    pub stopped_early: bool,
    pub train_sentences: usize,
    pub dev_sentences: usize,
    /// Sentences dropped for having fewer than two tokens.
    pub skipped_sentences: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error("no usable {0} sentences (need at least two tokens)")]
    NoData(&'static str),
    #[error("sentence {sent_id}: embedding width {found}, expected {expected}")]
    Width {
        sent_id: String,
        expected: usize,
        found: usize,
    },
    #[error("sentence {sent_id}: {source}")]
    Probe { sent_id: String, source: ProbeError },
    #[error("non-finite loss in epoch {epoch} on sentence {sent_id}")]
    NonFiniteLoss { sent_id: String, epoch: usize },
}

fn usable<'s, 'a>(samples: &'s [Sample<'a>]) -> Vec<&'s Sample<'a>> {
    samples.iter().filter(|s| s.vectors.tokens() >= 2).collect()
}

/// Mean sentence loss over `samples` (sentences shorter than two tokens
/// skipped).
pub fn mean_loss(params: &ProbeParams, samples: &[Sample<'_>]) -> Result<f64, TrainError> {
    let usable = usable(samples);
    if usable.is_empty() {
        return Err(TrainError::NoData("evaluation"));
    }
    let mut total = 0.0;
    for s in &usable {
        let loss =
            params
                .sentence_loss(s.vectors, &s.gold)
                .map_err(|source| TrainError::Probe {
                    sent_id: s.sent_id.to_string(),
                    source,
                })?;
        total += loss;
    }
    Ok(total / usable.len() as f64)
}

pub fn train(
    config: &TrainConfig,
    train_set: &[Sample<'_>],
    dev_set: &[Sample<'_>],
) -> Result<(ProbeParams, TrainReport), TrainError> {
    train_with(config, train_set, dev_set, |_| {})
}

/// Like [`train`], calling `on_epoch` after each epoch's dev evaluation.
pub fn train_with(
    config: &TrainConfig,
    train_set: &[Sample<'_>],
    dev_set: &[Sample<'_>],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ProbeParams, TrainReport), TrainError> {
    config.validate()?;
    let train_usable = usable(train_set);
    let dev_usable = usable(dev_set);
    if train_usable.is_empty() {
        return Err(TrainError::NoData("training"));
    }
    if dev_usable.is_empty() {
        return Err(TrainError::NoData("dev"));
    }
    let dim = train_usable[0].vectors.dim();
    for s in train_usable.iter().chain(&dev_usable) {
        if s.vectors.dim() != dim {
            return Err(TrainError::Width {
                sent_id: s.sent_id.to_string(),
                expected: dim,
                found: s.vectors.dim(),
            });
        }
    }
    let skipped = train_set.len() + dev_set.len() - train_usable.len() - dev_usable.len();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = config.initial_params_with(dim, &mut rng);
    params.validate().map_err(|source| TrainError::Probe {
        sent_id: String::new(),
        source,
    })?;

    let affine = config.trains_affine();
    let n_weights = params.rank() * dim;
    let mut flat: Vec<f64> = params.projection.as_slice().to_vec();
    if affine {
        flat.push(params.sigmoid_scale);
        flat.push(params.sigmoid_offset);
    }
    let mut optimizer = Optimizer::new(config.optimizer, flat.len());
    let mut schedule = PlateauSchedule::new(
        config.initial_lr,
        config.lr_decay_factor,
        config.plateau_patience,
        config.plateau_threshold,
        config.early_stop_after,
    );

    let mut order: Vec<usize> = (0..train_usable.len()).collect();
    let mut grad_flat = alloc::vec![0.0; flat.len()];
    let mut epochs = Vec::new();
    let mut best = (params.clone(), 0usize, f64::INFINITY);
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let lr = schedule.lr();
        let mut train_total = 0.0;

        for batch in order.chunks(config.batch_size) {
            grad_flat.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                let s = train_usable[idx];
                let g = params.loss_gradient(s.vectors, &s.gold).map_err(|source| {
                    TrainError::Probe {
                        sent_id: s.sent_id.to_string(),
                        source,
                    }
                })?;
                if !g.loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        sent_id: s.sent_id.to_string(),
                        epoch,
                    });
                }
                train_total += g.loss;
                for (acc, v) in grad_flat.iter_mut().zip(g.projection.as_slice()) {
                    *acc += v;
                }
                if affine {
                    grad_flat[n_weights] += g.sigmoid_scale;
                    grad_flat[n_weights + 1] += g.sigmoid_offset;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grad_flat.iter_mut().for_each(|g| *g *= inv);
            optimizer.step(&mut flat, &grad_flat, lr);
            unflatten(&mut params, &flat, n_weights, affine);
        }

        let dev_loss = mean_loss(&params, dev_set)?;
        if !dev_loss.is_finite() {
            let sent_id = dev_usable
                .iter()
                .find(|s| {
                    !params
                        .sentence_loss(s.vectors, &s.gold)
                        .is_ok_and(f64::is_finite)
                })
                .map(|s| s.sent_id.to_string())
                .unwrap_or_default();
            return Err(TrainError::NonFiniteLoss { sent_id, epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss: train_total / train_usable.len() as f64,
            dev_loss,
            lr,
        };
        on_epoch(&record);
        epochs.push(record);

        if dev_loss < best.2 {
            best = (params.clone(), epoch, dev_loss);
        }
        if schedule.observe(dev_loss).stop {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    let (best_params, best_epoch, best_dev_loss) = best;
    let report = TrainReport {
        epochs,
        best_epoch,
        best_dev_loss,
        lr_decays: schedule.decays(),
        stopped_early,
        train_sentences: train_usable.len(),
        dev_sentences: dev_usable.len(),
        skipped_sentences: skipped,
    };
    Ok((best_params, report))
}

fn unflatten(params: &mut ProbeParams, flat: &[f64], n_weights: usize, affine: bool) {
    let rows = params.rank();
    let cols = params.dim();
    params.projection = Matrix::from_vec(rows, cols, flat[..n_weights].to_vec());
    if affine {
        params.sigmoid_scale = flat[n_weights];
        params.sigmoid_offset = flat[n_weights + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::PlantedTask;

    fn small_config() -> TrainConfig {
        TrainConfig {
            rank: 8,
            max_epochs: 3,
            batch_size: 4,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.lr_decay_factor = 1.0;
        assert!(matches!(c.validate(), Err(TrainError::Config(_))));
        c.lr_decay_factor = 0.5;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn one_epoch_gives_one_record() {
        let task = PlantedTask::generate(5, 30, 10, 4, 2..7);
        let config = TrainConfig {
            max_epochs: 1,
            ..small_config()
        };
        let (_, report) = train(&config, &task.train_samples(), &task.dev_samples()).unwrap();
        assert_eq!(report.epochs.len(), 1);
        assert_eq!(report.best_epoch, 1);
    }

    #[test]
    fn same_seed_same_params() {
        let task = PlantedTask::generate(5, 30, 10, 4, 2..7);
        let config = small_config();
        let a = train(&config, &task.train_samples(), &task.dev_samples()).unwrap();
        let b = train(&config, &task.train_samples(), &task.dev_samples()).unwrap();
        assert_eq!(a, b);
        let other = TrainConfig { seed: 12, ..config };
        let c = train(&other, &task.train_samples(), &task.dev_samples()).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn short_sentences_are_skipped() {
        let task = PlantedTask::generate(5, 12, 6, 4, 1..4);
        let (_, report) =
            train(&small_config(), &task.train_samples(), &task.dev_samples()).unwrap();
        let singles = task
            .train
            .iter()
            .chain(&task.dev)
            .filter(|s| s.sentence.len() < 2)
            .count();
        assert_eq!(report.skipped_sentences, singles);
    }

    #[test]
    fn empty_dev_set_is_an_error() {
        let task = PlantedTask::generate(5, 12, 0, 4, 2..5);
        let err = train(&small_config(), &task.train_samples(), &task.dev_samples()).unwrap_err();
        assert_eq!(err, TrainError::NoData("dev"));
    }

    #[test]
    fn learning_rate_only_halves() {
        let task = PlantedTask::generate(2, 40, 10, 4, 2..8);
        let config = TrainConfig {
            max_epochs: 40,
            early_stop_after: 3,
            ..small_config()
        };
        let (_, report) = train(&config, &task.train_samples(), &task.dev_samples()).unwrap();
        for w in report.epochs.windows(2) {
            let ratio = w[1].lr / w[0].lr;
            assert!(
                ratio == 1.0 || ratio == config.lr_decay_factor,
                "ratio {ratio}"
            );
        }
        let first = report.epochs[0].dev_loss;
        assert!(report.best_dev_loss <= first);
    }
}
