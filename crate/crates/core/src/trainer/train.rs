use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{final_accuracy, MarkovDecoder};
use crate::model::{MarkovType, ModelConfig};
use crate::nn::{adam_step, AdamConfig, AdamState, Gradients, ParamStore};
use crate::parallel::Parallelism;
use crate::real::Real;
use crate::rng::{self, domain, Rng};
use crate::sim::ResponsePool;
use crate::trainer::{hybrid_loss, per_sequence_rewards, DiscountKind, DiscountSpec, LossBreakdown};

/// λ values searched by [`tune_lambda`] by default.
pub const LAMBDA_GRID: [f64; 10] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub decay: f64,
    /// Trials (targets) per optimizer step.
    pub batch: usize,
    /// Rollouts per target (M).
    pub episodes: usize,
    pub lambda: f64,
    pub discount: DiscountKind,
    pub batches_per_epoch: usize,
    /// Trials used for the per-epoch validation accuracy.
    pub val_trials: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 200,
            decay: 0.97,
            batch: 28,
            episodes: 1,
            lambda: DiscountKind::Linear.default_lambda(),
            discount: DiscountKind::Linear,
            batches_per_epoch: 20,
            val_trials: 280,
            seed: 0,
            parallelism: Parallelism::Parallel,
        }
    }
}

impl TrainConfig {
    /// Defaults for the given discount, including its tuned λ.
    pub fn for_discount(discount: DiscountKind) -> Self {
        TrainConfig {
            discount,
            lambda: discount.default_lambda(),
            ..TrainConfig::default()
        }
    }

    /// Defaults for the binary competitor (25 epochs).
    pub fn binary_default() -> Self {
        TrainConfig {
            epochs: 25,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch == 0 || self.episodes == 0 || self.batches_per_epoch == 0 {
            return Err(Error::Config(
                "batch, episodes and batches_per_epoch must be >= 1".into(),
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay must be in (0, 1], got {}", self.decay)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate in effect during the epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub params: ParamStore<f32>,
    pub history: Vec<EpochRecord>,
}

/// Roll out one trial and return its hybrid loss and parameter gradient.
pub fn trial_gradient<T: Real>(
    model: &MarkovType,
    params: &ParamStore<T>,
    pool: &ResponsePool<T>,
    target: usize,
    discount: &DiscountSpec,
    lambda: f64,
    rng: &mut Rng,
) -> Result<(LossBreakdown, Gradients<T>)> {
    let rollout = model.rollout(params, target, pool, rng)?;
    let track = per_sequence_rewards(&rollout.trace, discount);
    let (loss, upstream) = hybrid_loss(&rollout.trace, &track, lambda, model.config().hidden);
    let mut grads = params.gradients();
    model.backward(params, &rollout, &upstream, &mut grads)?;
    Ok((loss, grads))
}

pub fn train(
    train_pool: &ResponsePool<f32>,
    val_pool: &ResponsePool<f32>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<Trained<MarkovType>> {
    train_with_progress(train_pool, val_pool, model_cfg, cfg, |_| {})
}

/// [`train`], calling `on_epoch` after every epoch.
pub fn train_with_progress(
    train_pool: &ResponsePool<f32>,
    val_pool: &ResponsePool<f32>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Trained<MarkovType>> {
    cfg.validate()?;
    let mut params = ParamStore::<f32>::new(cfg.seed);
    let model = MarkovType::new(model_cfg, &mut params)?;
    let discount = DiscountSpec::new(cfg.discount, model_cfg.sequences)?;
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let per_batch = cfg.batch * cfg.episodes;
    let scale = 1.0 / per_batch as f32;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let learning_rate = adam.learning_rate;
        let mut epoch_loss = 0.0;
        for b in 0..cfg.batches_per_epoch {
            let global = (epoch * cfg.batches_per_epoch + b) as u64;
            let base = global * (per_batch as u64 + 1);
            let mut target_rng = rng::stream(cfg.seed, domain::TRAIN, base);
            let targets: Vec<usize> = (0..cfg.batch)
                .map(|_| target_rng.gen_range(0..model_cfg.alphabet))
                .collect();
            let results = cfg.parallelism.try_map(per_batch, |j| {
                let mut rng = rng::stream(cfg.seed, domain::TRAIN, base + 1 + j as u64);
                trial_gradient(
                    &model,
                    &params,
                    train_pool,
                    targets[j / cfg.episodes],
                    &discount,
                    cfg.lambda,
                    &mut rng,
                )
            })?;

            params.zero_grads();
            let mut batch_loss = 0.0;
            for (loss, grads) in &results {
                batch_loss += loss.total;
                params.accumulate(grads, scale);
            }
            batch_loss /= per_batch as f64;
            if !batch_loss.is_finite() || !params.grads_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b + 1,
                    value: batch_loss,
                });
            }
            adam_step(&mut params, &mut adam);
            epoch_loss += batch_loss;
        }

        let val_accuracy = final_accuracy(
            &MarkovDecoder::new(&model, &params),
            val_pool,
            cfg.val_trials,
            cfg.seed,
            cfg.parallelism,
        )?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: epoch_loss / cfg.batches_per_epoch as f64,
            val_accuracy,
            learning_rate,
        };
        on_epoch(&record);
        history.push(record);
        adam.decay_lr(cfg.decay);
    }

    Ok(Trained {
        model,
        params,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSearch {
    pub best: f64,
    /// (λ, final validation accuracy) per grid point, in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Train one model per λ and keep the one with the best final validation
/// accuracy; ties go to the smaller λ.
pub fn tune_lambda(
    grid: &[f64],
    train_pool: &ResponsePool<f32>,
    val_pool: &ResponsePool<f32>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<LambdaSearch> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let trained = train(
            train_pool,
            val_pool,
            model_cfg,
            &TrainConfig {
                lambda,
                ..cfg.clone()
            },
        )?;
        let acc = trained.history.last().map_or(0.0, |r| r.val_accuracy);
        scores.push((lambda, acc));
    }
    let best = pick_best_lambda(&scores);
    Ok(LambdaSearch { best, scores })
}

pub(crate) fn pick_best_lambda(scores: &[(f64, f64)]) -> f64 {
    let mut best = scores[0];
    for &(lambda, acc) in &scores[1..] {
        if acc > best.1 || (acc == best.1 && lambda < best.0) {
            best = (lambda, acc);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_lambda_prefers_accuracy_then_smaller() {
        assert_eq!(pick_best_lambda(&[(0.05, 0.4)]), 0.05);
        assert_eq!(pick_best_lambda(&[(0.01, 0.4), (0.02, 0.6), (0.03, 0.5)]), 0.02);
        assert_eq!(pick_best_lambda(&[(0.03, 0.6), (0.02, 0.6), (0.05, 0.6)]), 0.02);
    }

    #[test]
    fn grid_is_one_hundredth_steps() {
        for (i, l) in LAMBDA_GRID.iter().enumerate() {
            assert!((l - 0.01 * (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_negative_lambda() {
        let cfg = TrainConfig {
            lambda: -0.1,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
