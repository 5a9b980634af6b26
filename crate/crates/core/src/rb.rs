//! The recursive-Bayesian competitor: a binary target/non-target classifier
//! whose scores are fused over the alphabet by a per-symbol likelihood-ratio
//! update.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::eval::{final_accuracy, RbDecoder};
use crate::model::{check_layout, ExtractCache, FeatureExtractor, ModelConfig, SequenceRecord, TrialTrace};
use crate::nn::{adam_step, AdamConfig, AdamState, Gradients, Linear, ParamStore, Tensor};
use crate::real::Real;
use crate::rng::{self, domain, Rng};
use crate::sim::{query_log_prob, sample_query, Belief, Query, ResponsePool};
use crate::trainer::{EpochRecord, TrainConfig, Trained};

/// Logits are clamped to this magnitude before the sigmoid.
pub const LOGIT_CLAMP: f64 = 15.0;
/// Bounds on the likelihood ratio s / (1 − s).
pub const RATIO_MIN: f64 = 1e-6;
pub const RATIO_MAX: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct BinaryClassifier {
    cfg: ModelConfig,
    extractor: FeatureExtractor,
    head: Linear,
}

#[derive(Debug, Clone)]
pub struct BinaryCache<T> {
    extract: ExtractCache<T>,
    features: Vec<T>,
    raw_logit: T,
}

impl BinaryClassifier {
    /// Uses the channels, samples, conv stack and feature length of `cfg`.
    pub fn new<T: Real>(cfg: &ModelConfig, store: &mut ParamStore<T>) -> Result<Self> {
        cfg.validate()?;
        let extractor = FeatureExtractor::register(
            store,
            "rb.extract",
            cfg.channels,
            cfg.samples,
            &cfg.conv,
            cfg.feature_len,
        )?;
        let head = Linear::register(store, "rb.head", cfg.feature_len, 1)?;
        Ok(BinaryClassifier {
            cfg: cfg.clone(),
            extractor,
            head,
        })
    }

    pub fn bind<T: Real>(cfg: &ModelConfig, store: &ParamStore<T>) -> Result<Self> {
        let mut reference = ParamStore::<T>::new(0);
        let model = Self::new(cfg, &mut reference)?;
        check_layout(&reference, store)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Unclamped logit.
    pub fn logit<T: Real>(&self, params: &ParamStore<T>, response: &Tensor<T>) -> Result<T> {
        Ok(self.forward_cached(params, response)?.raw_logit)
    }

    fn forward_cached<T: Real>(
        &self,
        params: &ParamStore<T>,
        response: &Tensor<T>,
    ) -> Result<BinaryCache<T>> {
        let (features, extract) = self.extractor.forward(params, response)?;
        let raw_logit = self.head.apply(params, &features)[0];
        Ok(BinaryCache {
            extract,
            features,
            raw_logit,
        })
    }

    /// Binary cross-entropy for label `target` and its parameter gradient.
    pub fn loss_gradient<T: Real>(
        &self,
        params: &ParamStore<T>,
        response: &Tensor<T>,
        target: bool,
        grads: &mut Gradients<T>,
    ) -> Result<(T, Tensor<T>)> {
        let cache = self.forward_cached(params, response)?;
        let y = if target { T::one() } else { T::zero() };
        let z = clamp_logit(cache.raw_logit);
        let loss = softplus(z) - y * z;
        let dz = if cache.raw_logit.abs() > T::lit(LOGIT_CLAMP) {
            T::zero()
        } else {
            sigmoid(z) - y
        };
        self.head.accumulate_param_grads(&cache.features, &[dz], grads);
        let dfeat = self.head.input_grad(params, &[dz], 0..self.head.in_dim);
        let dresp = self.extractor.backward(params, &cache.extract, &dfeat, grads);
        Ok((loss, dresp))
    }
}

fn clamp_logit<T: Real>(z: T) -> T {
    let c = T::lit(LOGIT_CLAMP);
    z.max(-c).min(c)
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Probability that `response` is a target response, in (0, 1).
pub fn binary_forward<T: Real>(
    classifier: &BinaryClassifier,
    params: &ParamStore<T>,
    response: &Tensor<T>,
) -> Result<T> {
    Ok(sigmoid(clamp_logit(classifier.logit(params, response)?)))
}

/// Per-symbol ratio update: queried symbol `i` has its mass multiplied by
/// `s_i / (1 − s_i)`, the rest keep theirs, then renormalize.
pub fn bayes_update<T: Real>(belief: &Belief<T>, query: &Query, scores: &[T]) -> Result<Belief<T>> {
    if scores.len() != query.len() {
        return Err(Error::dim("scores", query.len(), scores.len()));
    }
    let mut mass: Vec<f64> = belief.probs().iter().map(|p| p.as_f64()).collect();
    for (&symbol, s) in query.symbols().iter().zip(scores) {
        let s = s.as_f64();
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("binary score {s} outside (0, 1)")));
        }
        if symbol >= mass.len() {
            return Err(Error::Config(format!("query symbol {symbol} outside alphabet")));
        }
        mass[symbol] *= (s / (1.0 - s)).clamp(RATIO_MIN, RATIO_MAX);
    }
    let total: f64 = mass.iter().sum();
    Belief::new(mass.iter().map(|m| T::lit(m / total)).collect())
}

/// One trial: queries sampled from the previous belief, belief updated by
/// [`bayes_update`]. Baselines are zero and there is no hidden state.
pub fn run_trial_rb<T: Real>(
    classifier: &BinaryClassifier,
    params: &ParamStore<T>,
    target: usize,
    pool: &ResponsePool<T>,
    rng: &mut Rng,
) -> Result<TrialTrace<T>> {
    let cfg = classifier.config();
    if target >= cfg.alphabet {
        return Err(Error::Config(format!(
            "target {target} outside alphabet of {}",
            cfg.alphabet
        )));
    }
    let initial = Belief::uniform(cfg.alphabet);
    let mut belief = initial.clone();
    let mut sequences = Vec::with_capacity(cfg.sequences);
    for _ in 0..cfg.sequences {
        let query = sample_query(&belief, cfg.query_size, rng)?;
        let log_prob = query_log_prob(&belief, &query)?;
        let items = pool.draw_items(&query, target, rng);
        let responses = pool.gather(&query, target, &items);
        let scores = (0..query.len())
            .map(|k| binary_forward(classifier, params, &responses.item_tensor(k)))
            .collect::<Result<Vec<T>>>()?;
        belief = bayes_update(&belief, &query, &scores)?;
        sequences.push(SequenceRecord {
            query,
            items,
            log_prob,
            belief: belief.clone(),
            baseline: T::zero(),
            hidden: Vec::new(),
        });
    }
    Ok(TrialTrace {
        target,
        initial_belief: initial,
        sequences,
    })
}

/// Individual responses labelled target / non-target.
#[derive(Debug, Clone)]
pub struct BinaryDataset<'a> {
    pool: &'a ResponsePool<f32>,
}

impl<'a> BinaryDataset<'a> {
    pub fn new(pool: &'a ResponsePool<f32>) -> Self {
        BinaryDataset { pool }
    }

    /// One epoch of (is_target, item) pairs: both classes padded to the
    /// larger count by resampling the minority with replacement, then
    /// shuffled.
    pub fn balanced_epoch(&self, rng: &mut Rng) -> Vec<(bool, usize)> {
        let nt = self.pool.count_target();
        let nn = self.pool.count_nontarget();
        let size = nt.max(nn);
        let class = |is_target: bool, count: usize, rng: &mut Rng| -> Vec<(bool, usize)> {
            let mut v: Vec<(bool, usize)> = (0..count).map(|i| (is_target, i)).collect();
            v.extend((count..size).map(|_| (is_target, rng.gen_range(0..count))));
            v
        };
        let mut all = class(true, nt, rng);
        all.extend(class(false, nn, rng));
        all.shuffle(rng);
        all
    }

    pub fn response(&self, is_target: bool, item: usize) -> Tensor<f32> {
        if is_target {
            self.pool.target().item_tensor(item)
        } else {
            self.pool.nontarget().item_tensor(item)
        }
    }
}

/// Binary cross-entropy training on balanced, shuffled responses.
/// `val_pool` feeds the per-epoch validation accuracy of the fused decoder.
pub fn train_binary(
    train_pool: &ResponsePool<f32>,
    val_pool: &ResponsePool<f32>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<Trained<BinaryClassifier>> {
    train_binary_with_progress(train_pool, val_pool, model_cfg, cfg, |_| {})
}

pub fn train_binary_with_progress(
    train_pool: &ResponsePool<f32>,
    val_pool: &ResponsePool<f32>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Trained<BinaryClassifier>> {
    cfg.validate()?;
    if train_pool.count_target() == 0 || train_pool.count_nontarget() == 0 {
        return Err(Error::Config("binary training needs both classes".into()));
    }
    let mut params = ParamStore::<f32>::new(cfg.seed);
    let model = BinaryClassifier::new(model_cfg, &mut params)?;
    let data = BinaryDataset::new(train_pool);
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut shuffle = rng::stream(cfg.seed, domain::SHUFFLE, 0);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let learning_rate = adam.learning_rate;
        let order = data.balanced_epoch(&mut shuffle);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            let results = cfg.parallelism.try_map(chunk.len(), |j| {
                let (is_target, item) = chunk[j];
                let mut grads = params.gradients();
                let (loss, _) =
                    model.loss_gradient(&params, &data.response(is_target, item), is_target, &mut grads)?;
                Ok::<_, Error>((loss, grads))
            })?;
            params.zero_grads();
            let scale = 1.0 / chunk.len() as f32;
            let mut batch_loss = 0.0f64;
            for (loss, grads) in &results {
                batch_loss += *loss as f64;
                params.accumulate(grads, scale);
            }
            batch_loss /= chunk.len() as f64;
            if !batch_loss.is_finite() || !params.grads_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b + 1,
                    value: batch_loss,
                });
            }
            adam_step(&mut params, &mut adam);
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        let val_accuracy = final_accuracy(
            &RbDecoder::new(&model, &params),
            val_pool,
            cfg.val_trials,
            cfg.seed,
            cfg.parallelism,
        )?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: epoch_loss / order.len() as f64,
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

/// Area under the ROC curve: probability a random positive outscores a
/// random negative, ties counting one half.
pub fn auc(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() || negative.is_empty() {
        return f64::NAN;
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // mid-ranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += all[i..j].iter().filter(|x| x.1).count() as f64 * mid;
        i = j;
    }
    let np = positive.len() as f64;
    (rank_sum - np * (np + 1.0) / 2.0) / (np * negative.len() as f64)
}
