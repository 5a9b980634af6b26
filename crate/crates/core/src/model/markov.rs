//! The recursive classifier: per-symbol feature extraction, placement of
//! features on the alphabet, the recurrent core, the classification head
//! and the baseline head, rolled out over the sequences of one trial.

use crate::error::{Error, Result};
use crate::model::{ExtractCache, FeatureExtractor, ModelConfig};
use crate::nn::{
    rect, rect_backward, softmax, softmax_backward, Gradients, LayerNorm, LayerNormCache, Linear,
    ParamStore, Tensor,
};
use crate::real::Real;
use crate::rng::Rng;
use crate::sim::{
    query_log_prob, query_log_prob_grad, sample_query, Belief, DrawnItems, Query, ResponsePool,
};

#[derive(Debug, Clone)]
pub struct MarkovType {
    cfg: ModelConfig,
    extractor: FeatureExtractor,
    core_hidden: Linear,
    core_features: Linear,
    norm: LayerNorm,
    classifier: Linear,
    baseline: Linear,
}

/// One sequence of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord<T> {
    pub query: Query,
    /// Pool items drawn for the query, see [`DrawnItems`].
    pub items: DrawnItems,
    /// Log-probability of the query under the belief it was sampled from.
    pub log_prob: T,
    /// Posterior after this sequence.
    pub belief: Belief<T>,
    /// Baseline head evaluated on the hidden state the query was sampled
    /// from, so it never depends on the query it is paired with.
    pub baseline: T,
    /// Hidden state after this sequence (empty for methods without one).
    pub hidden: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace<T> {
    pub target: usize,
    pub initial_belief: Belief<T>,
    pub sequences: Vec<SequenceRecord<T>>,
}

impl<T: Real> TrialTrace<T> {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn final_belief(&self) -> &Belief<T> {
        self.sequences
            .last()
            .map(|s| &s.belief)
            .unwrap_or(&self.initial_belief)
    }

    /// The random outcomes of the trial, for deterministic replay.
    pub fn episode(&self) -> Episode {
        Episode {
            target: self.target,
            steps: self
                .sequences
                .iter()
                .map(|s| (s.query.clone(), s.items.clone()))
                .collect(),
        }
    }
}

/// Target plus the query and drawn pool items of every sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub target: usize,
    pub steps: Vec<(Query, DrawnItems)>,
}

#[derive(Debug, Clone)]
pub struct StepCache<T> {
    extract: Vec<ExtractCache<T>>,
    features: Vec<T>,
    h_prev: Vec<T>,
    pre_activation: Tensor<T>,
    norm: LayerNormCache<T>,
}

/// A trace plus everything its backward pass needs.
#[derive(Debug, Clone)]
pub struct Rollout<T> {
    pub trace: TrialTrace<T>,
    caches: Vec<StepCache<T>>,
}

/// Upstream gradients of a scalar function of a [`TrialTrace`].
///
/// `baseline` gradients reach only the baseline head: the hidden state it
/// reads is treated as a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceGrads<T> {
    pub belief: Vec<Vec<T>>,
    pub log_prob: Vec<T>,
    pub baseline: Vec<T>,
    pub hidden: Vec<Vec<T>>,
}

impl<T: Real> TraceGrads<T> {
    pub fn zeros(sequences: usize, alphabet: usize, hidden: usize) -> Self {
        TraceGrads {
            belief: vec![vec![T::zero(); alphabet]; sequences],
            log_prob: vec![T::zero(); sequences],
            baseline: vec![T::zero(); sequences],
            hidden: vec![vec![T::zero(); hidden]; sequences],
        }
    }

    pub fn for_trace(trace: &TrialTrace<T>, hidden: usize) -> Self {
        Self::zeros(trace.len(), trace.initial_belief.alphabet(), hidden)
    }

    /// `self += other * scale`
    pub fn add_scaled(&mut self, other: &TraceGrads<T>, scale: T) {
        let add = |a: &mut Vec<T>, b: &Vec<T>| {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y * scale;
            }
        };
        for (a, b) in self.belief.iter_mut().zip(&other.belief) {
            add(a, b);
        }
        for (a, b) in self.hidden.iter_mut().zip(&other.hidden) {
            add(a, b);
        }
        add(&mut self.log_prob, &other.log_prob);
        add(&mut self.baseline, &other.baseline);
    }
}

impl MarkovType {
    /// Register freshly initialized parameters for `cfg` into `store`.
    pub fn new<T: Real>(cfg: &ModelConfig, store: &mut ParamStore<T>) -> Result<Self> {
        cfg.validate()?;
        let extractor = FeatureExtractor::register(
            store,
            "extract",
            cfg.channels,
            cfg.samples,
            &cfg.conv,
            cfg.feature_len,
        )?;
        let core_hidden = Linear::register(store, "core.hidden", cfg.hidden, cfg.hidden)?;
        let core_features = Linear::register(
            store,
            "core.features",
            cfg.alphabet * cfg.feature_len,
            cfg.hidden,
        )?;
        let norm = LayerNorm::register(store, "core.norm", cfg.hidden)?;
        let classifier = Linear::register(store, "classify", cfg.hidden, cfg.alphabet)?;
        let baseline = Linear::register(store, "baseline", cfg.hidden, 1)?;
        Ok(MarkovType {
            cfg: cfg.clone(),
            extractor,
            core_hidden,
            core_features,
            norm,
            classifier,
            baseline,
        })
    }

    /// Attach to an existing store (e.g. a loaded checkpoint), checking that
    /// its names and shapes are exactly those `cfg` implies.
    pub fn bind<T: Real>(cfg: &ModelConfig, store: &ParamStore<T>) -> Result<Self> {
        let mut reference = ParamStore::<T>::new(0);
        let model = Self::new(cfg, &mut reference)?;
        check_layout(&reference, store)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// f_e: one response `[c, f]` to a feature vector of length L.
    pub fn extract<T: Real>(&self, params: &ParamStore<T>, response: &Tensor<T>) -> Result<Tensor<T>> {
        let (features, _) = self.extractor.forward(params, response)?;
        Ok(Tensor::vector(features))
    }

    /// Alphabet feature map `[A, L]`: row `i` holds the features of the
    /// response shown for symbol `i`, or zeros when `i` was not queried.
    pub fn map_features<T: Real>(
        &self,
        params: &ParamStore<T>,
        responses: &Tensor<T>,
        query: &Query,
    ) -> Result<Tensor<T>> {
        let (flat, _) = self.map_features_cached(params, responses, query)?;
        Tensor::from_vec(&[self.cfg.alphabet, self.cfg.feature_len], flat)
    }

    fn map_features_cached<T: Real>(
        &self,
        params: &ParamStore<T>,
        responses: &Tensor<T>,
        query: &Query,
    ) -> Result<(Vec<T>, Vec<ExtractCache<T>>)> {
        let query = Query::new(query.symbols().to_vec(), self.cfg.alphabet)?;
        if responses.rank() != 3 || responses.dim(0) != query.len() {
            return Err(Error::dim(
                "responses",
                format!("[{}, {}, {}]", query.len(), self.cfg.channels, self.cfg.samples),
                format!("{:?}", responses.shape()),
            ));
        }
        let l = self.cfg.feature_len;
        let mut flat = vec![T::zero(); self.cfg.alphabet * l];
        let mut caches = Vec::with_capacity(query.len());
        for (k, &symbol) in query.symbols().iter().enumerate() {
            let (features, cache) = self
                .extractor
                .forward(params, &responses.item_tensor(k))?;
            flat[symbol * l..(symbol + 1) * l].copy_from_slice(&features);
            caches.push(cache);
        }
        Ok((flat, caches))
    }

    /// f_h: `LayerNorm(Rect(Linear(h_prev) + Linear(flatten(G))))`.
    pub fn core_update<T: Real>(
        &self,
        params: &ParamStore<T>,
        h_prev: &[T],
        features: &Tensor<T>,
    ) -> Result<Vec<T>> {
        features.expect_shape("alphabet features", &[self.cfg.alphabet, self.cfg.feature_len])?;
        let (h, _, _) = self.core_cached(params, h_prev, features.data())?;
        Ok(h)
    }

    fn core_cached<T: Real>(
        &self,
        params: &ParamStore<T>,
        h_prev: &[T],
        flat_features: &[T],
    ) -> Result<(Vec<T>, Tensor<T>, LayerNormCache<T>)> {
        if h_prev.len() != self.cfg.hidden {
            return Err(Error::dim("hidden state", self.cfg.hidden, h_prev.len()));
        }
        let mut z = self.core_hidden.apply(params, h_prev);
        for (a, b) in z
            .iter_mut()
            .zip(self.core_features.apply(params, flat_features))
        {
            *a += b;
        }
        let pre = Tensor::vector(z);
        let (h, norm) = self.norm.forward(params, &rect(&pre))?;
        Ok((h.into_data(), pre, norm))
    }

    /// f_c: `Softmax(Linear(h))`.
    pub fn classify<T: Real>(&self, params: &ParamStore<T>, h: &[T]) -> Belief<T> {
        Belief::from_softmax(softmax(&self.classifier.apply(params, h)))
    }

    /// `Linear(h)` to a scalar.
    pub fn baseline_value<T: Real>(&self, params: &ParamStore<T>, h: &[T]) -> T {
        self.baseline.apply(params, h)[0]
    }

    pub fn initial_hidden<T: Real>(&self) -> Vec<T> {
        vec![T::zero(); self.cfg.hidden]
    }

    /// One sequence: responses and query in, new hidden state and belief out.
    pub fn step<T: Real>(
        &self,
        params: &ParamStore<T>,
        h_prev: &[T],
        query: &Query,
        responses: &Tensor<T>,
    ) -> Result<(Vec<T>, Belief<T>)> {
        let (h, belief, _) = self.step_cached(params, h_prev, query, responses)?;
        Ok((h, belief))
    }

    fn step_cached<T: Real>(
        &self,
        params: &ParamStore<T>,
        h_prev: &[T],
        query: &Query,
        responses: &Tensor<T>,
    ) -> Result<(Vec<T>, Belief<T>, StepCache<T>)> {
        let (features, extract) = self.map_features_cached(params, responses, query)?;
        let (h, pre_activation, norm) = self.core_cached(params, h_prev, &features)?;
        let belief = self.classify(params, &h);
        Ok((
            h,
            belief,
            StepCache {
                extract,
                features,
                h_prev: h_prev.to_vec(),
                pre_activation,
                norm,
            },
        ))
    }

    fn rollout_with<T: Real>(
        &self,
        params: &ParamStore<T>,
        target: usize,
        pool: &ResponsePool<T>,
        mut choose: impl FnMut(usize, &Belief<T>) -> Result<(Query, DrawnItems)>,
    ) -> Result<Rollout<T>> {
        if target >= self.cfg.alphabet {
            return Err(Error::Config(format!(
                "target {target} outside alphabet of {}",
                self.cfg.alphabet
            )));
        }
        if pool.channels() != self.cfg.channels || pool.samples() != self.cfg.samples {
            return Err(Error::dim(
                "response pool",
                format!("[*, {}, {}]", self.cfg.channels, self.cfg.samples),
                format!("[*, {}, {}]", pool.channels(), pool.samples()),
            ));
        }
        let initial = Belief::uniform(self.cfg.alphabet);
        let mut belief = initial.clone();
        let mut h = self.initial_hidden::<T>();
        let mut sequences = Vec::with_capacity(self.cfg.sequences);
        let mut caches = Vec::with_capacity(self.cfg.sequences);
        for n in 0..self.cfg.sequences {
            let (query, items) = choose(n, &belief)?;
            let log_prob = query_log_prob(&belief, &query)?;
            let baseline = self.baseline_value(params, &h);
            let responses = pool.gather(&query, target, &items);
            let (h_next, next_belief, cache) = self.step_cached(params, &h, &query, &responses)?;
            h = h_next;
            belief = next_belief;
            sequences.push(SequenceRecord {
                query,
                items,
                log_prob,
                belief: belief.clone(),
                baseline,
                hidden: h.clone(),
            });
            caches.push(cache);
        }
        Ok(Rollout {
            trace: TrialTrace {
                target,
                initial_belief: initial,
                sequences,
            },
            caches,
        })
    }

    /// Roll out N sequences, sampling each query from the previous belief
    /// and drawing responses for `target` from `pool`.
    pub fn rollout<T: Real>(
        &self,
        params: &ParamStore<T>,
        target: usize,
        pool: &ResponsePool<T>,
        rng: &mut Rng,
    ) -> Result<Rollout<T>> {
        let k = self.cfg.query_size;
        self.rollout_with(params, target, pool, |_, belief| {
            let query = sample_query(belief, k, rng)?;
            let items = pool.draw_items(&query, target, rng);
            Ok((query, items))
        })
    }

    /// Re-run the model on the queries and responses of `episode`.
    pub fn replay<T: Real>(
        &self,
        params: &ParamStore<T>,
        pool: &ResponsePool<T>,
        episode: &Episode,
    ) -> Result<Rollout<T>> {
        if episode.steps.len() != self.cfg.sequences {
            return Err(Error::dim("episode", self.cfg.sequences, episode.steps.len()));
        }
        self.rollout_with(params, episode.target, pool, |n, _| Ok(episode.steps[n].clone()))
    }

    pub fn run_trial<T: Real>(
        &self,
        params: &ParamStore<T>,
        target: usize,
        pool: &ResponsePool<T>,
        rng: &mut Rng,
    ) -> Result<TrialTrace<T>> {
        Ok(self.rollout(params, target, pool, rng)?.trace)
    }

    /// Backpropagate `upstream` through the whole rollout into `grads`.
    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        rollout: &Rollout<T>,
        upstream: &TraceGrads<T>,
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        let seqs = &rollout.trace.sequences;
        if upstream.belief.len() != seqs.len() {
            return Err(Error::dim("trace gradients", seqs.len(), upstream.belief.len()));
        }
        let v = self.cfg.hidden;
        let l = self.cfg.feature_len;
        let mut dh_next = vec![T::zero(); v];
        for n in (0..seqs.len()).rev() {
            let record = &seqs[n];
            let cache = &rollout.caches[n];

            // The next query was sampled from this belief.
            let mut d_belief = upstream.belief[n].clone();
            if let Some(next) = seqs.get(n + 1) {
                let w = upstream.log_prob[n + 1];
                if w != T::zero() {
                    let g = query_log_prob_grad(&record.belief, &next.query)?;
                    for (d, gi) in d_belief.iter_mut().zip(g) {
                        *d += w * gi;
                    }
                }
            }

            let d_logits = softmax_backward(record.belief.probs(), &d_belief);
            self.classifier
                .accumulate_param_grads(&record.hidden, &d_logits, grads);
            let mut dh = self.classifier.input_grad(params, &d_logits, 0..v);
            for ((d, &a), &b) in dh.iter_mut().zip(&upstream.hidden[n]).zip(&dh_next) {
                *d += a + b;
            }

            let db = upstream.baseline[n];
            if db != T::zero() {
                self.baseline
                    .accumulate_param_grads(&cache.h_prev, &[db], grads);
            }

            let d_rect = self
                .norm
                .backward(params, &cache.norm, &Tensor::vector(dh), grads);
            let d_pre = rect_backward(&cache.pre_activation, &d_rect);
            let d_pre = d_pre.data();

            self.core_hidden
                .accumulate_param_grads(&cache.h_prev, d_pre, grads);
            dh_next = self.core_hidden.input_grad(params, d_pre, 0..v);
            self.core_features
                .accumulate_param_grads(&cache.features, d_pre, grads);
            for (&symbol, extract) in record.query.symbols().iter().zip(&cache.extract) {
                let d_row = self
                    .core_features
                    .input_grad(params, d_pre, symbol * l..(symbol + 1) * l);
                self.extractor.backward(params, extract, &d_row, grads);
            }
        }
        Ok(())
    }
}

/// Names and shapes of `actual` must equal those of `expected`, in order.
pub(crate) fn check_layout<T: Real>(expected: &ParamStore<T>, actual: &ParamStore<T>) -> Result<()> {
    if expected.len() != actual.len() {
        return Err(Error::dim(
            "checkpoint",
            format!("{} tensors", expected.len()),
            format!("{} tensors", actual.len()),
        ));
    }
    for (e, a) in expected.entries().iter().zip(actual.entries()) {
        if e.name != a.name || e.value.shape() != a.value.shape() {
            return Err(Error::dim(
                format!("checkpoint tensor `{}`", e.name),
                format!("{} {:?}", e.name, e.value.shape()),
                format!("{} {:?}", a.name, a.value.shape()),
            ));
        }
    }
    Ok(())
}
