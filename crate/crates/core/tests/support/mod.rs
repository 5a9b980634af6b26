//! Oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use markovtype::eval::{itr, run_decoder_trial, run_session, Decoder, RbDecoder, SessionConfig};
use markovtype::model::{ConvSpec, Episode, FeatureExtractor, MarkovType, ModelConfig};
use markovtype::nn::{
    grad_check, mean_pool_time, mean_pool_time_backward, rect, rect_backward, softmax,
    softmax_backward, Conv1d, Differentiable, GradCheckOptions, GradCheckReport, Gradients,
    LayerNorm, Linear, ParamStore, Tensor,
};
use markovtype::rb::BinaryClassifier;
use markovtype::rng::{self, domain, Rng};
use markovtype::sim::{synth_pools, ResponsePool, SynthConfig};
use markovtype::trainer::{
    expected_reward, hybrid_loss, loss_action, per_sequence_rewards, score_function_gradient,
    train, DiscountKind, DiscountSpec, TrainConfig,
};
use markovtype::{Parallelism, Result};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn jitter(store: &mut ParamStore<f64>, scale: f64, rng: &mut Rng) {
    for e in store.entries_mut() {
        for v in e.value.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += scale * z;
        }
    }
}

pub fn small_conv() -> Vec<ConvSpec> {
    vec![
        ConvSpec::new(3, 3, 1),
        ConvSpec::new(4, 3, 2),
        ConvSpec::new(3, 2, 1),
        ConvSpec::new(3, 1, 1),
        ConvSpec::new(3, 1, 1),
    ]
}

/// A=5, K=2, N=2, c=2, f=12.
pub fn hybrid_config() -> ModelConfig {
    ModelConfig {
        alphabet: 5,
        query_size: 2,
        sequences: 2,
        channels: 2,
        samples: 12,
        feature_len: 4,
        hidden: 6,
        conv: small_conv(),
    }
}

pub fn tiny_pool(target: usize, nontarget: usize, delta: f64, seed: u64) -> ResponsePool<f64> {
    synth_pools(&SynthConfig {
        channels: 2,
        samples: 12,
        delta,
        count_target: target,
        count_nontarget: nontarget,
        seed,
    })
    .unwrap()
    .cast::<f64>()
}

/// The hybrid loss of one recorded episode, with the quantities the loss
/// treats as constants (rewards-to-go, advantages, and the hidden states the
/// baseline head reads) frozen at their values under the base parameters.
pub struct FrozenHybrid<'a> {
    model: &'a MarkovType,
    pool: &'a ResponsePool<f64>,
    episode: Episode,
    discount: DiscountSpec,
    lambda: f64,
    to_go: Vec<f64>,
    advantage: Vec<f64>,
    prev_hidden: Vec<Vec<f64>>,
}

impl<'a> FrozenHybrid<'a> {
    pub fn new(
        model: &'a MarkovType,
        params: &ParamStore<f64>,
        pool: &'a ResponsePool<f64>,
        episode: Episode,
        discount: DiscountSpec,
        lambda: f64,
    ) -> Self {
        let trace = model.replay(params, pool, &episode).unwrap().trace;
        let track = per_sequence_rewards(&trace, &discount);
        let advantage = track
            .to_go
            .iter()
            .zip(&trace.sequences)
            .map(|(r, s)| r - s.baseline)
            .collect();
        let mut prev_hidden = vec![model.initial_hidden::<f64>()];
        prev_hidden.extend(
            trace.sequences[..trace.len() - 1]
                .iter()
                .map(|s| s.hidden.clone()),
        );
        FrozenHybrid {
            model,
            pool,
            episode,
            discount,
            lambda,
            to_go: track.to_go,
            advantage,
            prev_hidden,
        }
    }
}

impl Differentiable<f64> for FrozenHybrid<'_> {
    fn value(&self, params: &ParamStore<f64>, _: &[Tensor<f64>]) -> Result<f64> {
        let trace = self.model.replay(params, self.pool, &self.episode)?.trace;
        let n = trace.len() as f64;
        let baseline: f64 = self
            .to_go
            .iter()
            .zip(&self.prev_hidden)
            .map(|(r, h)| (r - self.model.baseline_value(params, h)).powi(2))
            .sum::<f64>()
            / n;
        let reinforce: f64 = trace
            .sequences
            .iter()
            .zip(&self.advantage)
            .map(|(s, a)| -s.log_prob * a)
            .sum();
        Ok(loss_action(&trace) + self.lambda * (baseline + reinforce))
    }

    fn gradient(
        &self,
        params: &ParamStore<f64>,
        _: &[Tensor<f64>],
    ) -> Result<(Gradients<f64>, Vec<Tensor<f64>>)> {
        let rollout = self.model.replay(params, self.pool, &self.episode)?;
        let track = per_sequence_rewards(&rollout.trace, &self.discount);
        let (_, upstream) =
            hybrid_loss(&rollout.trace, &track, self.lambda, self.model.config().hidden);
        let mut grads = params.gradients();
        self.model.backward(params, &rollout, &upstream, &mut grads)?;
        Ok((grads, Vec::new()))
    }
}

/// Finite-difference check of the end-to-end hybrid loss for one seed.
pub fn hybrid_gradcheck(seed: u64) -> GradCheckReport {
    let cfg = hybrid_config();
    let mut rng = rng::seeded(1000 + seed);
    let mut store = ParamStore::<f64>::new(seed);
    let model = MarkovType::new(&cfg, &mut store).unwrap();
    jitter(&mut store, 0.3, &mut rng);
    let pool = tiny_pool(3, 4, 1.0, seed);
    let discount = DiscountSpec::new(DiscountKind::ALL[seed as usize % 4], cfg.sequences).unwrap();
    let target = seed as usize % cfg.alphabet;
    let episode = model
        .run_trial(&store, target, &pool, &mut rng)
        .unwrap()
        .episode();
    // large λ so the policy and baseline terms are not swamped
    let op = FrozenHybrid::new(&model, &store, &pool, episode, discount, 0.7);
    let mut opts = GradCheckOptions::for_precision::<f64>();
    opts.check_inputs = false;
    grad_check(&op, &store, &[], opts).unwrap()
}

/// Exact and sampled directional derivative of E[R].
#[derive(Debug, Clone, Copy)]
pub struct DirectionCheck {
    pub exact: f64,
    pub mean: f64,
    pub std_error: f64,
}

impl DirectionCheck {
    pub fn z_score(&self) -> f64 {
        (self.mean - self.exact).abs() / self.std_error
    }
}

/// A=3, K=1, N=2 with two-item pools.
pub fn estimator_config() -> ModelConfig {
    ModelConfig {
        alphabet: 3,
        query_size: 1,
        sequences: 2,
        ..hybrid_config()
    }
}

fn shifted(store: &ParamStore<f64>, direction: &[f64], step: f64) -> ParamStore<f64> {
    let mut out = store.clone();
    let mut k = 0;
    for e in out.entries_mut() {
        for v in e.value.data_mut() {
            *v += step * direction[k];
            k += 1;
        }
    }
    out
}

/// ∇E[R] by central differences of the exhaustive enumeration.
pub fn exact_gradient(
    model: &MarkovType,
    store: &ParamStore<f64>,
    pool: &ResponsePool<f64>,
    discount: &DiscountSpec,
) -> Vec<f64> {
    let h = 1e-5;
    let dim = store.num_params();
    Parallelism::Parallel.map(dim, |k| {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        let (plus, mass) = expected_reward(model, &shifted(store, &e, h), pool, discount).unwrap();
        assert!((mass - 1.0).abs() < 1e-9, "enumerated mass {mass}");
        let (minus, _) = expected_reward(model, &shifted(store, &e, -h), pool, discount).unwrap();
        (plus - minus) / (2.0 * h)
    })
}

/// A briefly trained A=3, K=1, N=2 model, so that its decisions (and hence
/// the reward) actually depend on which symbols get queried.
pub fn frozen_estimator_model(seed: u64) -> (MarkovType, ParamStore<f64>, ResponsePool<f64>) {
    let cfg = estimator_config();
    let pool = synth_pools(&SynthConfig {
        channels: 2,
        samples: 12,
        delta: 1.5,
        count_target: 2,
        count_nontarget: 2,
        seed,
    })
    .unwrap();
    let trained = train(
        &pool,
        &pool,
        &cfg,
        &TrainConfig {
            epochs: 15,
            val_trials: 1,
            seed,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    (trained.model, trained.params.cast::<f64>(), pool.cast::<f64>())
}

/// Compare the mean score-function gradient over `episodes` sampled
/// episodes with the exact gradient of E[R], projected onto the exact
/// gradient's direction plus `directions − 1` random unit vectors.
pub fn estimator_check(
    kind: DiscountKind,
    episodes: usize,
    directions: usize,
    seed: u64,
    stream_seed: u64,
) -> Vec<DirectionCheck> {
    let cfg = estimator_config();
    let mut rng = rng::seeded(seed);
    let (model, store, pool) = frozen_estimator_model(seed);
    let discount = DiscountSpec::new(kind, cfg.sequences).unwrap();
    let exact_grad = exact_gradient(&model, &store, &pool, &discount);
    let unit = |v: Vec<f64>| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
    };
    // the exact gradient's own direction carries the most signal; the rest
    // are random
    let mut dirs = vec![unit(exact_grad.clone())];
    for _ in 1..directions {
        dirs.push(unit(
            (0..exact_grad.len())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect(),
        ));
    }
    let exact: Vec<f64> = dirs
        .iter()
        .map(|u| u.iter().zip(&exact_grad).map(|(a, b)| a * b).sum())
        .collect();

    let projections = Parallelism::Parallel.map(episodes, |i| {
        let mut r = rng::stream(stream_seed, domain::ESTIMATOR, i as u64);
        let target = r.gen_range(0..cfg.alphabet);
        let g = score_function_gradient(&model, &store, &pool, target, &discount, &mut r).unwrap();
        let flat = g.flatten();
        dirs.iter()
            .map(|u| u.iter().zip(&flat).map(|(a, b)| a * b).sum::<f64>())
            .collect::<Vec<f64>>()
    });

    let m = episodes as f64;
    (0..directions)
        .map(|d| {
            let mean = projections.iter().map(|p| p[d]).sum::<f64>() / m;
            let var = projections.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            DirectionCheck {
                exact: exact[d],
                mean,
                std_error: (var / m).sqrt(),
            }
        })
        .collect()
}

/// Model seed and per-discount episode streams used by the oracle.
pub const ESTIMATOR_MODEL_SEED: u64 = 4;
pub const ESTIMATOR_EPISODES: usize = 100_000;

/// [`estimator_check`] for every discount: one frozen model, an
/// independent episode stream per discount.
pub fn estimator_suite() -> Vec<(DiscountKind, Vec<DirectionCheck>)> {
    DiscountKind::ALL
        .into_iter()
        .enumerate()
        .map(|(i, kind)| {
            let checks = estimator_check(kind, ESTIMATOR_EPISODES, 3, ESTIMATOR_MODEL_SEED, 100 + i as u64);
            (kind, checks)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scalar objective `value` with analytic gradient `gradient`.
pub struct Op<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> Differentiable<f64> for Op<V, G>
where
    V: Fn(&ParamStore<f64>, &[Tensor<f64>]) -> Result<f64>,
    G: Fn(&ParamStore<f64>, &[Tensor<f64>]) -> Result<(Gradients<f64>, Vec<Tensor<f64>>)>,
{
    fn value(&self, params: &ParamStore<f64>, inputs: &[Tensor<f64>]) -> Result<f64> {
        (self.value)(params, inputs)
    }

    fn gradient(
        &self,
        params: &ParamStore<f64>,
        inputs: &[Tensor<f64>],
    ) -> Result<(Gradients<f64>, Vec<Tensor<f64>>)> {
        (self.gradient)(params, inputs)
    }
}

fn check<D: Differentiable<f64>>(op: &D, params: &ParamStore<f64>, inputs: &[Tensor<f64>]) -> GradCheckReport {
    grad_check(op, params, inputs, GradCheckOptions::for_precision::<f64>()).unwrap()
}

pub const LAYERS: [&str; 7] = ["linear", "conv1d", "layernorm", "rect", "softmax", "mean_pool", "extractor"];

/// Finite-difference check of one layer (a random linear functional of
/// its output) with seeded random inputs and jittered parameters.
pub fn layer_gradcheck(layer: &str, seed: u64) -> GradCheckReport {
    let mut rng = rng::seeded(seed);
    let mut store = ParamStore::<f64>::new(seed);
    match layer {
        "linear" => {
            let lin = Linear::register(&mut store, "lin", 4, 3).unwrap();
            jitter(&mut store, 0.3, &mut rng);
            let w = normal(&[2, 3], &mut rng);
            let op = Op {
                value: |p: &ParamStore<f64>, x: &[Tensor<f64>]| Ok(dot(lin.forward(p, &x[0])?.data(), w.data())),
                gradient: |p: &ParamStore<f64>, x: &[Tensor<f64>]| {
                    let mut g = p.gradients();
                    let dx = lin.backward(p, &x[0], &w, &mut g);
                    Ok((g, vec![dx]))
                },
            };
            check(&op, &store, &[normal(&[2, 4], &mut rng)])
        }
        "conv1d" => {
            let conv = Conv1d::register(&mut store, "conv", 2, 3, 3, 2).unwrap();
            jitter(&mut store, 0.3, &mut rng);
            let w = normal(&[3, 5], &mut rng);
            let op = Op {
                value: |p: &ParamStore<f64>, x: &[Tensor<f64>]| Ok(dot(conv.forward(p, &x[0])?.data(), w.data())),
                gradient: |p: &ParamStore<f64>, x: &[Tensor<f64>]| {
                    let mut g = p.gradients();
                    let dx = conv.backward(p, &x[0], &w, &mut g);
                    Ok((g, vec![dx]))
                },
            };
            check(&op, &store, &[normal(&[2, 12], &mut rng)])
        }
        "layernorm" => {
            let norm = LayerNorm::register(&mut store, "norm", 5).unwrap();
            jitter(&mut store, 0.3, &mut rng);
            let w = normal(&[2, 5], &mut rng);
            let op = Op {
                value: |p: &ParamStore<f64>, x: &[Tensor<f64>]| Ok(dot(norm.forward(p, &x[0])?.0.data(), w.data())),
                gradient: |p: &ParamStore<f64>, x: &[Tensor<f64>]| {
                    let mut g = p.gradients();
                    let (_, cache) = norm.forward(p, &x[0])?;
                    let dx = norm.backward(p, &cache, &w, &mut g);
                    Ok((g, vec![dx]))
                },
            };
            check(&op, &store, &[normal(&[2, 5], &mut rng)])
        }
        "rect" => {
            let w = normal(&[3, 7], &mut rng);
            let op = Op {
                value: |_: &ParamStore<f64>, x: &[Tensor<f64>]| Ok(dot(rect(&x[0]).data(), w.data())),
                gradient: |p: &ParamStore<f64>, x: &[Tensor<f64>]| Ok((p.gradients(), vec![rect_backward(&x[0], &w)])),
            };
            check(&op, &store, &[normal(&[3, 7], &mut rng)])
        }
        "softmax" => {
            let w = normal(&[6], &mut rng);
            let op = Op {
                value: |_: &ParamStore<f64>, x: &[Tensor<f64>]| Ok(dot(&softmax(x[0].data()), w.data())),
                gradient: |p: &ParamStore<f64>, x: &[Tensor<f64>]| {
                    let probs = softmax(x[0].data());
                    Ok((p.gradients(), vec![Tensor::vector(softmax_backward(&probs, w.data()))]))
                },
            };
            check(&op, &store, &[normal(&[6], &mut rng)])
        }
        "mean_pool" => {
            let w = normal(&[3], &mut rng);
            let op = Op {
                value: |_: &ParamStore<f64>, x: &[Tensor<f64>]| Ok(dot(mean_pool_time(&x[0]).data(), w.data())),
                gradient: |p: &ParamStore<f64>, _: &[Tensor<f64>]| {
                    Ok((p.gradients(), vec![mean_pool_time_backward(w.data(), 7)]))
                },
            };
            check(&op, &store, &[normal(&[3, 7], &mut rng)])
        }
        "extractor" => {
            let ex = FeatureExtractor::register(&mut store, "ex", 2, 12, &small_conv(), 4).unwrap();
            jitter(&mut store, 0.3, &mut rng);
            let w = normal(&[4], &mut rng);
            let op = Op {
                value: |p: &ParamStore<f64>, x: &[Tensor<f64>]| Ok(dot(&ex.forward(p, &x[0])?.0, w.data())),
                gradient: |p: &ParamStore<f64>, x: &[Tensor<f64>]| {
                    let mut g = p.gradients();
                    let (_, cache) = ex.forward(p, &x[0])?;
                    let dx = ex.backward(p, &cache, w.data(), &mut g);
                    Ok((g, vec![dx]))
                },
            };
            check(&op, &store, &[normal(&[2, 12], &mut rng)])
        }
        other => panic!("no gradient check for layer `{other}`"),
    }
}

/// A jittered, untrained binary classifier on a mildly separable pool:
/// beliefs that move but rarely saturate, so threshold stops spread over
/// 1..N.
pub struct NoisyRb {
    pub classifier: BinaryClassifier,
    pub params: ParamStore<f32>,
    pub pool: ResponsePool<f32>,
}

impl NoisyRb {
    pub fn new(alphabet: usize, query_size: usize, sequences: usize, seed: u64) -> Self {
        let cfg = ModelConfig {
            alphabet,
            query_size,
            sequences,
            ..hybrid_config()
        };
        let mut store = ParamStore::<f64>::new(seed);
        let classifier = BinaryClassifier::new(&cfg, &mut store).unwrap();
        jitter(&mut store, 0.6, &mut rng::seeded(seed));
        NoisyRb {
            classifier,
            params: store.cast::<f32>(),
            pool: tiny_pool(8, 40, 1.5, seed).cast::<f32>(),
        }
    }

    pub fn decoder(&self) -> impl Decoder + '_ {
        RbDecoder::new(&self.classifier, &self.params)
    }
}

/// Raising τ from `low` to `high` under shared trial streams never makes a
/// trial stop earlier, and the shared prefix of decisions is identical.
pub fn check_stop_monotonicity(
    rb: &NoisyRb,
    seed: u64,
    low: f64,
    high: f64,
    trials: u64,
) -> std::result::Result<(), String> {
    let dec = rb.decoder();
    for trial in 0..trials {
        let run = |tau| run_decoder_trial(&dec, &rb.pool, Some(tau), &mut rng::stream(seed, domain::SESSION, trial));
        let (a, b) = (run(low).unwrap(), run(high).unwrap());
        if a.stop > b.stop || a.target != b.target || a.decisions[..] != b.decisions[..a.stop] {
            return Err(format!("trial {trial}: τ {low} stop {} vs τ {high} stop {}", a.stop, b.stop));
        }
    }
    Ok(())
}

/// Stop sequences in 1..=N, histogram totals T, n_τ and ITR identities.
pub fn check_session_aggregates(rb: &NoisyRb, seed: u64, tau: f64, trials: usize) -> std::result::Result<(), String> {
    let dec = rb.decoder();
    let n = dec.sequences();
    let cfg = SessionConfig {
        trials,
        tau,
        seed,
        parallelism: Parallelism::Parallel,
    };
    let r = run_session(&dec, &rb.pool, &cfg).map_err(|e| e.to_string())?;
    let stops: usize = r.outcomes.iter().map(|o| o.stop).sum();
    let checks = [
        ("n_tau in [1, N]", r.n_tau >= 1.0 && r.n_tau <= n as f64),
        ("stops in [1, N]", r.outcomes.iter().all(|o| (1..=n).contains(&o.stop))),
        ("histogram sums to T", r.histogram.iter().map(|h| h[0] + h[1]).sum::<usize>() == trials),
        ("histogram correct column sums to C", r.histogram.iter().map(|h| h[0]).sum::<usize>() == r.correct),
        ("n_tau is the mean stop", r.n_tau == stops as f64 / trials as f64),
        ("itr per sequence", r.itr_sequence == itr(r.alphabet, r.accuracy).unwrap() / r.n_tau),
    ];
    match checks.iter().find(|(_, ok)| !ok) {
        Some((what, _)) => Err(format!("{what} violated (τ {tau}, T {trials}, seed {seed})")),
        None => Ok(()),
    }
}
