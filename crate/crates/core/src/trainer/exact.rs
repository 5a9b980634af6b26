//! Exact expected reward by exhaustive enumeration, and the single-episode
//! score-function estimate of its gradient. Only feasible for tiny
//! configurations.

use crate::error::{Error, Result};
use crate::model::{Episode, MarkovType, TraceGrads};
use crate::nn::{Gradients, ParamStore};
use crate::real::Real;
use crate::rng::Rng;
use crate::sim::{Query, ResponsePool};
use crate::trainer::{per_sequence_rewards, DiscountSpec};

/// Refuse enumerations larger than this many episodes.
pub const MAX_EPISODES: usize = 2_000_000;

fn permutations(alphabet: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..size {
        let mut next = Vec::new();
        for prefix in &out {
            for s in 0..alphabet {
                if !prefix.contains(&s) {
                    let mut p = prefix.clone();
                    p.push(s);
                    next.push(p);
                }
            }
        }
        out = next;
    }
    out
}

fn item_choices(query: &[usize], target: usize, pool: &ResponsePool<impl Real>) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &s in query {
        let count = if s == target {
            pool.count_target()
        } else {
            pool.count_nontarget()
        };
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..count).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

/// E[R] over uniform targets, sampled queries and drawn pool items.
/// Also returns the total enumerated probability (should be 1).
pub fn expected_reward<T: Real>(
    model: &MarkovType,
    params: &ParamStore<T>,
    pool: &ResponsePool<T>,
    discount: &DiscountSpec,
) -> Result<(f64, f64)> {
    let cfg = model.config();
    let queries = permutations(cfg.alphabet, cfg.query_size);
    let mut steps: Vec<(usize, (Query, Vec<usize>))> = Vec::new();
    for target in 0..cfg.alphabet {
        for q in &queries {
            for items in item_choices(q, target, pool) {
                steps.push((target, (Query::new(q.clone(), cfg.alphabet)?, items)));
            }
        }
    }
    let per_step = steps.len() / cfg.alphabet;
    let total = (per_step as f64).powi(cfg.sequences as i32) * cfg.alphabet as f64;
    if total > MAX_EPISODES as f64 {
        return Err(Error::Config(format!(
            "enumeration of {total} episodes exceeds {MAX_EPISODES}"
        )));
    }

    let mut expected = 0.0;
    let mut mass = 0.0;
    let mut stack: Vec<Episode> = (0..cfg.alphabet)
        .map(|target| Episode {
            target,
            steps: Vec::new(),
        })
        .collect();
    while let Some(ep) = stack.pop() {
        if ep.steps.len() == cfg.sequences {
            let trace = model.replay(params, pool, &ep)?.trace;
            let mut log_p = -(cfg.alphabet as f64).ln();
            for ((query, _), s) in ep.steps.iter().zip(&trace.sequences) {
                log_p += s.log_prob.as_f64();
                for &sym in query.symbols() {
                    let count = if sym == ep.target {
                        pool.count_target()
                    } else {
                        pool.count_nontarget()
                    };
                    log_p -= (count as f64).ln();
                }
            }
            let p = log_p.exp();
            mass += p;
            expected += p * per_sequence_rewards(&trace, discount).total();
            continue;
        }
        for (target, step) in &steps {
            if *target == ep.target {
                let mut next = ep.clone();
                next.steps.push(step.clone());
                stack.push(next);
            }
        }
    }
    Ok((expected, mass))
}

/// `Σ_n ∇ log π_n · (R_n − b_n)` for one sampled episode: an unbiased
/// estimate of ∇E[R] because each b_n is read from the hidden state the
/// n-th query was sampled from.
pub fn score_function_gradient<T: Real>(
    model: &MarkovType,
    params: &ParamStore<T>,
    pool: &ResponsePool<T>,
    target: usize,
    discount: &DiscountSpec,
    rng: &mut Rng,
) -> Result<Gradients<T>> {
    let rollout = model.rollout(params, target, pool, rng)?;
    let track = per_sequence_rewards(&rollout.trace, discount);
    let mut upstream = TraceGrads::for_trace(&rollout.trace, model.config().hidden);
    for (i, (s, r)) in rollout.trace.sequences.iter().zip(&track.to_go).enumerate() {
        upstream.log_prob[i] = T::lit(*r) - s.baseline;
    }
    let mut grads = params.gradients();
    model.backward(params, &rollout, &upstream, &mut grads)?;
    Ok(grads)
}
