//! Query sampling from a belief and the exact log-probability of a sampled
//! query.
//!
//! Symbols are drawn one at a time without replacement, each draw
//! proportional to the floored belief `m_i = max(p_i, QUERY_FLOOR)` over the
//! symbols not yet drawn. Normalizing `m` first does not change any
//! conditional draw probability, so the log-probability of an ordered query
//! is `Σ_j [ln m_{q_j} − ln Σ_{i not in q_{<j}} m_i]`.

use std::collections::HashSet;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Rng;
use crate::sim::Belief;

/// Lower bound applied to every belief entry before sampling.
pub const QUERY_FLOOR: f64 = 1e-6;

/// Ordered list of distinct symbols shown in one sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query(Vec<usize>);

impl Query {
    pub fn new(symbols: Vec<usize>, alphabet: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(symbols.len());
        for &s in &symbols {
            if s >= alphabet {
                return Err(Error::Invariant(format!(
                    "query symbol {s} outside alphabet of {alphabet}"
                )));
            }
            if !seen.insert(s) {
                return Err(Error::Invariant(format!("query repeats symbol {s}")));
            }
        }
        Ok(Query(symbols))
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, symbol: usize) -> Option<usize> {
        self.0.iter().position(|&s| s == symbol)
    }

    pub fn contains(&self, symbol: usize) -> bool {
        self.0.contains(&symbol)
    }
}

fn floored<T: Real>(belief: &Belief<T>) -> Vec<f64> {
    belief
        .probs()
        .iter()
        .map(|p| p.as_f64().max(QUERY_FLOOR))
        .collect()
}

pub fn sample_query<T: Real>(belief: &Belief<T>, size: usize, rng: &mut Rng) -> Result<Query> {
    let alphabet = belief.alphabet();
    if size > alphabet {
        return Err(Error::Config(format!(
            "query size {size} exceeds alphabet size {alphabet}"
        )));
    }
    let mut mass = floored(belief);
    let mut remaining: f64 = mass.iter().sum();
    let mut symbols = Vec::with_capacity(size);
    for _ in 0..size {
        let u = rng.gen::<f64>() * remaining;
        let mut acc = 0.0;
        let mut pick = None;
        let mut last_available = 0;
        for (i, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            last_available = i;
            acc += m;
            if u < acc {
                pick = Some(i);
                break;
            }
        }
        // rounding can leave u just past the accumulated total
        let pick = pick.unwrap_or(last_available);
        symbols.push(pick);
        remaining -= mass[pick];
        mass[pick] = 0.0;
    }
    Ok(Query(symbols))
}

fn check_query<T: Real>(belief: &Belief<T>, query: &Query) -> Result<()> {
    Query::new(query.0.clone(), belief.alphabet()).map(|_| ())
}

/// Log-probability that [`sample_query`] produces exactly `query` (in order).
pub fn query_log_prob<T: Real>(belief: &Belief<T>, query: &Query) -> Result<T> {
    check_query(belief, query)?;
    let floor = T::lit(QUERY_FLOOR);
    let mass: Vec<T> = belief
        .probs()
        .iter()
        .map(|&p| if p > floor { p } else { floor })
        .collect();
    let mut remaining: T = mass.iter().copied().sum();
    let mut total = T::zero();
    for &s in query.symbols() {
        total += mass[s].ln() - remaining.ln();
        remaining -= mass[s];
    }
    Ok(total)
}

/// Gradient of [`query_log_prob`] with respect to the belief entries.
/// Entries clamped at the floor receive zero gradient.
pub fn query_log_prob_grad<T: Real>(belief: &Belief<T>, query: &Query) -> Result<Vec<T>> {
    check_query(belief, query)?;
    let floor = T::lit(QUERY_FLOOR);
    let probs = belief.probs();
    let mass: Vec<T> = probs
        .iter()
        .map(|&p| if p > floor { p } else { floor })
        .collect();
    let mut drawn = vec![false; mass.len()];
    let mut remaining: T = mass.iter().copied().sum();
    let mut grad = vec![T::zero(); mass.len()];
    for &s in query.symbols() {
        grad[s] += T::one() / mass[s];
        let inv = T::one() / remaining;
        for (i, g) in grad.iter_mut().enumerate() {
            if !drawn[i] {
                *g -= inv;
            }
        }
        drawn[s] = true;
        remaining -= mass[s];
    }
    for (g, &p) in grad.iter_mut().zip(probs) {
        if p <= floor {
            *g = T::zero();
        }
    }
    Ok(grad)
}
