use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TrialTrace;
use crate::real::Real;

/// Per-sequence reward weighting d(n), n = 1..N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscountKind {
    /// (2N − n − 1) / N
    Linear,
    /// 1 / n
    Inv,
    /// 1 / n²
    Inv2,
    /// 1 / n³
    Inv3,
}

impl DiscountKind {
    pub const ALL: [DiscountKind; 4] = [
        DiscountKind::Linear,
        DiscountKind::Inv,
        DiscountKind::Inv2,
        DiscountKind::Inv3,
    ];

    /// Loss weight λ tuned for this discount.
    pub fn default_lambda(self) -> f64 {
        match self {
            DiscountKind::Linear => 0.02,
            DiscountKind::Inv => 0.02,
            DiscountKind::Inv2 => 0.01,
            DiscountKind::Inv3 => 0.1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DiscountKind::Linear => "linear",
            DiscountKind::Inv => "inv",
            DiscountKind::Inv2 => "inv2",
            DiscountKind::Inv3 => "inv3",
        }
    }
}

impl fmt::Display for DiscountKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiscountKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DiscountKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown discount `{s}` (expected linear, inv, inv2 or inv3)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscountSpec {
    kind: DiscountKind,
    sequences: usize,
}

impl DiscountSpec {
    pub fn new(kind: DiscountKind, sequences: usize) -> Result<Self> {
        let min = if kind == DiscountKind::Linear { 2 } else { 1 };
        if sequences < min {
            return Err(Error::Config(format!(
                "{kind} discount needs at least {min} sequences so every weight is positive"
            )));
        }
        Ok(DiscountSpec { kind, sequences })
    }

    pub fn kind(&self) -> DiscountKind {
        self.kind
    }

    /// d(n) for 1-based sequence index `n`.
    pub fn factor(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self.kind {
            DiscountKind::Linear => {
                let big = self.sequences as f64;
                (2.0 * big - nf - 1.0) / big
            }
            DiscountKind::Inv => 1.0 / nf,
            DiscountKind::Inv2 => 1.0 / (nf * nf),
            DiscountKind::Inv3 => 1.0 / (nf * nf * nf),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardTrack {
    /// r_n ∈ {0, 1}
    pub raw: Vec<f64>,
    /// r_n · d(n)
    pub discounted: Vec<f64>,
    /// R_n = Σ_{n' ≥ n} r_n' · d(n')
    pub to_go: Vec<f64>,
}

impl RewardTrack {
    /// Total discounted reward R.
    pub fn total(&self) -> f64 {
        self.to_go.first().copied().unwrap_or(0.0)
    }
}

/// Reward 1 at every sequence whose argmax (lowest index on ties) is the
/// target.
pub fn per_sequence_rewards<T: Real>(trace: &TrialTrace<T>, discount: &DiscountSpec) -> RewardTrack {
    let raw: Vec<f64> = trace
        .sequences
        .iter()
        .map(|s| if s.belief.argmax() == trace.target { 1.0 } else { 0.0 })
        .collect();
    let discounted: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(i, r)| r * discount.factor(i + 1))
        .collect();
    let mut to_go = vec![0.0; raw.len()];
    let mut acc = 0.0;
    for i in (0..raw.len()).rev() {
        acc += discounted[i];
        to_go[i] = acc;
    }
    RewardTrack {
        raw,
        discounted,
        to_go,
    }
}
