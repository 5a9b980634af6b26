//! The hybrid objective: supervised NLL on the final belief, plus λ times
//! the baseline regression and the REINFORCE surrogate.

use crate::model::{TraceGrads, TrialTrace};
use crate::real::Real;
use crate::trainer::RewardTrack;

/// `−ln p_{N,t}`: negative log-likelihood of the target under the final belief.
pub fn loss_action<T: Real>(trace: &TrialTrace<T>) -> T {
    -trace.final_belief().probs()[trace.target].ln()
}

/// `(1/N) Σ (R_n − b_n)²`.
pub fn loss_baseline<T: Real>(track: &RewardTrack, trace: &TrialTrace<T>) -> T {
    let n = trace.len().max(1) as f64;
    let total: f64 = track
        .to_go
        .iter()
        .zip(&trace.sequences)
        .map(|(r, s)| (r - s.baseline.as_f64()).powi(2))
        .sum();
    T::lit(total / n)
}

/// `−Σ_n log π_n · (R_n − b_n)` with the advantage held constant.
pub fn loss_reinforce<T: Real>(track: &RewardTrack, trace: &TrialTrace<T>) -> T {
    track
        .to_go
        .iter()
        .zip(&trace.sequences)
        .map(|(r, s)| -s.log_prob * (T::lit(*r) - s.baseline))
        .sum()
}

pub fn loss_total<T: Real>(action: T, baseline: T, reinforce: T, lambda: f64) -> T {
    action + T::lit(lambda) * (baseline + reinforce)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub action: f64,
    pub baseline: f64,
    pub reinforce: f64,
    pub total: f64,
}

/// Value of the hybrid loss and its gradient with respect to the trace.
pub fn hybrid_loss<T: Real>(
    trace: &TrialTrace<T>,
    track: &RewardTrack,
    lambda: f64,
    hidden: usize,
) -> (LossBreakdown, TraceGrads<T>) {
    let action = loss_action(trace);
    let baseline = loss_baseline(track, trace);
    let reinforce = loss_reinforce(track, trace);
    let total = loss_total(action, baseline, reinforce, lambda);

    let n = trace.len();
    let lam = T::lit(lambda);
    let mut grads = TraceGrads::for_trace(trace, hidden);
    if n > 0 {
        let p = trace.final_belief().probs()[trace.target];
        grads.belief[n - 1][trace.target] = -T::one() / p;
    }
    let scale = T::lit(2.0 / n.max(1) as f64);
    for (i, (s, &r)) in trace.sequences.iter().zip(&track.to_go).enumerate() {
        let advantage = T::lit(r) - s.baseline;
        grads.baseline[i] = lam * scale * (s.baseline - T::lit(r));
        grads.log_prob[i] = -lam * advantage;
    }
    (
        LossBreakdown {
            action: action.as_f64(),
            baseline: baseline.as_f64(),
            reinforce: reinforce.as_f64(),
            total: total.as_f64(),
        },
        grads,
    )
}
