use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{itr, itr_per_sequence, Decoder};
use crate::parallel::Parallelism;
use crate::rng::{self, domain, Rng};
use crate::sim::{draw_responses, sample_query, Belief, ResponsePool};

/// Relative slack on the threshold test, so an f32 belief equal to τ in
/// exact arithmetic still stops.
const TAU_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Target symbols T.
    pub trials: usize,
    /// Decision threshold τ on the maximum posterior.
    pub tau: f64,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            trials: 1000,
            tau: 0.8,
            seed: 0,
            parallelism: Parallelism::Parallel,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub target: usize,
    pub decision: usize,
    /// 1-based sequence at which the trial stopped.
    pub stop: usize,
    /// argmax of the belief after each completed sequence.
    pub decisions: Vec<usize>,
}

impl TrialOutcome {
    pub fn correct(&self) -> bool {
        self.decision == self.target
    }
}

/// One trial: target drawn uniformly from `rng`, then queries, responses
/// and belief updates until the max posterior reaches `tau` or N sequences
/// have run. `tau = None` always runs all N.
pub fn run_decoder_trial<D: Decoder>(
    decoder: &D,
    pool: &ResponsePool<f32>,
    tau: Option<f64>,
    rng: &mut Rng,
) -> Result<TrialOutcome> {
    let alphabet = decoder.alphabet();
    let last = decoder.sequences();
    let target = rng.gen_range(0..alphabet);
    let mut belief = Belief::uniform(alphabet);
    let mut state = decoder.start();
    let mut decisions = Vec::with_capacity(last);
    for n in 1..=last {
        let query = sample_query(&belief, decoder.query_size(), rng)?;
        let (responses, _) = draw_responses(&query, target, pool, rng);
        belief = decoder.observe(&mut state, &belief, &query, &responses)?;
        let decision = belief.argmax();
        decisions.push(decision);
        let confident =
            tau.is_some_and(|t| belief.max() as f64 >= t * (1.0 - TAU_SLACK));
        if confident || n == last {
            return Ok(TrialOutcome {
                target,
                decision,
                stop: n,
                decisions,
            });
        }
    }
    Err(Error::Config("decoder runs zero sequences".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub alphabet: usize,
    pub sequences: usize,
    pub outcomes: Vec<TrialOutcome>,
    pub correct: usize,
    /// C / T
    pub accuracy: f64,
    /// Mean stop sequence n_τ.
    pub n_tau: f64,
    pub itr_selection: f64,
    pub itr_sequence: f64,
    /// `[correct, incorrect]` decisions made at each sequence 1..N.
    pub histogram: Vec<[usize; 2]>,
}

impl SessionResult {
    pub fn from_outcomes(alphabet: usize, sequences: usize, outcomes: Vec<TrialOutcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Config("session has no trials".into()));
        }
        let t = outcomes.len() as f64;
        let correct = outcomes.iter().filter(|o| o.correct()).count();
        let accuracy = correct as f64 / t;
        let n_tau = outcomes.iter().map(|o| o.stop as f64).sum::<f64>() / t;
        let mut histogram = vec![[0usize; 2]; sequences];
        for o in &outcomes {
            histogram[o.stop - 1][usize::from(!o.correct())] += 1;
        }
        Ok(SessionResult {
            alphabet,
            sequences,
            correct,
            accuracy,
            n_tau,
            itr_selection: itr(alphabet, accuracy)?,
            itr_sequence: itr_per_sequence(alphabet, accuracy, n_tau)?,
            histogram,
            outcomes,
        })
    }
}

fn run_trials<D: Decoder>(
    decoder: &D,
    pool: &ResponsePool<f32>,
    trials: usize,
    tau: Option<f64>,
    seed: u64,
    stream_domain: u64,
    parallelism: Parallelism,
) -> Result<Vec<TrialOutcome>> {
    parallelism.try_map(trials, |i| {
        let mut rng = rng::stream(seed, stream_domain, i as u64);
        run_decoder_trial(decoder, pool, tau, &mut rng)
    })
}

/// Threshold-stopping test session over `cfg.trials` uniform targets.
pub fn run_session<D: Decoder>(
    decoder: &D,
    pool: &ResponsePool<f32>,
    cfg: &SessionConfig,
) -> Result<SessionResult> {
    cfg.validate()?;
    let outcomes = run_trials(
        decoder,
        pool,
        cfg.trials,
        Some(cfg.tau),
        cfg.seed,
        domain::SESSION,
        cfg.parallelism,
    )?;
    SessionResult::from_outcomes(decoder.alphabet(), decoder.sequences(), outcomes)
}

fn accuracy_by_sequence(outcomes: &[TrialOutcome], sequences: usize) -> Vec<f64> {
    let t = outcomes.len() as f64;
    (0..sequences)
        .map(|n| {
            outcomes
                .iter()
                .filter(|o| o.decisions[n] == o.target)
                .count() as f64
                / t
        })
        .collect()
}

/// Accuracy of argmax p_n at every n = 1..N with no early stopping. Uses
/// the same trial streams as [`run_session`].
pub fn sweep_no_threshold<D: Decoder>(
    decoder: &D,
    pool: &ResponsePool<f32>,
    trials: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let outcomes = run_trials(decoder, pool, trials, None, seed, domain::SESSION, parallelism)?;
    Ok(accuracy_by_sequence(&outcomes, decoder.sequences()))
}

/// No-threshold accuracy at sequence N on validation streams.
pub fn final_accuracy<D: Decoder>(
    decoder: &D,
    pool: &ResponsePool<f32>,
    trials: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<f64> {
    if trials == 0 {
        return Ok(0.0);
    }
    let outcomes = run_trials(decoder, pool, trials, None, seed, domain::VALID, parallelism)?;
    Ok(accuracy_by_sequence(&outcomes, decoder.sequences())
        .last()
        .copied()
        .unwrap_or(0.0))
}
