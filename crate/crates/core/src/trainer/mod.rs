//! Rewards, discounts, the hybrid loss and the training loop.

mod exact;
mod loss;
mod rewards;
mod train;

pub use exact::{expected_reward, score_function_gradient, MAX_EPISODES};
pub use loss::{hybrid_loss, loss_action, loss_baseline, loss_reinforce, loss_total, LossBreakdown};
pub use rewards::{per_sequence_rewards, DiscountKind, DiscountSpec, RewardTrack};
pub use train::{
    train, train_with_progress, trial_gradient, tune_lambda, EpochRecord, LambdaSearch,
    TrainConfig, Trained, LAMBDA_GRID,
};
