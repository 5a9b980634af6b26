mod config;
mod extractor;
mod markov;

pub use config::{ConvSpec, ModelConfig, CONV_LAYERS, DEFAULT_CONV};
pub use extractor::{ExtractCache, FeatureExtractor};
pub(crate) use markov::check_layout;
pub use markov::{Episode, MarkovType, Rollout, SequenceRecord, StepCache, TraceGrads, TrialTrace};
