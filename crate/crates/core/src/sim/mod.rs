//! The typing environment: beliefs over the alphabet, query sampling,
//! response pools and their synthetic generator.

mod belief;
mod pool;
mod query;

pub use belief::{Belief, SIMPLEX_TOL};
pub use pool::{
    draw_responses, load_pools, save_pools, synth_pools, target_pattern, DatasetManifest,
    DrawnItems, ResponsePool, SynthConfig, DATASET_MANIFEST,
};
pub use query::{query_log_prob, query_log_prob_grad, sample_query, Query, QUERY_FLOOR};

/// Train / validation / test partition of one dataset.
#[derive(Debug, Clone)]
pub struct DataSplit<T = f32> {
    pub train: ResponsePool<T>,
    pub validation: ResponsePool<T>,
    pub test: ResponsePool<T>,
}

impl<T: crate::Real> DataSplit<T> {
    /// Hold out `test_fraction` of each class for testing, then
    /// `val_fraction` of the remainder for validation. `seed` selects the
    /// split.
    pub fn new(
        pool: &ResponsePool<T>,
        test_fraction: f64,
        val_fraction: f64,
        seed: u64,
    ) -> crate::Result<Self> {
        let mut rng = crate::rng::stream(seed, crate::rng::domain::SPLIT, 0);
        let (rest, test) = pool.split(test_fraction, &mut rng)?;
        let (train, validation) = rest.split(val_fraction, &mut rng)?;
        Ok(DataSplit {
            train,
            validation,
            test,
        })
    }
}
