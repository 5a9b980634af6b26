use crate::error::{Error, Result};
use crate::real::Real;

/// Tolerance on the simplex sum.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// Probability vector over the alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief<T = f32>(Vec<T>);

impl<T: Real> Belief<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::dim("belief", "alphabet size >= 2", probs.len()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(Error::Invariant(
                "belief entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().map(|p| p.as_f64()).sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Invariant(format!("belief sums to {total}")));
        }
        Ok(Belief(probs))
    }

    pub fn uniform(alphabet: usize) -> Self {
        Belief(vec![T::one() / T::lit(alphabet as f64); alphabet])
    }

    /// Wrap a softmax output without re-validating it.
    pub(crate) fn from_softmax(probs: Vec<T>) -> Self {
        Belief(probs)
    }

    pub fn probs(&self) -> &[T] {
        &self.0
    }

    pub fn alphabet(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> T {
        self.0[self.argmax()]
    }

    pub fn is_on_simplex(&self) -> bool {
        self.0.iter().all(|p| p.is_finite() && *p >= T::zero())
            && (self.0.iter().map(|p| p.as_f64()).sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
    }

    pub fn cast<U: Real>(&self) -> Belief<U> {
        Belief(self.0.iter().map(|p| U::lit(p.as_f64())).collect())
    }
}
