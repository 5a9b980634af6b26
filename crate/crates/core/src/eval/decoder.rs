use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MarkovType;
use crate::nn::{ParamStore, Tensor};
use crate::rb::{bayes_update, binary_forward, BinaryClassifier};
use crate::sim::{Belief, Query};

/// A frozen belief-updating policy that the session harness can drive.
pub trait Decoder: Sync {
    type State: Send;

    fn alphabet(&self) -> usize;
    fn query_size(&self) -> usize;
    fn sequences(&self) -> usize;

    /// State before the first sequence (the belief is always uniform).
    fn start(&self) -> Self::State;

    /// Consume the `[K, c, f]` responses to `query`, returning the new belief.
    fn observe(
        &self,
        state: &mut Self::State,
        belief: &Belief<f32>,
        query: &Query,
        responses: &Tensor<f32>,
    ) -> Result<Belief<f32>>;
}

pub struct MarkovDecoder<'a> {
    model: &'a MarkovType,
    params: &'a ParamStore<f32>,
}

impl<'a> MarkovDecoder<'a> {
    pub fn new(model: &'a MarkovType, params: &'a ParamStore<f32>) -> Self {
        MarkovDecoder { model, params }
    }
}

impl Decoder for MarkovDecoder<'_> {
    /// Hidden state h_{n−1}.
    type State = Vec<f32>;

    fn alphabet(&self) -> usize {
        self.model.config().alphabet
    }

    fn query_size(&self) -> usize {
        self.model.config().query_size
    }

    fn sequences(&self) -> usize {
        self.model.config().sequences
    }

    fn start(&self) -> Vec<f32> {
        self.model.initial_hidden()
    }

    fn observe(
        &self,
        state: &mut Vec<f32>,
        _belief: &Belief<f32>,
        query: &Query,
        responses: &Tensor<f32>,
    ) -> Result<Belief<f32>> {
        let (h, belief) = self.model.step(self.params, state, query, responses)?;
        *state = h;
        Ok(belief)
    }
}

pub struct RbDecoder<'a> {
    classifier: &'a BinaryClassifier,
    params: &'a ParamStore<f32>,
}

impl<'a> RbDecoder<'a> {
    pub fn new(classifier: &'a BinaryClassifier, params: &'a ParamStore<f32>) -> Self {
        RbDecoder { classifier, params }
    }
}

impl Decoder for RbDecoder<'_> {
    type State = ();

    fn alphabet(&self) -> usize {
        self.classifier.config().alphabet
    }

    fn query_size(&self) -> usize {
        self.classifier.config().query_size
    }

    fn sequences(&self) -> usize {
        self.classifier.config().sequences
    }

    fn start(&self) {}

    fn observe(
        &self,
        _state: &mut (),
        belief: &Belief<f32>,
        query: &Query,
        responses: &Tensor<f32>,
    ) -> Result<Belief<f32>> {
        let scores = (0..query.len())
            .map(|k| binary_forward(self.classifier, self.params, &responses.item_tensor(k)))
            .collect::<Result<Vec<f32>>>()?;
        bayes_update(belief, query, &scores)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Markovtype,
    Rb1d,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Markovtype => "markovtype",
            Method::Rb1d => "rb1d",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markovtype" => Ok(Method::Markovtype),
            "rb1d" => Ok(Method::Rb1d),
            _ => Err(Error::Config(format!(
                "unknown method `{s}` (expected markovtype or rb1d)"
            ))),
        }
    }
}
