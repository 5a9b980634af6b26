use crate::error::{Error, Result};
use crate::model::ConvSpec;
use crate::nn::{
    mean_pool_time, mean_pool_time_backward, rect, rect_backward, Conv1d, Gradients, Linear,
    ParamStore, Tensor,
};
use crate::real::Real;

/// Convolution stack over time (each layer followed by rect), mean-pool
/// over time, then a linear map to the feature length.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    convs: Vec<Conv1d>,
    projection: Linear,
    channels: usize,
    samples: usize,
}

#[derive(Debug, Clone)]
pub struct ExtractCache<T> {
    /// Input of each convolution.
    inputs: Vec<Tensor<T>>,
    /// Output of each convolution before rect.
    outputs: Vec<Tensor<T>>,
    pooled: Tensor<T>,
}

impl FeatureExtractor {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        samples: usize,
        conv: &[ConvSpec],
        feature_len: usize,
    ) -> Result<Self> {
        let mut convs = Vec::with_capacity(conv.len());
        let mut in_ch = channels;
        for (i, spec) in conv.iter().enumerate() {
            convs.push(Conv1d::register(
                store,
                &format!("{prefix}.conv{i}"),
                in_ch,
                spec.out_channels,
                spec.kernel,
                spec.stride,
            )?);
            in_ch = spec.out_channels;
        }
        let projection = Linear::register(store, &format!("{prefix}.proj"), in_ch, feature_len)?;
        Ok(FeatureExtractor {
            convs,
            projection,
            channels,
            samples,
        })
    }

    pub fn feature_len(&self) -> usize {
        self.projection.out_dim
    }

    pub fn forward<T: Real>(
        &self,
        params: &ParamStore<T>,
        response: &Tensor<T>,
    ) -> Result<(Vec<T>, ExtractCache<T>)> {
        if response.shape() != [self.channels, self.samples] {
            return Err(Error::dim(
                "response",
                format!("[{}, {}]", self.channels, self.samples),
                format!("{:?}", response.shape()),
            ));
        }
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut outputs = Vec::with_capacity(self.convs.len());
        let mut x = response.clone();
        for conv in &self.convs {
            let y = conv.forward(params, &x)?;
            let next = rect(&y);
            inputs.push(x);
            outputs.push(y);
            x = next;
        }
        let pooled = mean_pool_time(&x);
        let features = self.projection.apply(params, pooled.data());
        Ok((
            features,
            ExtractCache {
                inputs,
                outputs,
                pooled,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the response gradient.
    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        cache: &ExtractCache<T>,
        grad_features: &[T],
        grads: &mut Gradients<T>,
    ) -> Tensor<T> {
        self.projection
            .accumulate_param_grads(cache.pooled.data(), grad_features, grads);
        let d_pooled = self
            .projection
            .input_grad(params, grad_features, 0..self.projection.in_dim);
        let last = cache.outputs.last().expect("at least one conv");
        let mut grad = mean_pool_time_backward(&d_pooled, last.dim(1));
        for ((conv, input), output) in self
            .convs
            .iter()
            .zip(&cache.inputs)
            .zip(&cache.outputs)
            .rev()
        {
            let d_out = rect_backward(output, &grad);
            grad = conv.backward(params, input, &d_out, grads);
        }
        grad
    }
}
