use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One convolution layer of the feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub const fn new(out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            out_channels,
            kernel,
            stride,
        }
    }
}

pub const CONV_LAYERS: usize = 5;

pub const DEFAULT_CONV: [ConvSpec; CONV_LAYERS] = [
    ConvSpec::new(8, 7, 2),
    ConvSpec::new(16, 5, 2),
    ConvSpec::new(16, 5, 1),
    ConvSpec::new(32, 3, 1),
    ConvSpec::new(32, 3, 1),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Alphabet size A.
    pub alphabet: usize,
    /// Symbols per query K.
    pub query_size: usize,
    /// Sequences per trial N.
    pub sequences: usize,
    /// Response channels c.
    pub channels: usize,
    /// Response samples per channel f.
    pub samples: usize,
    /// Per-symbol feature length L.
    pub feature_len: usize,
    /// Hidden state length v.
    pub hidden: usize,
    pub conv: Vec<ConvSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            alphabet: 28,
            query_size: 10,
            sequences: 10,
            channels: 2,
            samples: 48,
            feature_len: 64,
            hidden: 128,
            conv: DEFAULT_CONV.to_vec(),
        }
    }
}

impl ModelConfig {
    /// Time length after the convolution stack, if every layer fits.
    pub fn conv_output_len(&self) -> Option<usize> {
        self.conv.iter().try_fold(self.samples, |time, layer| {
            (layer.stride > 0 && time >= layer.kernel)
                .then(|| (time - layer.kernel) / layer.stride + 1)
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alphabet", self.alphabet),
            ("query_size", self.query_size),
            ("sequences", self.sequences),
            ("channels", self.channels),
            ("samples", self.samples),
            ("feature_len", self.feature_len),
            ("hidden", self.hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if self.alphabet < 2 {
            return Err(Error::Config("model.alphabet must be >= 2".into()));
        }
        if self.query_size > self.alphabet {
            return Err(Error::Config(format!(
                "model.query_size {} exceeds alphabet {}",
                self.query_size, self.alphabet
            )));
        }
        if self.hidden < 2 {
            return Err(Error::Config("model.hidden must be >= 2".into()));
        }
        if self.conv.len() != CONV_LAYERS {
            return Err(Error::Config(format!(
                "feature extractor needs exactly {CONV_LAYERS} convolution layers, got {}",
                self.conv.len()
            )));
        }
        if self
            .conv
            .iter()
            .any(|c| c.out_channels == 0 || c.kernel == 0 || c.stride == 0)
        {
            return Err(Error::Config("convolution sizes must be positive".into()));
        }
        if self.conv_output_len().is_none() {
            return Err(Error::Config(format!(
                "convolution stack does not fit {} samples",
                self.samples
            )));
        }
        Ok(())
    }

    /// Parse `out:kernel:stride` triples separated by commas.
    pub fn parse_conv(spec: &str) -> Result<Vec<ConvSpec>> {
        spec.split(',')
            .map(|layer| {
                let parts: Vec<usize> = layer
                    .trim()
                    .split(':')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Config(format!("conv layer `{layer}`: {e}")))?;
                match parts.as_slice() {
                    &[o, k, s] => Ok(ConvSpec::new(o, k, s)),
                    _ => Err(Error::Config(format!(
                        "conv layer `{layer}` must be out:kernel:stride"
                    ))),
                }
            })
            .collect()
    }

    pub fn format_conv(conv: &[ConvSpec]) -> String {
        conv.iter()
            .map(|c| format!("{}:{}:{}", c.out_channels, c.kernel, c.stride))
            .collect::<Vec<_>>()
            .join(",")
    }
}
