//! Differentiable layers. Each layer is a set of parameter handles; forward
//! passes read a [`ParamStore`], backward passes accumulate into a
//! [`Gradients`] buffer and return the input gradient.

use crate::error::{Error, Result};
use crate::nn::{Gradients, ParamId, ParamStore, Tensor};
use crate::real::Real;

/// Variance stabilizer for [`LayerNorm`].
pub const LAYERNORM_EPS: f64 = 1e-5;

/// Affine map over the last axis; weight `(in, out)`, bias `(out)`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Self> {
        let weight =
            store.insert_glorot(&format!("{name}.weight"), &[in_dim, out_dim], in_dim, out_dim)?;
        let bias = store.insert(&format!("{name}.bias"), Tensor::zeros(&[out_dim]))?;
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    /// Look up an existing `name.weight` / `name.bias` pair.
    pub fn bind<T: Real>(store: &ParamStore<T>, name: &str) -> Result<Self> {
        let weight = store.id(&format!("{name}.weight"))?;
        let bias = store.id(&format!("{name}.bias"))?;
        let w = store.value(weight);
        if w.rank() != 2 {
            return Err(Error::dim(format!("{name}.weight"), "rank 2", w.rank()));
        }
        let (in_dim, out_dim) = (w.dim(0), w.dim(1));
        store
            .value(bias)
            .expect_shape(&format!("{name}.bias"), &[out_dim])?;
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<T: Real>(&self, params: &ParamStore<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
        if input.last_dim() != self.in_dim || input.is_empty() {
            return Err(Error::dim(
                "linear input",
                format!("last dimension {}", self.in_dim),
                format!("{:?}", input.shape()),
            ));
        }
        let rows = input.len() / self.in_dim;
        let mut shape = input.shape().to_vec();
        *shape.last_mut().unwrap() = self.out_dim;
        let mut out = Vec::with_capacity(rows * self.out_dim);
        for r in 0..rows {
            let x = &input.data()[r * self.in_dim..(r + 1) * self.in_dim];
            out.extend(self.apply(params, x));
        }
        Tensor::from_vec(&shape, out)
    }

    /// Single-vector forward on a slice of length `in_dim`.
    pub fn apply<T: Real>(&self, params: &ParamStore<T>, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.in_dim);
        let w = params.value(self.weight).data();
        let mut y = params.value(self.bias).data().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            // Unqueried alphabet rows are exact zeros; skipping them is exact.
            if xi == T::zero() {
                continue;
            }
            let row = &w[i * self.out_dim..(i + 1) * self.out_dim];
            for (yj, &wj) in y.iter_mut().zip(row) {
                *yj += xi * wj;
            }
        }
        y
    }

    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Tensor<T> {
        let rows = input.len() / self.in_dim;
        let mut dx = Vec::with_capacity(input.len());
        for r in 0..rows {
            let x = &input.data()[r * self.in_dim..(r + 1) * self.in_dim];
            let dy = &grad_out.data()[r * self.out_dim..(r + 1) * self.out_dim];
            self.accumulate_param_grads(x, dy, grads);
            dx.extend(self.input_grad(params, dy, 0..self.in_dim));
        }
        Tensor::from_vec(input.shape(), dx).expect("input shape")
    }

    /// Weight and bias gradients for one input/output-gradient pair.
    pub fn accumulate_param_grads<T: Real>(&self, x: &[T], dy: &[T], grads: &mut Gradients<T>) {
        for (b, &g) in grads.get_mut(self.bias).data_mut().iter_mut().zip(dy) {
            *b += g;
        }
        let dw = grads.get_mut(self.weight).data_mut();
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let row = &mut dw[i * self.out_dim..(i + 1) * self.out_dim];
            for (w, &g) in row.iter_mut().zip(dy) {
                *w += xi * g;
            }
        }
    }

    /// Input gradient restricted to input indices in `range`.
    pub fn input_grad<T: Real>(
        &self,
        params: &ParamStore<T>,
        dy: &[T],
        range: std::ops::Range<usize>,
    ) -> Vec<T> {
        let w = params.value(self.weight).data();
        range
            .map(|i| {
                w[i * self.out_dim..(i + 1) * self.out_dim]
                    .iter()
                    .zip(dy)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Valid (unpadded) cross-correlation along the time axis.
/// Weight `(out_ch, in_ch, kernel)`, bias `(out_ch)`, input `(in_ch, time)`.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "{name}: kernel and stride must be positive"
            )));
        }
        let weight = store.insert_glorot(
            &format!("{name}.weight"),
            &[out_channels, in_channels, kernel],
            in_channels * kernel,
            out_channels * kernel,
        )?;
        let bias = store.insert(&format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Conv1d {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
        })
    }

    pub fn bind<T: Real>(store: &ParamStore<T>, name: &str, stride: usize) -> Result<Self> {
        let weight = store.id(&format!("{name}.weight"))?;
        let bias = store.id(&format!("{name}.bias"))?;
        let w = store.value(weight);
        if w.rank() != 3 {
            return Err(Error::dim(format!("{name}.weight"), "rank 3", w.rank()));
        }
        store
            .value(bias)
            .expect_shape(&format!("{name}.bias"), &[w.dim(0)])?;
        Ok(Conv1d {
            weight,
            bias,
            out_channels: w.dim(0),
            in_channels: w.dim(1),
            kernel: w.dim(2),
            stride,
        })
    }

    pub fn output_len(&self, time: usize) -> Option<usize> {
        (time >= self.kernel).then(|| (time - self.kernel) / self.stride + 1)
    }

    pub fn forward<T: Real>(&self, params: &ParamStore<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
        if input.rank() != 2 || input.dim(0) != self.in_channels {
            return Err(Error::dim(
                "conv1d input",
                format!("[{}, time]", self.in_channels),
                format!("{:?}", input.shape()),
            ));
        }
        let time = input.dim(1);
        let out_len = self.output_len(time).ok_or_else(|| {
            Error::dim(
                "conv1d input",
                format!("time >= kernel {}", self.kernel),
                time,
            )
        })?;
        let w = params.value(self.weight).data();
        let b = params.value(self.bias).data();
        let x = input.data();
        let k = self.kernel;
        let mut out = vec![T::zero(); self.out_channels * out_len];
        for o in 0..self.out_channels {
            let y = &mut out[o * out_len..(o + 1) * out_len];
            y.iter_mut().for_each(|v| *v = b[o]);
            for c in 0..self.in_channels {
                let wk = &w[(o * self.in_channels + c) * k..][..k];
                let xc = &x[c * time..(c + 1) * time];
                for (j, &wj) in wk.iter().enumerate() {
                    if self.stride == 1 {
                        for (ys, &xv) in y.iter_mut().zip(&xc[j..j + out_len]) {
                            *ys += wj * xv;
                        }
                    } else {
                        let taps = xc[j..].iter().step_by(self.stride);
                        for (ys, &xv) in y.iter_mut().zip(taps) {
                            *ys += wj * xv;
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[self.out_channels, out_len], out)
    }

    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Tensor<T> {
        let time = input.dim(1);
        let out_len = grad_out.dim(1);
        let k = self.kernel;
        let x = input.data();
        let dy = grad_out.data();
        let w = params.value(self.weight).data();
        let mut dx = vec![T::zero(); input.len()];

        {
            let db = grads.get_mut(self.bias).data_mut();
            for o in 0..self.out_channels {
                db[o] += dy[o * out_len..(o + 1) * out_len].iter().copied().sum();
            }
        }
        let dw = grads.get_mut(self.weight).data_mut();
        for o in 0..self.out_channels {
            let dyo = &dy[o * out_len..(o + 1) * out_len];
            for c in 0..self.in_channels {
                let base = (o * self.in_channels + c) * k;
                let wk = &w[base..base + k];
                let dwk = &mut dw[base..base + k];
                let xc = &x[c * time..(c + 1) * time];
                let dxc = &mut dx[c * time..(c + 1) * time];
                for (s, &g) in dyo.iter().enumerate() {
                    if g == T::zero() {
                        continue;
                    }
                    let start = s * self.stride;
                    let window = &xc[start..start + k];
                    let dwindow = &mut dxc[start..start + k];
                    for (((dwj, dxj), &xj), &wj) in
                        dwk.iter_mut().zip(dwindow).zip(window).zip(wk)
                    {
                        *dwj += g * xj;
                        *dxj += g * wj;
                    }
                }
            }
        }
        Tensor::from_vec(input.shape(), dx).expect("input shape")
    }
}

/// Elementwise max(x, 0).
pub fn rect<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Gradient of [`rect`]: passes `grad_out` where the input was positive.
pub fn rect_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Normalizes the last axis, then applies a learned per-feature scale and
/// shift (initialized to 1 and 0).
#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub scale: ParamId,
    pub shift: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
}

impl LayerNorm {
    pub fn register<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::dim(name, "feature dimension >= 2", dim));
        }
        let scale = store.insert(&format!("{name}.scale"), Tensor::full(&[dim], T::one()))?;
        let shift = store.insert(&format!("{name}.shift"), Tensor::zeros(&[dim]))?;
        Ok(LayerNorm { scale, shift, dim })
    }

    pub fn bind<T: Real>(store: &ParamStore<T>, name: &str) -> Result<Self> {
        let scale = store.id(&format!("{name}.scale"))?;
        let shift = store.id(&format!("{name}.shift"))?;
        let dim = store.value(scale).len();
        store
            .value(shift)
            .expect_shape(&format!("{name}.shift"), &[dim])?;
        Ok(LayerNorm { scale, shift, dim })
    }

    pub fn forward<T: Real>(
        &self,
        params: &ParamStore<T>,
        input: &Tensor<T>,
    ) -> Result<(Tensor<T>, LayerNormCache<T>)> {
        let d = input.last_dim();
        if d != self.dim || d < 2 {
            return Err(Error::dim(
                "layernorm input",
                format!("last dimension {} (>= 2)", self.dim),
                format!("{:?}", input.shape()),
            ));
        }
        let gamma = params.value(self.scale).data();
        let beta = params.value(self.shift).data();
        let eps = T::lit(LAYERNORM_EPS);
        let n = T::lit(d as f64);
        let rows = input.len() / d;
        let mut out = Vec::with_capacity(input.len());
        let mut normalized = Vec::with_capacity(input.len());
        let mut inv_std = Vec::with_capacity(rows);
        for x in input.data().chunks(d) {
            let mean = x.iter().copied().sum::<T>() / n;
            let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for ((&v, &g), &b) in x.iter().zip(gamma).zip(beta) {
                let xhat = (v - mean) * inv;
                normalized.push(xhat);
                out.push(g * xhat + b);
            }
        }
        Ok((
            Tensor::from_vec(input.shape(), out)?,
            LayerNormCache {
                normalized,
                inv_std,
            },
        ))
    }

    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        cache: &LayerNormCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Tensor<T> {
        let d = self.dim;
        let n = T::lit(d as f64);
        let gamma = params.value(self.scale).data();
        let mut dx = Vec::with_capacity(grad_out.len());
        let mut dgamma = vec![T::zero(); d];
        let mut dbeta = vec![T::zero(); d];
        for ((dy, xhat), &inv) in grad_out
            .data()
            .chunks(d)
            .zip(cache.normalized.chunks(d))
            .zip(&cache.inv_std)
        {
            let mut mean_dxhat = T::zero();
            let mut mean_dxhat_xhat = T::zero();
            for j in 0..d {
                dgamma[j] += dy[j] * xhat[j];
                dbeta[j] += dy[j];
                let dxh = dy[j] * gamma[j];
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xhat[j];
            }
            mean_dxhat /= n;
            mean_dxhat_xhat /= n;
            for j in 0..d {
                let dxh = dy[j] * gamma[j];
                dx.push(inv * (dxh - mean_dxhat - xhat[j] * mean_dxhat_xhat));
            }
        }
        for (a, b) in grads.get_mut(self.scale).data_mut().iter_mut().zip(dgamma) {
            *a += b;
        }
        for (a, b) in grads.get_mut(self.shift).data_mut().iter_mut().zip(dbeta) {
            *a += b;
        }
        Tensor::from_vec(grad_out.shape(), dx).expect("same shape")
    }
}

/// Max-subtracted softmax over a vector.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Vector-Jacobian product of softmax given its output `probs`.
pub fn softmax_backward<T: Real>(probs: &[T], grad_out: &[T]) -> Vec<T> {
    let dot: T = probs.iter().zip(grad_out).map(|(&p, &g)| p * g).sum();
    probs
        .iter()
        .zip(grad_out)
        .map(|(&p, &g)| p * (g - dot))
        .collect()
}

/// Mean over the time axis of a `(channels, time)` tensor.
pub fn mean_pool_time<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let time = input.dim(1);
    let scale = T::one() / T::lit(time as f64);
    Tensor::vector(
        input
            .data()
            .chunks(time)
            .map(|row| row.iter().copied().sum::<T>() * scale)
            .collect(),
    )
}

pub fn mean_pool_time_backward<T: Real>(grad_out: &[T], time: usize) -> Tensor<T> {
    let scale = T::one() / T::lit(time as f64);
    let data = grad_out
        .iter()
        .flat_map(|&g| std::iter::repeat(g * scale).take(time))
        .collect();
    Tensor::from_vec(&[grad_out.len(), time], data).expect("pool shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f64> {
        ParamStore::new(11)
    }

    #[test]
    fn linear_identity_and_bias_only() {
        let mut s = store();
        let lin = Linear::register(&mut s, "l", 3, 3).unwrap();
        let w = s.value_mut(lin.weight);
        w.fill(0.0);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert_eq!(lin.forward(&s, &x).unwrap().data(), &[1.0, 2.0, 3.0]);

        s.value_mut(lin.weight).fill(0.0);
        s.value_mut(lin.bias)
            .data_mut()
            .copy_from_slice(&[0.5, -1.0, 2.0]);
        let y = lin.forward(&s, &Tensor::vector(vec![7.0, -3.0, 9.0])).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn linear_rejects_wrong_width() {
        let mut s = store();
        let lin = Linear::register(&mut s, "l", 4, 3).unwrap();
        let err = lin.forward(&s, &Tensor::vector(vec![1.0; 3])).unwrap_err();
        assert!(err.to_string().contains("linear input"));
    }

    #[test]
    fn linear_batched_rows() {
        let mut s = store();
        let lin = Linear::register(&mut s, "l", 2, 3).unwrap();
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let y = lin.forward(&s, &x).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert_eq!(y.item(1), lin.apply(&s, &[-1.0, 0.5]).as_slice());
    }

    #[test]
    fn conv_identity_kernel_and_output_length() {
        let mut s = store();
        let conv = Conv1d::register(&mut s, "c", 1, 1, 1, 1).unwrap();
        s.value_mut(conv.weight).fill(1.0);
        let x = Tensor::from_vec(&[1, 5], vec![1.0, -2.0, 3.0, 0.0, 4.5]).unwrap();
        assert_eq!(conv.forward(&s, &x).unwrap(), x);

        let conv = Conv1d::register(&mut s, "c2", 2, 3, 5, 2).unwrap();
        let x = Tensor::zeros(&[2, 16]);
        assert_eq!(conv.forward(&s, &x).unwrap().shape(), &[3, 6]);
        assert!(conv.forward(&s, &Tensor::zeros(&[2, 4])).is_err());
        assert!(conv.forward(&s, &Tensor::zeros(&[3, 16])).is_err());
    }

    #[test]
    fn rect_values_and_gradient() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(rect(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::vector(vec![-1.0, -0.1, -5.0]);
        assert!(rect(&neg).data().iter().all(|&v| v == 0.0));
        let g = rect_backward(&neg, &Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layernorm_normalizes_and_rejects_scalars() {
        let mut s = store();
        let ln = LayerNorm::register(&mut s, "ln", 4).unwrap();
        let (y, _) = ln
            .forward(&s, &Tensor::vector(vec![1.0, 5.0, -2.0, 8.0]))
            .unwrap();
        let mean = y.data().iter().sum::<f64>() / 4.0;
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-4);

        let (c, _) = ln.forward(&s, &Tensor::vector(vec![3.0; 4])).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));

        assert!(LayerNorm::register(&mut s, "ln1", 1).is_err());
    }

    #[test]
    fn softmax_symmetry_and_shift() {
        assert_eq!(softmax(&[0.0f64; 4]), vec![0.25; 4]);
        let a = softmax(&[1.0f64, -2.0, 0.5]);
        let b = softmax(&[101.0f64, 98.0, 100.5]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let big = softmax(&[1000.0f32, 0.0]);
        assert!(big.iter().all(|v| v.is_finite()));
    }
}
