//! Small affine + ReLU encoder with hand-written backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// One affine layer, `y = W x + b` with `W` stored `out x in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        check_dim("layer weight size", in_dim * out_dim, weight.len())?;
        check_dim("layer bias size", out_dim, bias.len())?;
        if !linalg::all_finite(&weight) || !linalg::all_finite(&bias) {
            return Err(Error::Data("non-finite layer parameter".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| linalg::dot(row, x) + b)
            .collect()
    }
}

/// Multi-layer perceptron; ReLU follows every layer but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyEncoder {
    layers: Vec<Layer>,
}

/// Activations saved by [`TinyEncoder::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
}

/// Parameter gradients, laid out like the encoder's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl EncoderGrads {
    pub fn zeros_like(enc: &TinyEncoder) -> Self {
        Self {
            weights: enc.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect(),
            biases: enc.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &EncoderGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            linalg::axpy(1.0, b, a);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            linalg::axpy(1.0, b, a);
        }
    }

    /// Flattened in layer order, weight before bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

impl TinyEncoder {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Two-layer network computing the identity on `R^d`:
    /// `[I; -I]` into `2d` ReLU units, then `[I, -I]` back down.
    pub fn identity_mlp(d: usize) -> Result<Self> {
        let mut w1 = vec![0.0; 2 * d * d];
        let mut w2 = vec![0.0; 2 * d * d];
        for i in 0..d {
            w1[i * d + i] = 1.0;
            w1[(d + i) * d + i] = -1.0;
            w2[i * 2 * d + i] = 1.0;
            w2[i * 2 * d + d + i] = -1.0;
        }
        Self::new(vec![
            Layer::new(d, 2 * d, w1, vec![0.0; 2 * d])?,
            Layer::new(2 * d, d, w2, vec![0.0; d])?,
        ])
    }

    /// Gaussian weights scaled by `sqrt(2 / fan_in)`, small random biases.
    pub fn random(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("need at least input and output dims".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let std = (2.0 / i as f64).sqrt();
                let weight = (0..i * o)
                    .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let bias = (0..o).map(|_| rng.random_range(-0.1..0.1)).collect();
                Layer::new(i, o, weight, bias)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Mutable views of every parameter tensor (weight, bias per layer).
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(&mut l.weight[..]);
            out.push(&mut l.bias[..]);
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(&l.weight[..]);
            out.push(&l.bias[..]);
        }
        out
    }

    pub fn same_architecture(&self, other: &TinyEncoder) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("encoder input", self.d_in(), x.len())?;
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if i < last {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        check_dim("encoder input", self.d_in(), x.len())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h);
            inputs.push(h);
            h = if i < last {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        Ok((h, ForwardCache { inputs, pre }))
    }

    /// Exact gradients of `grad_out . f(x)` with respect to every parameter
    /// and to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &[f64],
    ) -> Result<(EncoderGrads, Vec<f64>)> {
        check_dim("encoder output gradient", self.d_out(), grad_out.len())?;
        let mut grads = EncoderGrads::zeros_like(self);
        let last = self.layers.len() - 1;
        let mut g = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i < last {
                for (gv, z) in g.iter_mut().zip(&cache.pre[i]) {
                    if *z <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let input = &cache.inputs[i];
            for (o, &go) in g.iter().enumerate() {
                if go != 0.0 {
                    linalg::axpy(
                        go,
                        input,
                        &mut grads.weights[i][o * layer.in_dim..(o + 1) * layer.in_dim],
                    );
                }
            }
            grads.biases[i].copy_from_slice(&g);
            let mut g_in = vec![0.0; layer.in_dim];
            for (row, &go) in layer.weight.chunks_exact(layer.in_dim).zip(&g) {
                if go != 0.0 {
                    linalg::axpy(go, row, &mut g_in);
                }
            }
            g = g_in;
        }
        Ok((grads, g))
    }

    /// Smallest |pre-activation| over hidden ReLU units for input `x`.
    pub fn relu_margin(&self, x: &[f64]) -> Result<f64> {
        let (_, cache) = self.forward_cached(x)?;
        let hidden = &cache.pre[..cache.pre.len() - 1];
        Ok(hidden
            .iter()
            .flatten()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min))
    }
}

/// Parameter-wise `(1 - alpha) * enc0 + alpha * enc_ft`; the endpoints are
/// returned unchanged.
pub fn wise_interpolate(enc0: &TinyEncoder, enc_ft: &TinyEncoder, alpha: f64) -> Result<TinyEncoder> {
    if !enc0.same_architecture(enc_ft) {
        return Err(Error::Dimension(
            "WiSE interpolation needs identical architectures".into(),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(enc0.clone());
    }
    if alpha == 1.0 {
        return Ok(enc_ft.clone());
    }
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| (1.0 - alpha) * x + alpha * y)
            .collect()
    };
    let layers = enc0
        .layers
        .iter()
        .zip(&enc_ft.layers)
        .map(|(a, b)| Layer::new(a.in_dim, a.out_dim, mix(&a.weight, &b.weight), mix(&a.bias, &b.bias)))
        .collect::<Result<Vec<_>>>()?;
    TinyEncoder::new(layers)
}
