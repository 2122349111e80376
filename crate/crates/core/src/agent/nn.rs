//! Small dense tanh networks with manual backpropagation, plus Adam.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network, tanh on hidden layers, linear output.
///
/// Parameters live in one flat vector; layer `l` stores its weight matrix
/// row-major (`out x in`) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output sizes");
        Self { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] }
    }

    /// Orthogonal initialisation: hidden layers scaled by `hidden_gain`, the
    /// output layer by `output_gain`; biases start at zero.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let n_layers = sizes.len() - 1;
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == n_layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(fan_out, fan_in, rng);
            for (dst, src) in net.params[offset..offset + fan_in * fan_out].iter_mut().zip(w) {
                *dst = gain * src;
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) || param_count(&sizes) != params.len() {
            return Err(Error::LengthMismatch(format!(
                "layer sizes {sizes:?} need {} coefficients, got {}",
                if sizes.len() < 2 { 0 } else { param_count(&sizes) },
                params.len()
            )));
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("sizes checked at construction")
    }

    /// Per-layer `(weights, bias)` slices, weights row-major `out x in`.
    pub fn layers(&self) -> impl Iterator<Item = (usize, usize, &[f64], &[f64])> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            (fan_in, fan_out, weights, bias)
        })
    }

    /// Zeroes the output layer (weights and bias).
    pub fn zero_output_layer(&mut self) {
        let n = self.sizes.len();
        let (fan_in, fan_out) = (self.sizes[n - 2], self.sizes[n - 1]);
        let len = self.params.len();
        self.params[len - fan_in * fan_out - fan_out..].fill(0.0);
    }

    pub fn forward<'c>(&self, input: &[f64], cache: &'c mut MlpCache) -> &'c [f64] {
        debug_assert_eq!(input.len(), self.sizes[0]);
        let n_layers = self.sizes.len() - 1;
        cache.acts.resize_with(n_layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(input);
        for (l, (fan_in, fan_out, w, b)) in self.layers().enumerate() {
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let out = &mut rest[0];
            out.clear();
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                out.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
        }
        cache.output()
    }

    /// Accumulates into `grad` the gradient of a scalar whose derivative
    /// with respect to the network output is `d_output`.
    pub fn backward(&self, cache: &MlpCache, d_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = d_output.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.acts[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let g = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += d * xi;
                    }
                }
                grad[off + fan_in * fan_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + fan_in * fan_out];
                let mut next = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (n, wi) in next.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                            *n += d * wi;
                        }
                    }
                }
                for (n, a) in next.iter_mut().zip(x) {
                    *n *= 1.0 - a * a;
                }
                delta = next;
            }
        }
    }
}

/// `rows x cols` matrix with orthonormal rows or columns (whichever is the
/// smaller set), via Gram-Schmidt on a Gaussian draw.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (n_vec, dim) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while vecs.len() < n_vec {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for u in &vecs {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for (k, v) in vecs.iter().enumerate() {
        for (j, &a) in v.iter().enumerate() {
            if rows <= cols {
                m[k * cols + j] = a;
            } else {
                m[j * cols + k] = a;
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, cfg: AdamConfig) -> Self {
        Self { cfg, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t);
        let bc2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
