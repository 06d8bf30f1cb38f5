//! Small feed-forward networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector so optimizers and gradient checks can
//! treat them uniformly. Each layer stores its weights input-major
//! (`w[i * out + o]`) followed by its biases, which lets the first layer
//! skip zero inputs: observations here are mostly empty occupancy entries.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Sparse input vector: `(index, value)` pairs, indices unique.
pub type Sparse = [(usize, f64)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation values of every layer from one forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    input: Vec<(usize, f64)>,
    /// Hidden activations then the (linear) output.
    layers: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("at least one layer")
    }
}

impl Mlp {
    /// Tanh hidden layers, linear output. Weights uniform in
    /// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(sizes);
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fi, fo) = (w[0], w[1]);
            let limit = (6.0 / (fi + fo) as f64).sqrt();
            for p in &mut m.params[off..off + fi * fo] {
                *p = rng.gen_range(-limit..limit);
            }
            off += fi * fo + fo;
        }
        m
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; count],
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        let m = Self::zeros(sizes);
        (m.params.len() == params.len()).then(|| Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &Sparse) -> Vec<f64> {
        self.forward_cached(x).layers.pop().expect("output layer")
    }

    pub fn forward_cached(&self, x: &Sparse) -> Cache {
        debug_assert!(x.iter().all(|&(i, _)| i < self.input_dim()));
        let depth = self.sizes.len() - 1;
        let mut layers: Vec<Vec<f64>> = Vec::with_capacity(depth);
        let mut off = 0;
        for l in 0..depth {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + fi * fo];
            let b = &self.params[off + fi * fo..off + fi * fo + fo];
            let mut z = b.to_vec();
            if l == 0 {
                for &(i, v) in x {
                    if v != 0.0 {
                        axpy(v, &w[i * fo..(i + 1) * fo], &mut z);
                    }
                }
            } else {
                for (i, &v) in layers[l - 1].iter().enumerate() {
                    axpy(v, &w[i * fo..(i + 1) * fo], &mut z);
                }
            }
            if l + 1 < depth {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(z);
            off += fi * fo + fo;
        }
        Cache {
            input: x.to_vec(),
            layers,
        }
    }

    /// Accumulate `d(output · grad_out)/dθ` into `grad`.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        assert_eq!(grad_out.len(), self.output_dim());
        let depth = self.sizes.len() - 1;
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let o = *acc;
                *acc += w[0] * w[1] + w[1];
                Some(o)
            })
            .collect();
        let mut delta = grad_out.to_vec();
        for l in (0..depth).rev() {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            // Bias gradient.
            for (g, d) in grad[off + fi * fo..off + fi * fo + fo].iter_mut().zip(&delta) {
                *g += d;
            }
            if l == 0 {
                for &(i, v) in &cache.input {
                    if v != 0.0 {
                        axpy(v, &delta, &mut grad[off + i * fo..off + (i + 1) * fo]);
                    }
                }
            } else {
                let prev = &cache.layers[l - 1];
                let w = &self.params[off..off + fi * fo];
                let mut next = vec![0.0; fi];
                for (i, &a) in prev.iter().enumerate() {
                    axpy(a, &delta, &mut grad[off + i * fo..off + (i + 1) * fo]);
                    let back: f64 = w[i * fo..(i + 1) * fo].iter().zip(&delta).map(|(w, d)| w * d).sum();
                    // tanh' = 1 - a².
                    next[i] = back * (1.0 - a * a);
                }
                delta = next;
            }
        }
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

pub fn dense(x: &[f64]) -> Vec<(usize, f64)> {
    x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (i, v)).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Adam with optional global-norm gradient clipping. `step` descends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64, max_grad_norm: Option<f64>) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        let scale = match self.max_grad_norm {
            Some(max) => {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}
