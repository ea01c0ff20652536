//! Small fully connected networks with hand-written reverse-mode gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OutputActivation {
    Linear,
    /// `scale · tanh(x)`
    ScaledTanh(f64),
}

/// Feed-forward net: ReLU hidden layers, configurable output squashing.
/// Parameters are stored flat, layer by layer, each layer as a row-major
/// `out × in` weight matrix followed by its bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
}

/// Values recorded by [`Mlp::forward_cached`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer; the last entry is the network output.
    activations: Vec<Vec<f64>>,
    /// Pre-activation values of each layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the output")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Uniform initialization in `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "invalid layer sizes {sizes:?}");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Self { sizes: sizes.to_vec(), output, params }
    }

    pub fn from_params(sizes: &[usize], output: OutputActivation, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Layout(format!("invalid layer sizes {sizes:?}")));
        }
        if params.len() != param_count(sizes) {
            return Err(Error::Layout(format!(
                "layout {sizes:?} needs {} parameters, got {}",
                param_count(sizes),
                params.len()
            )));
        }
        Ok(Self { sizes: sizes.to_vec(), output, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let mut next = affine(&self.params[off..], &cur, n_in, n_out);
            off += n_in * n_out + n_out;
            if l + 1 < layers {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                self.squash(&mut next);
            }
            cur = next;
        }
        cur
    }

    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(x.len(), self.input_dim(), "input arity");
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        activations.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let z = affine(&self.params[off..], &activations[l], n_in, n_out);
            off += n_in * n_out + n_out;
            let mut a = z.clone();
            if l + 1 < layers {
                a.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                self.squash(&mut a);
            }
            pre.push(z);
            activations.push(a);
        }
        ForwardCache { activations, pre }
    }

    fn squash(&self, out: &mut [f64]) {
        if let OutputActivation::ScaledTanh(s) = self.output {
            out.iter_mut().for_each(|v| *v = s * v.tanh());
        }
    }

    /// Accumulates `∂L/∂θ` into `grad` (when given) from `∂L/∂output`, and
    /// returns `∂L/∂input`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        if let Some(g) = grad.as_deref() {
            assert_eq!(g.len(), self.params.len(), "gradient buffer size");
        }
        let layers = self.sizes.len() - 1;
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Linear => grad_out.to_vec(),
            OutputActivation::ScaledTanh(s) => grad_out
                .iter()
                .zip(&cache.pre[layers - 1])
                .map(|(g, z)| {
                    let t = z.tanh();
                    g * s * (1.0 - t * t)
                })
                .collect(),
        };
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let o = offsets[l];
            let input = &cache.activations[l];
            let w = &self.params[o..o + n_in * n_out];
            if let Some(grad) = grad.as_deref_mut() {
                let (gw, gb) = grad[o..o + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for j in 0..n_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    gb[j] += d;
                    let row = &mut gw[j * n_in..(j + 1) * n_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            let mut prev = vec![0.0; n_in];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            if l > 0 {
                for (p, z) in prev.iter_mut().zip(&cache.pre[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }

    /// `θ_target ← τ·θ_source + (1−τ)·θ_target`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if self.sizes != source.sizes {
            return Err(Error::Layout(format!("cannot blend {:?} into {:?}", source.sizes, self.sizes)));
        }
        if tau == 1.0 {
            self.params.copy_from_slice(&source.params);
            return Ok(());
        }
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            // written as an increment so identical parameters stay bit-identical
            *t += tau * (s - *t);
        }
        Ok(())
    }
}

fn affine(params: &[f64], x: &[f64], n_in: usize, n_out: usize) -> Vec<f64> {
    let (w, rest) = params.split_at(n_in * n_out);
    let b = &rest[..n_out];
    (0..n_out)
        .map(|j| {
            let row = &w[j * n_in..(j + 1) * n_in];
            b[j] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
        })
        .collect()
}

/// Adam optimizer over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer size");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
