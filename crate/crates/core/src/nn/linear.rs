use rand::Rng;

use super::{gelu, gelu_grad, join, Module, Param};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, gain: f64, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::fan_in(&[out_dim, in_dim], in_dim, gain, rng),
            bias: Param::zeros(&[out_dim]),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let w = &self.weight.value;
        (0..self.out_dim)
            .map(|o| {
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                self.bias.value[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &[f64], grad_out: &[f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.in_dim];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.bias.grad[o] += g;
            let base = o * self.in_dim;
            let wrow = &self.weight.value[base..base + self.in_dim];
            let grow = &mut self.weight.grad[base..base + self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                gx[i] += g * wrow[i];
            }
        }
        gx
    }
}

impl Module for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Two affine layers with one GELU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl Mlp {
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            fc1: Linear::new(in_dim, hidden, std::f64::consts::SQRT_2, rng),
            fc2: Linear::new(hidden, out_dim, 1.0, rng),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = self.fc1.forward(x).into_iter().map(gelu).collect();
        self.fc2.forward(&h)
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let hidden_pre = self.fc1.forward(x);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| gelu(v)).collect();
        let out = self.fc2.forward(&hidden);
        (
            out,
            MlpCache {
                input: x.to_vec(),
                hidden_pre,
                hidden,
            },
        )
    }

    pub fn backward(&mut self, cache: &MlpCache, grad_out: &[f64]) -> Vec<f64> {
        let gh = self.fc2.backward(&cache.hidden, grad_out);
        let gpre: Vec<f64> = gh
            .iter()
            .zip(&cache.hidden_pre)
            .map(|(g, &z)| g * gelu_grad(z))
            .collect();
        self.fc1.backward(&cache.input, &gpre)
    }

    pub fn in_dim(&self) -> usize {
        self.fc1.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.fc2.out_dim
    }
}

impl Module for Mlp {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}
