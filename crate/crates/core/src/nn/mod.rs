//! Minimal layers with explicit backward passes.
//!
//! Layers accumulate parameter gradients into their [`Param`]s during
//! `backward`; an optimiser step then consumes and clears them.

mod adam;
mod conv;
mod linear;

pub use adam::Adam;
pub use conv::{Conv2d, ConvEncoder, EncoderCache, Tensor3};
pub use linear::{Linear, Mlp, MlpCache};

use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// Normal init with standard deviation `gain / sqrt(fan_in)`.
    pub fn fan_in(shape: &[usize], fan_in: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let mut p = Param::zeros(shape);
        let dist = Normal::new(0.0, gain / (fan_in as f64).sqrt()).expect("positive std");
        for v in &mut p.value {
            *v = dist.sample(rng);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Named parameter traversal in a fixed order.
pub trait Module {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// L2-normalises `z`; returns the unit vector and the norm used.
pub fn l2_normalize(z: &[f64]) -> (Vec<f64>, f64) {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    (z.iter().map(|v| v / norm).collect(), norm)
}

/// Backpropagates through `e = z / |z|`.
pub fn l2_normalize_backward(e: &[f64], norm: f64, grad_e: &[f64]) -> Vec<f64> {
    let dot: f64 = e.iter().zip(grad_e).map(|(a, b)| a * b).sum();
    e.iter()
        .zip(grad_e)
        .map(|(ei, gi)| (gi - ei * dot) / norm)
        .collect()
}
