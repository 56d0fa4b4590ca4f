use std::collections::BTreeMap;

use super::Module;

/// Adam with bias correction; moment buffers are keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Advances the step counter; call once per optimisation step before
    /// [`Adam::update`] is applied to each trainable module.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies one update to every parameter of `module` (named under
    /// `prefix`) and clears its gradients.
    pub fn update(&mut self, prefix: &str, module: &mut dyn Module) {
        let t = self.step.max(1) as i32;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let moments = &mut self.moments;
        module.visit_mut(prefix, &mut |name, p| {
            let (m, v) = moments
                .entry(name)
                .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p.value[i] -= lr * mhat / (vhat.sqrt() + eps);
                p.grad[i] = 0.0;
            }
        });
    }
}
