//! Adaptive-moment (Adam) optimiser state.

use crate::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Moment tensors, keyed by parameter name.
    pub fn moments(&self) -> &BTreeMap<String, (Tensor, Tensor)> {
        &self.moments
    }

    pub fn restore(step: u64, beta1: f64, beta2: f64, eps: f64, moments: BTreeMap<String, (Tensor, Tensor)>) -> Self {
        Self { beta1, beta2, eps, step, moments }
    }

    /// Advance the shared time step; call once before a round of
    /// [`Adam::update`] calls.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn update(&mut self, name: &str, param: &mut Tensor, grad: &Tensor, lr: f64) {
        assert!(self.step > 0, "Adam::update before begin_step");
        assert_eq!(param.shape(), grad.shape(), "Adam: gradient shape for {name}");
        let (m, v) = self
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (Tensor::zeros(param.shape()), Tensor::zeros(param.shape())));
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Shape;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::default();
        let mut p = Tensor::full(Shape::new(1, 1, 1, 2), 1.0);
        let g = Tensor::from_vec(p.shape(), vec![0.5, -2.0]);
        adam.begin_step();
        adam.update("p", &mut p, &g, 0.1);
        // bias-corrected first step is lr * sign(g)
        assert!((p.data()[0] - 0.9).abs() < 1e-6);
        assert!((p.data()[1] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut adam = Adam::default();
        let mut p = Tensor::scalar(5.0);
        for _ in 0..2000 {
            let g = p.map(|x| 2.0 * (x - 1.5));
            adam.begin_step();
            adam.update("p", &mut p, &g, 0.05);
        }
        assert!((p.data()[0] - 1.5).abs() < 1e-3);
    }
}
