use serde::{Deserialize, Serialize};

use super::{Gradients, Layer, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        let zeros = model.zero_gradients().layers;
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = model.config.adam;
        let t = self.step as i32;
        let m_correction = 1.0 - beta1.powi(t);
        let v_correction = 1.0 - beta2.powi(t);
        for (((param, g), m), v) in model.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / m_correction;
                let v_hat = *v / v_correction;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            };
            ndarray::Zip::from(&mut param.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut param.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny_model;
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate_against_sign() {
        let mut model = tiny_model(&[4, 3, 19], 7);
        let before = model.clone();
        let mut grads = model.zero_gradients();
        for l in &mut grads.layers {
            l.weights.fill(0.25);
            l.bias.fill(-3.0);
        }
        let mut adam = AdamState::new(&model);
        adam.step(&mut model, &grads);
        let lr = model.config.adam.learning_rate;
        for (after, before) in model.layers.iter().zip(&before.layers) {
            for (a, b) in after.weights.iter().zip(&before.weights) {
                // m̂/√v̂ = 0.25 / (0.25 + 1e-8)
                assert!((a - b + lr).abs() < 1e-10);
            }
            for (a, b) in after.bias.iter().zip(&before.bias) {
                assert!((a - b - lr).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut model = tiny_model(&[4, 3, 19], 8);
        let before = model.clone();
        let grads = model.zero_gradients();
        let mut adam = AdamState::new(&model);
        for _ in 0..50 {
            adam.step(&mut model, &grads);
        }
        assert_eq!(model, before);
        assert_eq!(adam.step_count(), 50);
    }
}
