use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new<I: IntoIterator<Item = usize>>(tensor_lens: I) -> Self {
        let (m, v) = tensor_lens
            .into_iter()
            .map(|n| (vec![S::zero(); n], vec![S::zero(); n]))
            .unzip();
        Self { m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Clears moments and the step counter.
    pub fn reset(&mut self) {
        for buf in self.m.iter_mut().chain(self.v.iter_mut()) {
            buf.iter_mut().for_each(|x| *x = S::zero());
        }
        self.step = 0;
    }

    /// One bias-corrected Adam update. `params` and `grads` yield tensors in
    /// the same order and shapes used to build the state.
    pub fn step<'p, 'g, P, G>(&mut self, config: &AdamConfig, params: P, grads: G)
    where
        P: IntoIterator<Item = &'p mut [S]>,
        G: IntoIterator<Item = &'g [S]>,
    {
        self.step += 1;
        let t = self.step as i32;
        let b1 = S::lit(config.beta1);
        let b2 = S::lit(config.beta2);
        let one = S::one();
        let c1 = one - S::lit(config.beta1.powi(t));
        let c2 = one - S::lit(config.beta2.powi(t));
        // lr * m_hat / (sqrt(v_hat) + eps) with the corrections folded in
        let lr = S::lit(config.learning_rate);
        let eps = S::lit(config.epsilon);
        let inv_c1 = one / c1;
        let inv_c2 = one / c2;
        let mut count = 0;
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            assert_eq!(p.len(), g.len(), "parameter/gradient shape mismatch");
            assert_eq!(p.len(), m.len(), "parameter/state shape mismatch");
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] * inv_c1;
                let v_hat = v[i] * inv_c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            count += 1;
        }
        assert_eq!(count, self.m.len(), "tensor count mismatch");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = AdamState::<f64>::new([3]);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.0; 3];
        state.step(&AdamConfig::default(), [p.as_mut_slice()], [g.as_slice()]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::<f64>::new([1]);
        let mut w = [0.0];
        state.step(&cfg, [&mut w[..]], [&[1.0][..]]);
        let m_hat = 0.1 / (1.0 - 0.9);
        let v_hat = 0.001 / (1.0 - 0.999);
        let expected = -0.001 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!((w[0] - expected).abs() < 1e-15);
        assert!((w[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        let cfg = AdamConfig::with_learning_rate(0.01);
        let mut state = AdamState::<f64>::new([1]);
        let mut w = [1.0];
        for _ in 0..500 {
            let g = [2.0 * w[0]];
            state.step(&cfg, [&mut w[..]], [&g[..]]);
        }
        assert!(w[0].abs() < 0.05, "w = {}", w[0]);
    }

    #[test]
    fn reset_restarts_bias_correction() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::<f64>::new([1]);
        let mut w = [0.0];
        for _ in 0..10 {
            state.step(&cfg, [&mut w[..]], [&[3.0][..]]);
        }
        state.reset();
        assert_eq!(state.step_count(), 0);
        let before = w[0];
        state.step(&cfg, [&mut w[..]], [&[1.0][..]]);
        assert!((w[0] - before + 0.001).abs() < 1e-10);
    }
}
