use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::Tensor;

/// Hyperparameters of the Adam optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moment buffers, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        AdamState {
            config,
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients are validated before anything is
    /// mutated; a non-finite gradient leaves params and state untouched.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::dim("adam_step", &[self.m.len()], &[params.len(), grads.len()]));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::dim("adam_step", p.shape(), &[g.len()]));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    op: "adam_step",
                    detail: format!("non-finite gradient in parameter block {i}"),
                });
            }
        }

        self.step += 1;
        let c = self.config;
        let one = T::one();
        let beta1 = T::from_f64_lossy(c.beta1);
        let beta2 = T::from_f64_lossy(c.beta2);
        let lr = T::from_f64_lossy(c.learning_rate);
        let eps = T::from_f64_lossy(c.epsilon);
        let step = self.step as i32;
        let bias1 = one - beta1.powi(step);
        let bias2 = one - beta2.powi(step);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, gv), mv), vv) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = beta1 * *mv + (one - beta1) * *gv;
                *vv = beta2 * *vv + (one - beta2) * *gv * *gv;
                let m_hat = *mv / bias1;
                let v_hat = *vv / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(w: f64) -> Vec<Tensor<f64>> {
        vec![Tensor::new(vec![1], vec![w]).unwrap()]
    }

    #[test]
    fn one_step_matches_hand_formula() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut params = scalar_param(1.0);
        let mut state = AdamState::new(cfg, &params);
        // f(w) = w², g = 2w = 2
        state.step(&mut params, &[vec![2.0]]).unwrap();
        let m = (1.0 - 0.9) * 2.0;
        let v = (1.0 - 0.999) * 4.0;
        let m_hat = m / (1.0 - 0.9f64);
        let v_hat = v / (1.0 - 0.999f64);
        let expected = 1.0 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((params[0].data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_params_but_counts_step() {
        let mut params = scalar_param(0.25);
        let mut state = AdamState::new(AdamConfig::default(), &params);
        state.step(&mut params, &[vec![0.0]]).unwrap();
        assert_eq!(params[0].data()[0], 0.25);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut params = scalar_param(0.0);
        let mut state = AdamState::new(cfg, &params);
        for _ in 0..200 {
            let w = params[0].data()[0];
            state.step(&mut params, &[vec![2.0 * (w - 3.0)]]).unwrap();
        }
        assert!((params[0].data()[0] - 3.0).abs() < 1e-2, "{}", params[0].data()[0]);
        assert_eq!(state.step_count(), 200);
    }

    #[test]
    fn nan_gradient_aborts_without_mutation() {
        let mut params = scalar_param(1.0);
        let mut state = AdamState::new(AdamConfig::default(), &params);
        let err = state.step(&mut params, &[vec![f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
        assert_eq!(params[0].data()[0], 1.0);
        assert_eq!(state.step_count(), 0);
    }
}
