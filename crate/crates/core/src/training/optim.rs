use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
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

/// Adam with bias-corrected moment estimates; minimises.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<S> {
    pub config: AdamConfig,
    /// First moments, one per parameter.
    pub m: Vec<Tensor<S>>,
    /// Second moments, one per parameter.
    pub v: Vec<Tensor<S>>,
    /// Updates applied so far.
    pub t: u64,
}

impl<S: Real> Adam<S> {
    pub fn new(config: AdamConfig, store: &ParamStore<S>) -> Self {
        let zeros: Vec<_> = store.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Adam {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Applies one update given a gradient per parameter (in store order).
    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &[Tensor<S>]) -> Result<()> {
        if grads.len() != self.m.len() || store.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "optimiser tracks {} parameters, got {} gradients for {} parameters",
                self.m.len(),
                grads.len(),
                store.len()
            )));
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let (one_b1, one_b2) = (S::lit(1.0 - c.beta1), S::lit(1.0 - c.beta2));
        let bc1 = S::lit(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = S::lit(1.0 - c.beta2.powi(self.t as i32));
        let lr = S::lit(c.learning_rate);
        let eps = S::lit(c.epsilon);
        for (i, value) in store.values_mut().enumerate() {
            let g = grads[i].data();
            if g.len() != value.len() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    left: value.shape().to_vec(),
                    right: grads[i].shape().to_vec(),
                });
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, theta) in value.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_vec(values.to_vec())).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient() {
        let mut s = store(&[1.0, -1.0]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        // d/dw of w² at w = (1, -1)
        adam.step(&mut s, &[Tensor::from_vec(vec![2.0, -2.0])]).unwrap();
        let w = s.iter().next().unwrap().1.data().to_vec();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (-1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut s = store(&[0.3, 0.7]);
        let before = s.clone();
        let config = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(config, &s);
        adam.step(&mut s, &[Tensor::from_vec(vec![5.0, -1.0])]).unwrap();
        assert_eq!(s, before);
    }
}
