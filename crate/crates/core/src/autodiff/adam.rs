//! Adam optimizer over flat `f64` parameter vectors.

use crate::error::{Error, Result};

/// First/second-moment accumulators for one parameter vector.
///
/// The step counter advances by exactly one per [`AdamState::step`], which
/// drives the bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    /// Defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(n: usize) -> Self {
        Self::with_hyperparams(n, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(n: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1, beta2, epsilon }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One Adam update in place.
    ///
    /// Rejects any non-finite gradient component before touching the state,
    /// reporting the offending parameter index.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "parameter count differs from optimizer state");
        assert_eq!(grads.len(), self.m.len(), "gradient count differs from optimizer state");
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
