use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

/// Bias-corrected adaptive-moment optimizer state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        let n = net.num_params();
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Parameter increments the next step would apply, without applying them.
    /// Moments and the step counter are advanced.
    pub fn compute_update(&mut self, grads: &Gradients) -> Result<Vec<f64>> {
        let mut offset = 0;
        for (layer, (w, b)) in grads.layers.iter().enumerate() {
            if let Some(i) = w.iter().chain(b.iter()).position(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { layer, index: i });
            }
            offset += w.len() + b.len();
        }
        if offset != self.first.len() {
            return Err(Error::Shape {
                expected: self.first.len(),
                got: offset,
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let lr = self.learning_rate;
        let mut delta = Vec::with_capacity(offset);
        for (k, g) in grads
            .layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .enumerate()
        {
            let m = self.beta1 * self.first[k] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second[k] + (1.0 - self.beta2) * g * g;
            self.first[k] = m;
            self.second[k] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            delta.push(-lr * m_hat / (v_hat.sqrt() + self.epsilon));
        }
        Ok(delta)
    }
}

/// Adds a flat increment vector to the network parameters, scaled by `scale`.
pub fn apply_update(net: &mut Mlp, delta: &[f64], scale: f64) {
    let mut k = 0;
    for layer in &mut net.layers {
        for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *p += scale * delta[k];
            k += 1;
        }
    }
}

/// One descent step on `net` (gradients of a loss to minimize).
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let delta = state.compute_update(grads)?;
    apply_update(net, &delta, 1.0);
    Ok(())
}
