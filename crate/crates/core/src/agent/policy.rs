//! Factorized hybrid-action policy: a Gaussian over normalized wheel torque
//! and a three-way categorical over gear commands, both read off one network.
//!
//! Network outputs per state: `[z_mean, z_std, logit(-1), logit(0), logit(+1)]`.
//! The mean is `tanh(z_mean)` and the standard deviation is a sigmoid mapped
//! into `[sigma_min, sigma_max]`, all in units of the torque range.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};

pub const GEAR_COMMANDS: [i8; 3] = [-1, 0, 1];
pub const HEAD_OUTPUTS: usize = 5;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn gear_index(cmd: i8) -> usize {
    (cmd.clamp(-1, 1) + 1) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    /// wheel torque, N·m
    pub torque: f64,
    /// -1, 0 or +1
    pub gear_cmd: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// N·m represented by a normalized torque of 1
    pub torque_range: f64,
    /// as a fraction of the torque range
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl HeadConfig {
    pub fn new(torque_range: f64) -> Self {
        Self {
            torque_range,
            sigma_min: 0.01,
            sigma_max: 0.5,
        }
    }
}

/// Distribution parameters for one state, torque in normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutput {
    pub mean: f64,
    pub std: f64,
    pub probs: [f64; 3],
}

impl HeadOutput {
    pub fn from_raw(z: ArrayView1<f64>, cfg: &HeadConfig) -> Self {
        let mean = z[0].tanh();
        let s = sigmoid(z[1]);
        let std = cfg.sigma_min + (cfg.sigma_max - cfg.sigma_min) * s;
        Self {
            mean,
            std,
            probs: softmax3([z[2], z[3], z[4]]),
        }
    }

    pub fn log_prob_torque(&self, a: f64) -> f64 {
        gaussian_log_pdf(a, self.mean, self.std)
    }

    pub fn prob_gear(&self, idx: usize) -> f64 {
        self.probs[idx]
    }

    pub fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.std.is_finite() && self.probs.iter().all(|p| p.is_finite())
    }

    /// Most probable gear index; ties prefer 0, then +1.
    pub fn mode_gear_index(&self) -> usize {
        let mut best = 1;
        for idx in [2, 0] {
            if self.probs[idx] > self.probs[best] {
                best = idx;
            }
        }
        best
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax3(l: [f64; 3]) -> [f64; 3] {
    let m = l[0].max(l[1]).max(l[2]);
    let e = l.map(|x| (x - m).exp());
    let s = e[0] + e[1] + e[2];
    e.map(|x| x / s)
}

pub fn gaussian_log_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - LN_SQRT_2PI
}

/// An action drawn from the policy together with its behaviour probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySample {
    pub action: HybridAction,
    /// normalized torque in [-1, 1]
    pub torque_norm: f64,
    pub gear_idx: usize,
    pub logprob_torque: f64,
    pub prob_gear: f64,
}

impl PolicySample {
    pub fn log_prob(&self) -> f64 {
        self.logprob_torque + self.prob_gear.ln()
    }
}

/// Draws a normalized torque (clamped to [-1, 1]) and a gear index.
pub fn sample_head<R: Rng + ?Sized>(h: &HeadOutput, rng: &mut R) -> (f64, usize) {
    let eps: f64 = rng.sample(StandardNormal);
    let a = (h.mean + h.std * eps).clamp(-1.0, 1.0);
    let u: f64 = rng.random();
    let idx = if u < h.probs[0] {
        0
    } else if u < h.probs[0] + h.probs[1] {
        1
    } else {
        2
    };
    (a, idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: Mlp,
    pub heads: HeadConfig,
}

impl Policy {
    /// Fan-in initialized trunk; the output layer is shrunk so that the
    /// initial torque mean is near zero and gear logits near uniform.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        activation: Activation,
        heads: HeadConfig,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(HEAD_OUTPUTS);
        let mut net = Mlp::new(&sizes, activation, rng);
        net.scale_output_layer(0.01);
        Self { net, heads }
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_size()
    }

    pub fn head(&self, state: ArrayView1<f64>) -> Result<HeadOutput> {
        let z = self.net.forward(state)?;
        let h = HeadOutput::from_raw(z.view(), &self.heads);
        if !h.is_finite() {
            return Err(Error::NonFinite {
                what: "policy head",
                value: h.mean + h.std,
            });
        }
        Ok(h)
    }

    pub fn heads_batch(&self, states: ArrayView2<f64>) -> Result<Vec<HeadOutput>> {
        let z = self.net.forward_batch(states)?;
        Ok(heads_from_raw(&z, &self.heads))
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: ArrayView1<f64>, rng: &mut R) -> Result<PolicySample> {
        let h = self.head(state)?;
        let (a, idx) = sample_head(&h, rng);
        Ok(PolicySample {
            action: HybridAction {
                torque: a * self.heads.torque_range,
                gear_cmd: GEAR_COMMANDS[idx],
            },
            torque_norm: a,
            gear_idx: idx,
            logprob_torque: h.log_prob_torque(a),
            prob_gear: h.probs[idx],
        })
    }

    /// Highest-probability action: mean torque and most likely gear command.
    pub fn mode(&self, state: ArrayView1<f64>) -> Result<HybridAction> {
        let h = self.head(state)?;
        Ok(HybridAction {
            torque: h.mean * self.heads.torque_range,
            gear_cmd: GEAR_COMMANDS[h.mode_gear_index()],
        })
    }
}

pub fn heads_from_raw(z: &Array2<f64>, cfg: &HeadConfig) -> Vec<HeadOutput> {
    z.rows()
        .into_iter()
        .map(|r| HeadOutput::from_raw(r, cfg))
        .collect()
}
