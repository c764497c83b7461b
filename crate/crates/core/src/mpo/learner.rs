//! Policy, critic, target critic and optimizer state bundled with the
//! update schedule run on each learner invocation.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, TrajectorySegment};
use super::critic::{critic_features, critic_update, q_values, write_features, ACTION_FEATURES};
use super::estep::{mean_kl_from_uniform, solve_temperature, temperature_weights};
use super::mstep::{m_step, DualVars, KlBudget, MStepStats, WeightedSamples};
use super::retrace::{retrace_recursion, trace_coefficient, RetraceInputs};
use crate::agent::policy::sample_head;
use crate::agent::{gear_index, HeadConfig, HeadOutput, Policy};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    /// window length L
    pub retrace_steps: usize,
    /// transitions per batch, drawn as ceil(batch / L) windows
    pub batch_size: usize,
    /// M, actions sampled per state in the E-step
    pub action_samples: usize,
    /// samples for the expected next-state value in Retrace
    pub retrace_samples: usize,
    pub critic_updates: usize,
    pub policy_updates: usize,
    pub target_period: u64,
    pub budget: KlBudget,
    pub dual_lr: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for MpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.9,
            retrace_steps: 15,
            batch_size: 3072,
            action_samples: 40,
            retrace_samples: 40,
            critic_updates: 10,
            policy_updates: 5,
            target_period: 200,
            budget: KlBudget::default(),
            dual_lr: 0.1,
            actor_lr: 5e-5,
            critic_lr: 1e-4,
            actor_hidden: vec![256, 256, 256],
            critic_hidden: vec![256, 256, 256],
            activation: Activation::Elu,
        }
    }
}

impl MpoConfig {
    pub fn segments_per_batch(&self) -> usize {
        self.batch_size.div_ceil(self.retrace_steps)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParam { name, reason });
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", format!("must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda <= 1.0) {
            return bad("lambda", format!("must lie in [0, 1], got {}", self.lambda));
        }
        if self.retrace_steps == 0 || self.batch_size == 0 {
            return bad("batch_size", "batch size and retrace steps must be positive".into());
        }
        if self.action_samples < 2 || self.retrace_samples == 0 {
            return bad("action_samples", format!("need at least 2, got {}", self.action_samples));
        }
        if self.target_period == 0 {
            return bad("target_period", "must be positive".into());
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("dual_lr", self.dual_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, format!("must be > 0, got {v}"));
            }
        }
        if self.actor_hidden.is_empty() || self.critic_hidden.is_empty() {
            return bad("hidden", "at least one hidden layer is required".into());
        }
        self.budget.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnStats {
    pub critic_losses: Vec<f64>,
    pub eta: f64,
    pub e_step_kl: f64,
    pub m_step: Option<MStepStats>,
}

impl LearnStats {
    pub fn mean_critic_loss(&self) -> f64 {
        self.critic_losses.iter().sum::<f64>() / self.critic_losses.len().max(1) as f64
    }
}

/// Output of the E-step for a batch of states.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepOutput {
    pub samples: WeightedSamples,
    pub q: Array2<f64>,
    pub eta: f64,
}

/// Draws `m` actions per state from the policy, scores them with the critic
/// and solves for the temperature under the KL bound `eps`.
pub fn e_step<R: Rng + ?Sized>(
    states: ArrayView2<f64>,
    policy: &Policy,
    critic: &Mlp,
    m: usize,
    eps: f64,
    rng: &mut R,
) -> Result<EStepOutput> {
    let heads = policy.heads_batch(states)?;
    let (b, d) = states.dim();
    let mut torques = Array2::zeros((b, m));
    let mut gears = Array2::zeros((b, m));
    let mut x = Array2::zeros((b * m, d + ACTION_FEATURES));
    for (i, h) in heads.iter().enumerate() {
        let s = states.row(i);
        let s = s.as_slice().expect("standard layout");
        for j in 0..m {
            let (a, g) = sample_head(h, rng);
            torques[[i, j]] = a;
            gears[[i, j]] = g;
            let mut row = x.row_mut(i * m + j);
            write_features(row.as_slice_mut().expect("standard layout"), s, a, g);
        }
    }
    let q = q_values(critic, x.view())?
        .into_shape_with_order((b, m))
        .map_err(|e| Error::Diverged(e.to_string()))?;
    let eta = solve_temperature(q.view(), eps)?;
    let weights = temperature_weights(q.view(), eta);
    Ok(EStepOutput {
        samples: WeightedSamples {
            torques,
            gears,
            weights,
        },
        q,
        eta,
    })
}

fn stack_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, d: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.flat_map(|r| r.iter().copied()).collect();
    let n = flat.len() / d.max(1);
    Array2::from_shape_vec((n, d), flat).expect("rows share a width")
}

/// Retrace targets for every step of every segment, flattened in order.
pub fn retrace_targets<R: Rng + ?Sized>(
    segments: &[TrajectorySegment],
    target_critic: &Mlp,
    policy: &Policy,
    cfg: &MpoConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if segments.iter().any(|s| s.is_empty()) || segments.is_empty() {
        return Err(Error::EmptySegment);
    }
    let steps: Vec<_> = segments.iter().flat_map(|s| s.steps.iter()).collect();
    let d = steps[0].state.len();
    let range = policy.heads.torque_range;
    let torques: Vec<f64> = steps.iter().map(|t| t.action.torque / range).collect();
    let gears: Vec<usize> = steps.iter().map(|t| gear_index(t.action.gear_cmd)).collect();
    let states: Vec<&[f64]> = steps.iter().map(|t| t.state.as_slice()).collect();
    let q = q_values(target_critic, critic_features(&states, &torques, &gears).view())?;

    let s = stack_rows(steps.iter().map(|t| t.state.as_slice()), d);
    let heads = policy.heads_batch(s.view())?;
    let traces: Vec<f64> = steps
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let h = &heads[i];
            let log_pi = h.log_prob_torque(torques[i]) + h.probs[gears[i]].ln();
            let log_b = t.behavior_logprob_torque + t.behavior_prob_gear.ln();
            trace_coefficient(cfg.lambda, log_pi, log_b)
        })
        .collect();

    let ns = stack_rows(steps.iter().map(|t| t.next_state.as_slice()), d);
    let next_heads = policy.heads_batch(ns.view())?;
    let k = cfg.retrace_samples;
    let mut x = Array2::zeros((steps.len() * k, d + ACTION_FEATURES));
    for (i, h) in next_heads.iter().enumerate() {
        for j in 0..k {
            let (a, g) = sample_head(h, rng);
            let mut row = x.row_mut(i * k + j);
            write_features(row.as_slice_mut().expect("standard layout"), &steps[i].next_state, a, g);
        }
    }
    let qn = q_values(target_critic, x.view())?;
    let v_next: Vec<f64> = (0..steps.len())
        .map(|i| {
            if steps[i].done {
                0.0
            } else {
                qn.slice(ndarray::s![i * k..(i + 1) * k]).sum() / k as f64
            }
        })
        .collect();
    let rewards: Vec<f64> = steps.iter().map(|t| t.reward).collect();

    let mut out = Vec::with_capacity(steps.len());
    let mut start = 0;
    for seg in segments {
        let end = start + seg.len();
        out.extend(retrace_recursion(
            RetraceInputs {
                q: &q.as_slice().expect("contiguous")[start..end],
                v_next: &v_next[start..end],
                rewards: &rewards[start..end],
                traces: &traces[start..end],
            },
            cfg.gamma,
        )?);
        start = end;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpoLearner {
    pub cfg: MpoConfig,
    pub policy: Policy,
    pub critic: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub duals: DualVars,
    pub critic_steps: u64,
}

impl MpoLearner {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        heads: HeadConfig,
        cfg: MpoConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let policy = Policy::new(state_dim, &cfg.actor_hidden, cfg.activation, heads, rng);
        let mut sizes = vec![state_dim + ACTION_FEATURES];
        sizes.extend_from_slice(&cfg.critic_hidden);
        sizes.push(1);
        let critic = Mlp::new(&sizes, cfg.activation, rng);
        Ok(Self {
            actor_opt: AdamState::new(&policy.net, cfg.actor_lr),
            critic_opt: AdamState::new(&critic, cfg.critic_lr),
            target_critic: critic.snapshot(),
            critic,
            policy,
            duals: DualVars::default(),
            critic_steps: 0,
            cfg,
        })
    }

    pub fn ready(&self, buffer: &ReplayBuffer) -> bool {
        buffer.window_count(self.cfg.retrace_steps) > 0
    }

    pub fn critic_step<R: Rng + ?Sized>(&mut self, segments: &[TrajectorySegment], rng: &mut R) -> Result<f64> {
        let targets = retrace_targets(segments, &self.target_critic, &self.policy, &self.cfg, rng)?;
        let steps: Vec<_> = segments.iter().flat_map(|s| s.steps.iter()).collect();
        let range = self.policy.heads.torque_range;
        let states: Vec<&[f64]> = steps.iter().map(|t| t.state.as_slice()).collect();
        let torques: Vec<f64> = steps.iter().map(|t| t.action.torque / range).collect();
        let gears: Vec<usize> = steps.iter().map(|t| gear_index(t.action.gear_cmd)).collect();
        let x = critic_features(&states, &torques, &gears);
        let loss = critic_update(&mut self.critic, &mut self.critic_opt, x.view(), &targets)?;
        self.critic_steps += 1;
        if self.critic_steps % self.cfg.target_period == 0 {
            self.target_critic.copy_from(&self.critic);
        }
        Ok(loss)
    }

    pub fn policy_step<R: Rng + ?Sized>(
        &mut self,
        states: ArrayView2<f64>,
        rng: &mut R,
    ) -> Result<(EStepOutput, MStepStats)> {
        let e = e_step(
            states,
            &self.policy,
            &self.critic,
            self.cfg.action_samples,
            self.cfg.budget.e_step,
            rng,
        )?;
        self.duals.eta = e.eta;
        let stats = m_step(
            &mut self.policy,
            &mut self.actor_opt,
            states,
            &e.samples,
            &self.cfg.budget,
            &mut self.duals,
            self.cfg.dual_lr,
        )?;
        Ok((e, stats))
    }

    /// One learner invocation: critic updates then policy updates, each on a
    /// fresh batch of windows.
    pub fn learn<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<LearnStats> {
        let l = self.cfg.retrace_steps;
        let n = self.cfg.segments_per_batch();
        let mut stats = LearnStats {
            critic_losses: Vec::with_capacity(self.cfg.critic_updates),
            eta: self.duals.eta,
            e_step_kl: 0.0,
            m_step: None,
        };
        for _ in 0..self.cfg.critic_updates {
            let segs = buffer.sample_segments(n, l, rng)?;
            stats.critic_losses.push(self.critic_step(&segs, rng)?);
        }
        for _ in 0..self.cfg.policy_updates {
            let segs = buffer.sample_segments(n, l, rng)?;
            let d = segs[0].steps[0].state.len();
            let states = stack_rows(segs.iter().flat_map(|s| s.steps.iter().map(|t| t.state.as_slice())), d);
            let (e, m) = self.policy_step(states.view(), rng)?;
            stats.eta = e.eta;
            stats.e_step_kl = mean_kl_from_uniform(e.samples.weights.view());
            stats.m_step = Some(m);
        }
        if !self.policy.net.is_finite() || !self.critic.is_finite() {
            return Err(Error::Diverged("non-finite network parameters".into()));
        }
        Ok(stats)
    }

    pub fn head(&self, state: &[f64]) -> Result<HeadOutput> {
        self.policy.head(ndarray::ArrayView1::from(state))
    }
}
