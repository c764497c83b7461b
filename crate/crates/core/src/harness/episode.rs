//! Closed-loop simulation of one drive cycle: lead vehicle, IDM driver,
//! source controller, agent, plant and reward at a fixed step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::cycle::DriveCycle;
use super::metrics::{EpisodeLog, StepRecord};
use crate::agent::{encode_state, mix_actions, AgentKind, GateState, HybridAction, PolicySample, StateNorms};
use crate::driver::{desired_acceleration, IdmParams, LeadTrajectory};
use crate::error::{Error, Result};
use crate::mpo::{LearnStats, MpoLearner, ReplayBuffer, Transition};
use crate::plant::{Powertrain, RoadProfile};
use crate::reward::{reward, RewardInputs, RewardNorms, RewardWeights};
use crate::source::{source_action, SourceAction};

/// Everything about the simulated world that stays fixed during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub pt: Powertrain,
    pub road: RoadProfile,
    pub idm: IdmParams,
    pub dt: f64,
    pub weights: RewardWeights,
    pub norms: RewardNorms,
    pub state_norms: StateNorms,
    pub shift_cost: f64,
}

impl Environment {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let pt = cfg.powertrain()?;
        let norms = cfg.reward_norms(&pt);
        norms.validate()?;
        Ok(Self {
            road: RoadProfile::flat(),
            idm: cfg.idm(),
            dt: cfg.dt,
            weights: cfg.reward_weights(),
            norms,
            state_norms: cfg.state_norms(&pt),
            shift_cost: cfg.shift_cost,
            pt,
        })
    }

    /// Number of plant steps covering a cycle.
    pub fn steps_for(&self, cycle: &DriveCycle) -> usize {
        (cycle.duration() / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    /// sample from the policy
    Stochastic,
    /// most probable action
    Greedy,
}

/// A controller: the source policy alone, or a learned policy with its
/// learner state and gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub kind: AgentKind,
    pub learner: Option<MpoLearner>,
    pub gate: GateState,
}

impl Agent {
    pub fn baseline() -> Self {
        Self {
            kind: AgentKind::Baseline,
            learner: None,
            gate: GateState::new(0.0),
        }
    }

    pub fn new<R: Rng + ?Sized>(cfg: &RunConfig, env: &Environment, rng: &mut R) -> Result<Self> {
        let kind = cfg.agent;
        if kind == AgentKind::Baseline {
            return Ok(Self::baseline());
        }
        let learner = MpoLearner::new(kind.state_dim(), cfg.head_config(&env.pt), cfg.mpo(), rng)?;
        let gate = match kind {
            AgentKind::Rpl => GateState {
                decay: cfg.gate_decay,
                warmup: cfg.gate_warmup,
                ..GateState::new(cfg.beta)
            },
            _ => GateState::always_on(),
        };
        Ok(Self {
            kind,
            learner: Some(learner),
            gate,
        })
    }

    /// Applied action and, for learning agents, the policy draw behind it.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        source: &SourceAction,
        mode: ActionMode,
        rng: &mut R,
    ) -> Result<(HybridAction, Option<PolicySample>)> {
        let Some(learner) = &self.learner else {
            return Ok((
                HybridAction {
                    torque: source.torque,
                    gear_cmd: source.gear_cmd,
                },
                None,
            ));
        };
        let state = ndarray::ArrayView1::from(obs);
        let (action, sample) = match mode {
            ActionMode::Stochastic => {
                let s = learner.policy.sample(state, rng)?;
                (s.action, Some(s))
            }
            ActionMode::Greedy => (learner.policy.mode(state)?, None),
        };
        let applied = match self.kind {
            AgentKind::Rpl => mix_actions(source, &action, &self.gate),
            _ => action,
        };
        Ok((applied, sample))
    }
}

/// Learner-side state carried across training episodes.
#[derive(Debug, Clone)]
pub struct TrainState<R: Rng> {
    pub buffer: ReplayBuffer,
    pub rng: R,
    pub learn_every: usize,
    pub env_steps: u64,
    pub learner_calls: u64,
    /// (environment step, learner call) at which the gate opened
    pub gate_opened: Option<(u64, u64)>,
    pub last_stats: Option<LearnStats>,
    /// critic losses since the last drain
    pub critic_losses: Vec<f64>,
}

impl<R: Rng> TrainState<R> {
    pub fn new(capacity: usize, learn_every: usize, rng: R) -> Self {
        Self {
            buffer: ReplayBuffer::new(capacity),
            rng,
            learn_every,
            env_steps: 0,
            learner_calls: 0,
            gate_opened: None,
            last_stats: None,
            critic_losses: Vec::new(),
        }
    }

    fn after_step(&mut self, agent: &mut Agent) -> Result<()> {
        self.env_steps += 1;
        if self.env_steps % self.learn_every as u64 != 0 {
            return Ok(());
        }
        let Some(learner) = agent.learner.as_mut() else {
            return Ok(());
        };
        if !learner.ready(&self.buffer) {
            return Ok(());
        }
        let stats = learner.learn(&self.buffer, &mut self.rng)?;
        self.learner_calls += 1;
        if agent.kind == AgentKind::Rpl {
            for &l in &stats.critic_losses {
                if agent.gate.update(l) && self.gate_opened.is_none() {
                    self.gate_opened = Some((self.env_steps, self.learner_calls));
                }
            }
        }
        self.critic_losses.extend_from_slice(&stats.critic_losses);
        self.last_stats = Some(stats);
        Ok(())
    }
}

struct Pending {
    state: Vec<f64>,
    sample: PolicySample,
    reward: f64,
}

fn push_pending<R: Rng>(train: &mut TrainState<R>, p: Pending, next_state: Vec<f64>, done: bool) -> Result<()> {
    train.buffer.push(Transition {
        state: p.state,
        action: p.sample.action,
        behavior_logprob_torque: p.sample.logprob_torque,
        behavior_prob_gear: p.sample.prob_gear,
        reward: p.reward,
        next_state,
        done,
    })
}

/// Simulates `cycle` with a read-only agent.
pub fn run_episode<R: Rng + ?Sized>(
    env: &Environment,
    agent: &Agent,
    cycle: &DriveCycle,
    mode: ActionMode,
    rng: &mut R,
) -> Result<EpisodeLog> {
    let mut a = agent.clone();
    simulate::<R, rand_chacha::ChaCha8Rng>(env, &mut a, cycle, mode, rng, None)
}

/// Simulates `cycle` with stochastic actions, storing transitions and
/// invoking the learner on its schedule.
pub fn train_episode<R: Rng + ?Sized, L: Rng>(
    env: &Environment,
    agent: &mut Agent,
    cycle: &DriveCycle,
    rng: &mut R,
    train: &mut TrainState<L>,
) -> Result<EpisodeLog> {
    let result = simulate(env, agent, cycle, ActionMode::Stochastic, rng, Some(train));
    train.buffer.end_episode();
    result
}

fn simulate<R: Rng + ?Sized, L: Rng>(
    env: &Environment,
    agent: &mut Agent,
    cycle: &DriveCycle,
    mode: ActionMode,
    rng: &mut R,
    mut train: Option<&mut TrainState<L>>,
) -> Result<EpisodeLog> {
    let lead = LeadTrajectory::new(cycle);
    let duration = lead.duration();
    let steps = env.steps_for(cycle);
    let pt = &env.pt;
    let augmented = agent.kind == AgentKind::Rpl;

    let v0 = lead.state_at(0.0)?.velocity;
    let mut plant = pt.initial_state(v0);
    let gap0 = env.idm.initial_gap(v0);
    let mut records = Vec::with_capacity(steps);
    let mut pending: Option<Pending> = None;

    for k in 0..=steps {
        let t = (k as f64 * env.dt).min(duration);
        let ls = lead.state_at(t)?;
        let gap = ls.position + gap0 - plant.position;
        let a_des = match desired_acceleration(plant.velocity, gap, ls.velocity, &env.idm) {
            Ok(a) => a,
            Err(e @ Error::Collision { .. }) => {
                if let (Some(tr), Some(p)) = (train.as_deref_mut(), pending.take()) {
                    let s = encode_state(&plant, -env.idm.max_decel, None, &env.state_norms);
                    let next = if augmented {
                        let mut v = p.state.clone();
                        v[..s.len()].copy_from_slice(s.as_slice().expect("contiguous"));
                        v
                    } else {
                        s.to_vec()
                    };
                    push_pending(tr, p, next, true)?;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let source = source_action(a_des, &plant, pt, &env.road, env.shift_cost);
        let obs = encode_state(&plant, a_des, augmented.then_some(&source), &env.state_norms).to_vec();
        if let (Some(tr), Some(p)) = (train.as_deref_mut(), pending.take()) {
            push_pending(tr, p, obs.clone(), false)?;
        }
        if k == steps {
            break;
        }

        let (applied, sample) = agent.decide(&obs, &source, mode, rng)?;
        let out = pt.step(&plant, applied.torque, applied.gear_cmd as i32, env.dt, &env.road)?;
        let next = out.state;
        let pr = pt.power_reserve(next.velocity, next.gear, out.delivered_power);
        let r = reward(
            &RewardInputs {
                a_des,
                a_next: out.acceleration,
                torque: out.applied_torque,
                fuel_rate: out.fuel_rate,
                gear_prev: plant.gear,
                gear_next: next.gear,
                reserve: pr.reserve,
                reserve_max: pr.max,
            },
            &env.weights,
            &env.norms,
        )?;
        records.push(StepRecord {
            time: t,
            lead_velocity: ls.velocity,
            gap,
            a_des,
            source_torque: source.torque,
            source_gear_cmd: source.gear_cmd,
            torque: out.applied_torque,
            gear_cmd: applied.gear_cmd,
            prev_gear: plant.gear,
            gear: next.gear,
            velocity: next.velocity,
            acceleration: out.acceleration,
            position: next.position,
            fuel_rate: out.fuel_rate,
            fuel_used: next.fuel_used,
            reward: r,
            gate_active: agent.gate.active,
        });
        plant = next;
        if let Some(tr) = train.as_deref_mut() {
            if let Some(sample) = sample {
                pending = Some(Pending {
                    state: obs,
                    sample,
                    reward: r,
                });
            }
            tr.after_step(agent)?;
        }
    }
    Ok(EpisodeLog {
        cycle: cycle.name.clone(),
        duration,
        route_distance: lead.total_distance(),
        records,
    })
}
