//! Hybrid-action actor: policy heads, state encoding, residual mixing and the
//! critic-loss gate that decides when the residual starts acting.

pub mod policy;

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::plant::{PlantState, NUM_GEARS};
use crate::source::SourceAction;

pub use policy::{
    gear_index, HeadConfig, HeadOutput, HybridAction, Policy, PolicySample, GEAR_COMMANDS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    /// source policy only
    Baseline,
    /// learns the full action from scratch
    Rl,
    /// learns a residual on top of the source policy
    Rpl,
}

impl AgentKind {
    pub fn learns(self) -> bool {
        self != AgentKind::Baseline
    }

    pub fn state_dim(self) -> usize {
        match self {
            AgentKind::Rpl => RPL_STATE_DIM,
            _ => BASE_STATE_DIM,
        }
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Self::Baseline),
            "rl" => Ok(Self::Rl),
            "rpl" => Ok(Self::Rpl),
            other => Err(format!("unknown agent {other:?}, expected baseline, rl or rpl")),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Baseline => "baseline",
            AgentKind::Rl => "rl",
            AgentKind::Rpl => "rpl",
        })
    }
}

/// Speed, ego and desired acceleration, gear one-hot.
pub const BASE_STATE_DIM: usize = 3 + NUM_GEARS;
/// Adds source torque and the source gear command one-hot.
pub const RPL_STATE_DIM: usize = BASE_STATE_DIM + 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateNorms {
    /// m/s
    pub speed: f64,
    /// m/s²
    pub accel: f64,
    /// wheel N·m
    pub torque: f64,
}

impl StateNorms {
    pub fn new(accel: f64, torque: f64) -> Self {
        Self {
            speed: 30.0,
            accel,
            torque,
        }
    }
}

pub fn encode_state(
    plant: &PlantState,
    a_des: f64,
    source: Option<&SourceAction>,
    norms: &StateNorms,
) -> Array1<f64> {
    let dim = if source.is_some() {
        RPL_STATE_DIM
    } else {
        BASE_STATE_DIM
    };
    let mut x = Array1::zeros(dim);
    x[0] = plant.velocity / norms.speed;
    x[1] = plant.acceleration / norms.accel;
    x[2] = a_des / norms.accel;
    let g = (plant.gear as usize).clamp(1, NUM_GEARS);
    x[2 + g] = 1.0;
    if let Some(s) = source {
        x[BASE_STATE_DIM] = s.torque / norms.torque;
        x[BASE_STATE_DIM + 1 + gear_index(s.gear_cmd)] = 1.0;
    }
    x
}

/// Applied action: the source action until the gate opens, then the sum of
/// source and residual with the gear command limited to one step.
pub fn mix_actions(source: &SourceAction, residual: &HybridAction, gate: &GateState) -> HybridAction {
    if !gate.active {
        return HybridAction {
            torque: source.torque,
            gear_cmd: source.gear_cmd,
        };
    }
    HybridAction {
        torque: source.torque + residual.torque,
        gear_cmd: (source.gear_cmd + residual.gear_cmd).clamp(-1, 1),
    }
}

/// Exponential moving average of critic loss with a one-way latch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateState {
    pub critic_loss_ema: Option<f64>,
    pub threshold: f64,
    pub decay: f64,
    /// losses folded in so far
    pub samples: u64,
    /// losses required before the gate may open
    pub warmup: u64,
    pub active: bool,
}

impl GateState {
    pub fn new(threshold: f64) -> Self {
        Self {
            critic_loss_ema: None,
            threshold,
            decay: 0.99,
            samples: 0,
            warmup: 0,
            active: false,
        }
    }

    pub fn always_on() -> Self {
        Self {
            active: true,
            ..Self::new(f64::MAX)
        }
    }

    /// Folds in one critic loss. Returns true on the update that opens the gate.
    pub fn update(&mut self, loss: f64) -> bool {
        if !loss.is_finite() {
            return false;
        }
        let ema = match self.critic_loss_ema {
            None => loss,
            Some(e) => self.decay * e + (1.0 - self.decay) * loss,
        };
        self.critic_loss_ema = Some(ema);
        self.samples += 1;
        if !self.active && self.samples >= self.warmup && ema < self.threshold {
            self.active = true;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn plant(v: f64, a: f64, gear: u8) -> PlantState {
        PlantState {
            position: 0.0,
            velocity: v,
            acceleration: a,
            gear,
            engine_speed: 0.0,
            fuel_used: 0.0,
            time: 0.0,
        }
    }

    fn norms() -> StateNorms {
        StateNorms::new(2.0, 50_000.0)
    }

    #[test]
    fn rest_state_encoding() {
        let x = encode_state(&plant(0.0, 0.0, 1), 0.0, None, &norms());
        assert_eq!(x.len(), BASE_STATE_DIM);
        let mut want = vec![0.0; BASE_STATE_DIM];
        want[3] = 1.0;
        assert_eq!(x.to_vec(), want);
    }

    #[test]
    fn residual_encoding_adds_four() {
        let s = SourceAction {
            torque: 25_000.0,
            gear_cmd: -1,
        };
        let a = encode_state(&plant(10.0, 0.5, 4), 1.0, None, &norms());
        let b = encode_state(&plant(10.0, 0.5, 4), 1.0, Some(&s), &norms());
        assert_eq!(b.len(), a.len() + 4);
        assert_eq!(b.slice(ndarray::s![..a.len()]), a);
        assert_eq!(b[BASE_STATE_DIM], 0.5);
        assert_eq!(b[BASE_STATE_DIM + 1], 1.0);
        assert_eq!(AgentKind::Rpl.state_dim(), b.len());
    }

    #[test]
    fn encoding_is_injective_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut seen_states = HashSet::new();
        let mut seen_codes = HashSet::new();
        while seen_states.len() < 10_000 {
            let v: f64 = rng.random_range(0.0..30.0);
            let a: f64 = rng.random_range(-3.0..2.0);
            let d: f64 = rng.random_range(-3.0..2.0);
            let g: u8 = rng.random_range(1..=10);
            let t: f64 = rng.random_range(-50_000.0..50_000.0);
            let u: i8 = rng.random_range(-1..=1);
            let key = (v.to_bits(), a.to_bits(), d.to_bits(), g, t.to_bits(), u);
            if !seen_states.insert(key) {
                continue;
            }
            let s = SourceAction { torque: t, gear_cmd: u };
            let x = encode_state(&plant(v, a, g), d, Some(&s), &norms());
            let code: Vec<u64> = x.iter().map(|e| e.to_bits()).collect();
            assert!(seen_codes.insert(code), "collision at {key:?}");
        }
    }

    #[test]
    fn inactive_gate_passes_source_through() {
        let gate = GateState::new(0.1);
        let s = SourceAction {
            torque: 500.0,
            gear_cmd: -1,
        };
        let r = HybridAction {
            torque: 1e4,
            gear_cmd: 1,
        };
        let m = mix_actions(&s, &r, &gate);
        assert_eq!((m.torque, m.gear_cmd), (s.torque, s.gear_cmd));
    }

    #[test]
    fn active_gate_adds_and_clamps() {
        let gate = GateState::always_on();
        let s = SourceAction {
            torque: 500.0,
            gear_cmd: 1,
        };
        let r = HybridAction {
            torque: 100.0,
            gear_cmd: 1,
        };
        let m = mix_actions(&s, &r, &gate);
        assert_eq!(m.torque, 600.0);
        assert_eq!(m.gear_cmd, 1);
    }

    #[test]
    fn gate_threshold_and_latch() {
        let mut g = GateState::new(0.1);
        g.update(0.2);
        assert!(!g.active);
        let mut g = GateState::new(0.1);
        assert!(g.update(0.05));
        assert!(g.active);
        assert!(!g.update(10.0));
        assert!(g.active);
        assert!(g.critic_loss_ema.unwrap() > 0.1);
    }

    #[test]
    fn gate_waits_for_warmup() {
        let mut g = GateState {
            warmup: 3,
            ..GateState::new(0.1)
        };
        assert!(!g.update(0.01));
        assert!(!g.update(0.01));
        assert!(g.update(0.01));
    }

    #[test]
    fn gate_ema_decays_toward_losses() {
        let mut g = GateState::new(0.1);
        g.update(1.0);
        let mut n = 0;
        while !g.active {
            g.update(0.0);
            n += 1;
        }
        // 0.99^n < 0.1
        assert_eq!(n, 230);
    }

    #[test]
    fn agent_kind_round_trips() {
        for k in [AgentKind::Baseline, AgentKind::Rl, AgentKind::Rpl] {
            assert_eq!(k.to_string().parse::<AgentKind>().unwrap(), k);
        }
        assert!("ppo".parse::<AgentKind>().is_err());
    }

    proptest! {
        #[test]
        fn mixed_gear_stays_in_range(us in -1i8..=1, ur in -1i8..=1, on in any::<bool>()) {
            let gate = if on { GateState::always_on() } else { GateState::new(0.1) };
            let m = mix_actions(
                &SourceAction { torque: 0.0, gear_cmd: us },
                &HybridAction { torque: 0.0, gear_cmd: ur },
                &gate,
            );
            prop_assert!((-1..=1).contains(&m.gear_cmd));
        }

        #[test]
        fn uniform_residual_biases_toward_source(us in -1i8..=1) {
            // enumerate the uniform residual categorical exactly
            let gate = GateState::always_on();
            let mut mass = [0.0f64; 3];
            for ur in GEAR_COMMANDS {
                let m = mix_actions(
                    &SourceAction { torque: 0.0, gear_cmd: us },
                    &HybridAction { torque: 0.0, gear_cmd: ur },
                    &gate,
                );
                prop_assert!((m.gear_cmd - us).abs() <= 1);
                mass[gear_index(m.gear_cmd)] += 1.0 / 3.0;
            }
            prop_assert!(mass[gear_index(us)] >= 1.0 / 3.0 - 1e-12);
        }
    }
}
