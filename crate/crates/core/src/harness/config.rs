//! Flat `key = value` run configuration. Every key has a default; a file only
//! needs to list the ones it overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentKind, HeadConfig, StateNorms};
use crate::driver::IdmParams;
use crate::error::{io_err, Error, Result};
use crate::harness::cycle::NoisePolicy;
use crate::mpo::{KlBudget, MpoConfig};
use crate::nn::Activation;
use crate::plant::{Powertrain, VehicleParams};
use crate::reward::{RewardNorms, RewardWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub agent: AgentKind,
    pub seed: u64,

    // vehicle and simulation
    pub mass: f64,
    pub frontal_area: f64,
    pub drag_coefficient: f64,
    pub rolling_coefficient: f64,
    pub wheel_radius: f64,
    pub dt: f64,
    pub a_max: f64,
    pub t_headway: f64,
    pub powertrain_dir: Option<PathBuf>,

    // driver
    pub idm_desired_speed: f64,
    pub idm_comfort_decel: f64,
    pub idm_exponent: f64,
    pub idm_jam_distance: f64,
    pub idm_max_decel: f64,

    // learner
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub retrace_steps: usize,
    pub kl_epsilon: f64,
    pub kl_epsilon_mean: f64,
    pub kl_epsilon_std: f64,
    pub kl_epsilon_gear: f64,
    pub batch_size: usize,
    pub action_samples: usize,
    pub retrace_samples: usize,
    pub critic_updates: usize,
    pub policy_updates: usize,
    pub target_period: u64,
    pub dual_lr: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub activation: Activation,
    pub learn_every: usize,
    pub replay_capacity: usize,
    pub gate_decay: f64,
    /// critic losses seen before the gate may open
    pub gate_warmup: u64,
    pub residual_range: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,

    // reward and source policy
    pub w_accel: f64,
    pub w_torque: f64,
    pub w_fuel: f64,
    pub w_shift: f64,
    pub w_reserve: f64,
    pub shift_cost: f64,

    // protocol
    pub noise_amplitude: f64,
    pub noise_period: f64,
    pub training_cycles: usize,
    pub eval_reps: usize,
    pub checkpoint_every: usize,
    pub fuel_density: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mpo = MpoConfig::default();
        let idm = IdmParams::default();
        let w = RewardWeights::default();
        let noise = NoisePolicy::default();
        Self {
            agent: AgentKind::Rpl,
            seed: 0,
            mass: 9070.0,
            frontal_area: 7.71,
            drag_coefficient: 0.8,
            rolling_coefficient: 0.015,
            wheel_radius: 0.498,
            dt: 0.2,
            a_max: 2.0,
            t_headway: 3.0,
            powertrain_dir: None,
            idm_desired_speed: idm.desired_speed,
            idm_comfort_decel: idm.comfort_decel,
            idm_exponent: idm.exponent,
            idm_jam_distance: idm.jam_distance,
            idm_max_decel: idm.max_decel,
            actor_lr: mpo.actor_lr,
            critic_lr: mpo.critic_lr,
            gamma: mpo.gamma,
            lambda: mpo.lambda,
            beta: 0.1,
            retrace_steps: mpo.retrace_steps,
            kl_epsilon: mpo.budget.e_step,
            kl_epsilon_mean: mpo.budget.mean,
            kl_epsilon_std: mpo.budget.std,
            kl_epsilon_gear: mpo.budget.gear,
            batch_size: mpo.batch_size,
            action_samples: mpo.action_samples,
            retrace_samples: mpo.retrace_samples,
            critic_updates: mpo.critic_updates,
            policy_updates: mpo.policy_updates,
            target_period: mpo.target_period,
            dual_lr: mpo.dual_lr,
            actor_hidden: mpo.actor_hidden,
            critic_hidden: mpo.critic_hidden,
            activation: mpo.activation,
            learn_every: 250,
            replay_capacity: crate::mpo::ReplayBuffer::DEFAULT_CAPACITY,
            gate_decay: 0.99,
            gate_warmup: 100,
            residual_range: 0.5,
            sigma_min: 0.01,
            sigma_max: 0.5,
            w_accel: w.accel,
            w_torque: w.torque,
            w_fuel: w.fuel,
            w_shift: w.shift,
            w_reserve: w.reserve,
            shift_cost: 0.05,
            noise_amplitude: noise.amplitude,
            noise_period: noise.period,
            training_cycles: 300,
            eval_reps: 25,
            checkpoint_every: 50,
            fuel_density: 0.85,
        }
    }
}

enum Field<'a> {
    F64(&'a mut f64),
    Usize(&'a mut usize),
    U64(&'a mut u64),
    Agent(&'a mut AgentKind),
    Act(&'a mut Activation),
    Sizes(&'a mut Vec<usize>),
    Path(&'a mut Option<PathBuf>),
}

impl Field<'_> {
    fn render(&self) -> String {
        match self {
            Field::F64(v) => format!("{v:?}"),
            Field::Usize(v) => v.to_string(),
            Field::U64(v) => v.to_string(),
            Field::Agent(v) => v.to_string(),
            Field::Act(v) => v.to_string(),
            Field::Sizes(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            Field::Path(v) => v.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        }
    }

    fn set(&mut self, raw: &str) -> std::result::Result<(), String> {
        let bad = |e: &dyn std::fmt::Display| format!("{e}");
        match self {
            Field::F64(v) => **v = raw.parse().map_err(|e| bad(&e))?,
            Field::Usize(v) => **v = raw.parse().map_err(|e| bad(&e))?,
            Field::U64(v) => **v = raw.parse().map_err(|e| bad(&e))?,
            Field::Agent(v) => **v = raw.parse()?,
            Field::Act(v) => **v = raw.parse()?,
            Field::Sizes(v) => {
                **v = raw
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|e| bad(&e)))
                    .collect::<std::result::Result<_, _>>()?
            }
            Field::Path(v) => **v = (!raw.is_empty()).then(|| PathBuf::from(raw)),
        }
        Ok(())
    }
}

impl RunConfig {
    fn fields(&mut self) -> Vec<(&'static str, Field<'_>)> {
        use Field::*;
        vec![
            ("agent", Agent(&mut self.agent)),
            ("seed", U64(&mut self.seed)),
            ("mass", F64(&mut self.mass)),
            ("frontal_area", F64(&mut self.frontal_area)),
            ("drag_coefficient", F64(&mut self.drag_coefficient)),
            ("rolling_coefficient", F64(&mut self.rolling_coefficient)),
            ("wheel_radius", F64(&mut self.wheel_radius)),
            ("dt", F64(&mut self.dt)),
            ("a_max", F64(&mut self.a_max)),
            ("t_headway", F64(&mut self.t_headway)),
            ("powertrain_dir", Path(&mut self.powertrain_dir)),
            ("idm_desired_speed", F64(&mut self.idm_desired_speed)),
            ("idm_comfort_decel", F64(&mut self.idm_comfort_decel)),
            ("idm_exponent", F64(&mut self.idm_exponent)),
            ("idm_jam_distance", F64(&mut self.idm_jam_distance)),
            ("idm_max_decel", F64(&mut self.idm_max_decel)),
            ("actor_lr", F64(&mut self.actor_lr)),
            ("critic_lr", F64(&mut self.critic_lr)),
            ("gamma", F64(&mut self.gamma)),
            ("lambda", F64(&mut self.lambda)),
            ("beta", F64(&mut self.beta)),
            ("retrace_steps", Usize(&mut self.retrace_steps)),
            ("kl_epsilon", F64(&mut self.kl_epsilon)),
            ("kl_epsilon_mean", F64(&mut self.kl_epsilon_mean)),
            ("kl_epsilon_std", F64(&mut self.kl_epsilon_std)),
            ("kl_epsilon_gear", F64(&mut self.kl_epsilon_gear)),
            ("batch_size", Usize(&mut self.batch_size)),
            ("action_samples", Usize(&mut self.action_samples)),
            ("retrace_samples", Usize(&mut self.retrace_samples)),
            ("critic_updates", Usize(&mut self.critic_updates)),
            ("policy_updates", Usize(&mut self.policy_updates)),
            ("target_period", U64(&mut self.target_period)),
            ("dual_lr", F64(&mut self.dual_lr)),
            ("actor_hidden", Sizes(&mut self.actor_hidden)),
            ("critic_hidden", Sizes(&mut self.critic_hidden)),
            ("activation", Act(&mut self.activation)),
            ("learn_every", Usize(&mut self.learn_every)),
            ("replay_capacity", Usize(&mut self.replay_capacity)),
            ("gate_decay", F64(&mut self.gate_decay)),
            ("gate_warmup", U64(&mut self.gate_warmup)),
            ("residual_range", F64(&mut self.residual_range)),
            ("sigma_min", F64(&mut self.sigma_min)),
            ("sigma_max", F64(&mut self.sigma_max)),
            ("w_accel", F64(&mut self.w_accel)),
            ("w_torque", F64(&mut self.w_torque)),
            ("w_fuel", F64(&mut self.w_fuel)),
            ("w_shift", F64(&mut self.w_shift)),
            ("w_reserve", F64(&mut self.w_reserve)),
            ("shift_cost", F64(&mut self.shift_cost)),
            ("noise_amplitude", F64(&mut self.noise_amplitude)),
            ("noise_period", F64(&mut self.noise_period)),
            ("training_cycles", Usize(&mut self.training_cycles)),
            ("eval_reps", Usize(&mut self.eval_reps)),
            ("checkpoint_every", Usize(&mut self.checkpoint_every)),
            ("fuel_density", F64(&mut self.fuel_density)),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().fields().into_iter().map(|(k, _)| k).collect()
    }

    /// Overrides defaults with the `key = value` lines of `text`. Blank lines
    /// and `#` comments are ignored; unknown keys are errors.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(path, text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, path: &Path, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            self.set(k.trim(), v.trim()).map_err(err)?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let mut fields = self.fields();
        let (_, f) = fields
            .iter_mut()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| format!("unknown key {key:?}"))?;
        f.set(value).map_err(|e| format!("{key}: {e}"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let mut c = self.clone();
        let fields = c.fields();
        fields.iter().find(|(k, _)| *k == key).map(|(_, f)| f.render())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(path, &text)
    }

    /// Every key with its current value, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut c = self.clone();
        let mut out = String::new();
        for (k, f) in c.fields() {
            let _ = writeln!(out, "{k} = {}", f.render());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle().validate()?;
        self.idm().validate()?;
        self.mpo().validate()?;
        let pos = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParam {
                    name,
                    reason: format!("must be > 0, got {v}"),
                })
            }
        };
        pos("dt", self.dt)?;
        pos("beta", self.beta)?;
        pos("residual_range", self.residual_range)?;
        pos("sigma_min", self.sigma_min)?;
        pos("noise_period", self.noise_period)?;
        pos("fuel_density", self.fuel_density)?;
        if !(self.sigma_max > self.sigma_min) {
            return Err(Error::InvalidParam {
                name: "sigma_max",
                reason: "must exceed sigma_min".into(),
            });
        }
        if !(self.gate_decay >= 0.0 && self.gate_decay < 1.0) {
            return Err(Error::InvalidParam {
                name: "gate_decay",
                reason: format!("must lie in [0, 1), got {}", self.gate_decay),
            });
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::InvalidParam {
                name: "noise_amplitude",
                reason: "must be >= 0".into(),
            });
        }
        if self.learn_every == 0 || self.replay_capacity == 0 || self.eval_reps == 0 {
            return Err(Error::InvalidParam {
                name: "learn_every",
                reason: "learn_every, replay_capacity and eval_reps must be positive".into(),
            });
        }
        let w = self.reward_weights();
        for v in [w.accel, w.torque, w.fuel, w.shift, w.reserve, self.shift_cost] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name: "reward weight",
                    reason: format!("must be >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn vehicle(&self) -> VehicleParams {
        let base = VehicleParams::default();
        VehicleParams {
            mass: self.mass,
            frontal_area: self.frontal_area,
            drag_coeff: self.drag_coefficient,
            rolling_coeff: self.rolling_coefficient,
            wheel_radius: self.wheel_radius,
            max_service_brake_torque: 0.8 * self.mass * base.gravity * self.wheel_radius,
            ..base
        }
    }

    pub fn idm(&self) -> IdmParams {
        IdmParams {
            desired_speed: self.idm_desired_speed,
            headway_time: self.t_headway,
            max_accel: self.a_max,
            comfort_decel: self.idm_comfort_decel,
            exponent: self.idm_exponent,
            jam_distance: self.idm_jam_distance,
            max_decel: self.idm_max_decel,
        }
    }

    pub fn mpo(&self) -> MpoConfig {
        MpoConfig {
            gamma: self.gamma,
            lambda: self.lambda,
            retrace_steps: self.retrace_steps,
            batch_size: self.batch_size,
            action_samples: self.action_samples,
            retrace_samples: self.retrace_samples,
            critic_updates: self.critic_updates,
            policy_updates: self.policy_updates,
            target_period: self.target_period,
            budget: KlBudget {
                e_step: self.kl_epsilon,
                mean: self.kl_epsilon_mean,
                std: self.kl_epsilon_std,
                gear: self.kl_epsilon_gear,
            },
            dual_lr: self.dual_lr,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            actor_hidden: self.actor_hidden.clone(),
            critic_hidden: self.critic_hidden.clone(),
            activation: self.activation,
        }
    }

    pub fn reward_weights(&self) -> RewardWeights {
        RewardWeights {
            accel: self.w_accel,
            torque: self.w_torque,
            fuel: self.w_fuel,
            shift: self.w_shift,
            reserve: self.w_reserve,
        }
    }

    pub fn noise(&self) -> NoisePolicy {
        NoisePolicy {
            amplitude: self.noise_amplitude,
            period: self.noise_period,
        }
    }

    pub fn reward_norms(&self, pt: &Powertrain) -> RewardNorms {
        RewardNorms {
            accel_error: self.a_max,
            torque: pt.reference_wheel_torque(),
            fuel_rate: pt.engine.fuel_map.max_value(),
        }
    }

    pub fn state_norms(&self, pt: &Powertrain) -> StateNorms {
        StateNorms::new(self.a_max, pt.reference_wheel_torque())
    }

    /// Torque range of the learned head: the full wheel range for the
    /// from-scratch agent, a fraction of it for the residual.
    pub fn head_config(&self, pt: &Powertrain) -> HeadConfig {
        let t = pt.reference_wheel_torque();
        let range = match self.agent {
            AgentKind::Rpl => self.residual_range * t,
            _ => t,
        };
        HeadConfig {
            torque_range: range,
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max,
        }
    }

    /// Synthetic powertrain unless a directory of CSV tables is configured.
    pub fn powertrain(&self) -> Result<Powertrain> {
        match &self.powertrain_dir {
            Some(dir) => crate::plant::dataset::load_powertrain(dir, self.vehicle()),
            None => {
                let mut pt = crate::plant::dataset::synthetic_powertrain();
                pt.vehicle = self.vehicle();
                Powertrain::new(pt.vehicle, pt.engine, pt.transmission)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PathBuf {
        PathBuf::from("run.cfg")
    }

    #[test]
    fn defaults_carry_the_documented_values() {
        let c = RunConfig::default();
        assert_eq!(
            (c.mass, c.frontal_area, c.drag_coefficient, c.dt, c.wheel_radius),
            (9070.0, 7.71, 0.8, 0.2, 0.498)
        );
        assert_eq!((c.a_max, c.rolling_coefficient, c.t_headway), (2.0, 0.015, 3.0));
        assert_eq!((c.actor_lr, c.critic_lr), (5e-5, 1e-4));
        assert_eq!((c.gamma, c.lambda, c.beta), (0.99, 0.9, 0.1));
        assert_eq!(c.retrace_steps, 15);
        assert_eq!((c.kl_epsilon_mean, c.kl_epsilon_std, c.kl_epsilon_gear), (0.1, 0.001, 0.1));
        assert_eq!((c.batch_size, c.action_samples), (3072, 40));
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trips() {
        let mut c = RunConfig::default();
        c.set("actor_hidden", "32, 16").unwrap();
        c.set("agent", "rl").unwrap();
        c.set("powertrain_dir", "/tmp/pt").unwrap();
        c.set("actor_lr", "0.000123456789").unwrap();
        let back = RunConfig::parse(&p(), &c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.actor_hidden, vec![32, 16]);
    }

    #[test]
    fn every_key_appears_in_text() {
        let text = RunConfig::default().to_text();
        for k in RunConfig::keys() {
            assert!(text.lines().any(|l| l.starts_with(&format!("{k} ="))), "{k}");
        }
    }

    #[test]
    fn comments_and_partial_files() {
        let c = RunConfig::parse(&p(), "# tuned\nbeta = 0.2  # looser gate\n\nseed=7\n").unwrap();
        assert_eq!((c.beta, c.seed), (0.2, 7));
        assert_eq!(c.mass, 9070.0);
    }

    #[test]
    fn errors_name_the_line() {
        match RunConfig::parse(&p(), "seed = 1\nbogus = 3\n") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RunConfig::parse(&p(), "gamma = abc"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse(&p(), "gamma 0.9"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(RunConfig::parse(&p(), "gamma = 1.5").is_err());
    }

    #[test]
    fn head_range_depends_on_agent() {
        let mut c = RunConfig::default();
        let pt = c.powertrain().unwrap();
        let full = pt.reference_wheel_torque();
        assert_eq!(c.head_config(&pt).torque_range, 0.5 * full);
        c.agent = AgentKind::Rl;
        assert_eq!(c.head_config(&pt).torque_range, full);
    }
}
