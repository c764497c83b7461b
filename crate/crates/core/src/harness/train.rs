//! Repeated noisy training cycles with a noise-free greedy evaluation after
//! each one.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::AgentCheckpoint;
use super::config::RunConfig;
use super::cycle::{perturb_cycle, DriveCycle};
use super::episode::{run_episode, train_episode, ActionMode, Agent, Environment, TrainState};
use super::metrics::{compute_metrics, EpisodeLog, Metrics};
use crate::error::{Error, Result};

/// Independent random streams derived from one seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const POLICY: u64 = 2;
    pub const LEARNER: u64 = 3;
    pub const EVAL: u64 = 4;
    /// first stream used by repeated evaluation episodes
    pub const EVAL_REPS: u64 = 1 << 32;
}

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// How a greedy evaluation episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    /// gap to the lead vehicle closed
    Collided,
    /// the truck never moved, so fuel economy is undefined
    Stalled,
}

impl EvalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalStatus::Ok => "ok",
            EvalStatus::Collided => "collided",
            EvalStatus::Stalled => "stalled",
        }
    }
}

/// Greedy episode and its metrics, mapping collisions and zero-distance
/// runs to a status instead of an error.
pub fn greedy_eval<R: rand::Rng + ?Sized>(
    env: &Environment,
    agent: &Agent,
    cycle: &DriveCycle,
    fuel_density: f64,
    rng: &mut R,
) -> Result<(EvalStatus, Option<EpisodeLog>, Option<Metrics>)> {
    let log = match run_episode(env, agent, cycle, ActionMode::Greedy, rng) {
        Ok(l) => l,
        Err(Error::Collision { .. }) => return Ok((EvalStatus::Collided, None, None)),
        Err(e) => return Err(e),
    };
    match compute_metrics(&log, fuel_density) {
        Ok(m) => Ok((EvalStatus::Ok, Some(log), Some(m))),
        Err(Error::ZeroDistance) => Ok((EvalStatus::Stalled, Some(log), None)),
        Err(e) => Err(e),
    }
}

/// One learning-curve entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub cycle: usize,
    pub status: EvalStatus,
    /// present when the evaluation completed with non-zero distance
    pub eval: Option<Metrics>,
    pub train_collided: bool,
    pub gate_active: bool,
    pub critic_loss: Option<f64>,
    pub eta: Option<f64>,
}

impl CurveRow {
    pub const CSV_HEADER: &'static str =
        "cycle,mpg,accel_rmse,shift_count,travel_time,reward_sum,status,train_collided,gate_active,critic_loss,eta";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let e = self.eval.as_ref();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.cycle,
            opt(e.map(|m| m.mpg)),
            opt(e.map(|m| m.accel_rmse)),
            e.map(|m| m.shift_count.to_string()).unwrap_or_default(),
            opt(e.map(|m| m.travel_time)),
            opt(e.map(|m| m.reward_sum)),
            self.status.as_str(),
            self.train_collided as u8,
            self.gate_active as u8,
            opt(self.critic_loss),
            opt(self.eta),
        )
    }
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from(CurveRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateEvent {
    /// 1-based training cycle during which the gate opened
    pub cycle: usize,
    /// environment steps since the start of training
    pub env_step: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// keep the step log of every training episode
    pub keep_train_logs: bool,
    /// write a checkpoint every `checkpoint_every` cycles here
    pub checkpoint_dir: Option<PathBuf>,
    /// print a line per cycle to stderr
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub curve: Vec<CurveRow>,
    /// source policy alone, greedy on the noise-free cycle
    pub baseline: Metrics,
    pub baseline_log: EpisodeLog,
    /// trained agent, greedy on the noise-free cycle; None on collision
    pub final_log: Option<EpisodeLog>,
    pub final_status: EvalStatus,
    pub gate_opened: Option<GateEvent>,
    pub train_logs: Vec<std::result::Result<EpisodeLog, String>>,
}

pub fn train(cfg: &RunConfig, cycle: &DriveCycle, opts: &TrainOptions) -> Result<TrainOutcome> {
    let env = Environment::from_config(cfg)?;
    let mut agent = Agent::new(cfg, &env, &mut stream(cfg.seed, streams::INIT))?;
    let mut noise_rng = stream(cfg.seed, streams::NOISE);
    let mut policy_rng = stream(cfg.seed, streams::POLICY);
    let mut train = TrainState::new(
        cfg.replay_capacity,
        cfg.learn_every,
        stream(cfg.seed, streams::LEARNER),
    );
    let noise = cfg.noise();

    let baseline_log = run_episode(
        &env,
        &Agent::baseline(),
        cycle,
        ActionMode::Greedy,
        &mut stream(cfg.seed, streams::EVAL),
    )?;
    let baseline = compute_metrics(&baseline_log, cfg.fuel_density)?;

    let mut curve = Vec::with_capacity(cfg.training_cycles);
    let mut train_logs = Vec::new();
    let mut gate_opened = None;
    let mut last_eval: Option<(EvalStatus, Option<EpisodeLog>)> = None;
    for c in 1..=cfg.training_cycles {
        let noisy = perturb_cycle(cycle, &noise, &mut noise_rng);
        let episode = train_episode(&env, &mut agent, &noisy, &mut policy_rng, &mut train);
        let train_collided = match &episode {
            Ok(_) => false,
            Err(Error::Collision { .. }) => true,
            Err(e) => return Err(Error::Diverged(format!("training cycle {c}: {e}"))),
        };
        if opts.keep_train_logs {
            train_logs.push(episode.map_err(|e| e.to_string()));
        }
        if gate_opened.is_none() {
            if let Some((step, _)) = train.gate_opened {
                gate_opened = Some(GateEvent { cycle: c, env_step: step });
            }
        }
        let (status, eval_log, eval) =
            greedy_eval(&env, &agent, cycle, cfg.fuel_density, &mut stream(cfg.seed, streams::EVAL))?;
        let losses = std::mem::take(&mut train.critic_losses);
        let row = CurveRow {
            cycle: c,
            status,
            eval,
            train_collided,
            gate_active: agent.gate.active,
            critic_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            eta: agent.learner.as_ref().filter(|_| train.learner_calls > 0).map(|l| l.duals.eta),
        };
        if opts.verbose {
            eprintln!("{}", row.csv_row());
        }
        curve.push(row);
        last_eval = Some((status, eval_log));
        if let Some(dir) = &opts.checkpoint_dir {
            if cfg.checkpoint_every > 0 && c % cfg.checkpoint_every == 0 {
                std::fs::create_dir_all(dir).map_err(crate::error::io_err(dir))?;
                AgentCheckpoint::capture(&agent, cfg, c).save(&dir.join(format!("cycle_{c:04}.json")))?;
            }
        }
    }
    let (final_status, final_log) = match last_eval {
        Some(x) => x,
        None => {
            let (s, l, _) = greedy_eval(&env, &agent, cycle, cfg.fuel_density, &mut stream(cfg.seed, streams::EVAL))?;
            (s, l)
        }
    };
    Ok(TrainOutcome {
        agent,
        curve,
        baseline,
        baseline_log,
        final_log,
        final_status,
        gate_opened,
        train_logs,
    })
}
