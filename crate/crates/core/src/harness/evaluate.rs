//! Repeated noisy greedy episodes per cycle, run in parallel and reduced in
//! repetition order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::cycle::{perturb_cycle, DriveCycle};
use super::episode::{Agent, Environment};
use super::metrics::{Metrics, Stat};
use super::train::{greedy_eval, stream, streams, EvalStatus};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub status: EvalStatus,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub cycle: String,
    pub reps: usize,
    /// repetitions that collided or stalled, excluded from the statistics
    pub failures: usize,
    pub mpg: Stat,
    pub accel_rmse: Stat,
    pub shift_count: Stat,
    pub travel_time: Stat,
    pub fuel_used: Stat,
    pub runs: Vec<RepResult>,
}

impl CycleSummary {
    fn from_runs(cycle: &str, runs: Vec<RepResult>) -> Self {
        let ok: Vec<&Metrics> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let stat = |f: fn(&Metrics) -> f64| Stat::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
        Self {
            cycle: cycle.to_string(),
            reps: runs.len(),
            failures: runs.len() - ok.len(),
            mpg: stat(|m| m.mpg),
            accel_rmse: stat(|m| m.accel_rmse),
            shift_count: stat(|m| m.shift_count as f64),
            travel_time: stat(|m| m.travel_time),
            fuel_used: stat(|m| m.fuel_used),
            runs,
        }
    }
}

/// `reps` greedy episodes per cycle, each on an independently perturbed
/// copy. Repetition `r` of cycle `i` always uses the same noise stream.
pub fn evaluate(
    agent: &Agent,
    cfg: &RunConfig,
    cycles: &[DriveCycle],
    reps: usize,
    seed: u64,
) -> Result<Vec<CycleSummary>> {
    let env = Environment::from_config(cfg)?;
    let noise = cfg.noise();
    cycles
        .iter()
        .enumerate()
        .map(|(ci, cycle)| {
            let runs: Vec<Result<RepResult>> = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let id = streams::EVAL_REPS + (ci * reps + rep) as u64;
                    let mut rng = stream(seed, id);
                    let noisy = perturb_cycle(cycle, &noise, &mut rng);
                    let (status, _, metrics) = greedy_eval(&env, agent, &noisy, cfg.fuel_density, &mut rng)?;
                    Ok(RepResult { rep, status, metrics })
                })
                .collect();
            let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
            Ok(CycleSummary::from_runs(&cycle.name, runs))
        })
        .collect()
}
