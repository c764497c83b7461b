#![allow(dead_code)]

use powertrain_rpl::agent::AgentKind;
use powertrain_rpl::harness::{synthetic_urban_cycle, DriveCycle, RunConfig};

/// Learner sizes small enough for a debug-profile test run.
pub fn small_config(agent: AgentKind, seed: u64, cycles: usize) -> RunConfig {
    RunConfig {
        agent,
        seed,
        batch_size: 64,
        action_samples: 8,
        retrace_samples: 4,
        retrace_steps: 5,
        critic_updates: 2,
        policy_updates: 1,
        actor_hidden: vec![32, 32],
        critic_hidden: vec![32, 32],
        learn_every: 50,
        training_cycles: cycles,
        checkpoint_every: 0,
        ..RunConfig::default()
    }
}

/// First five minutes of the bundled urban cycle.
pub fn short_cycle() -> DriveCycle {
    let full = synthetic_urban_cycle();
    DriveCycle::new("urban_300s", full.speeds()[..=300].to_vec()).unwrap()
}

/// One line per acceptance criterion.
pub fn report(id: &str, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {id} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}
