//! JSON container for a trained agent together with the configuration it
//! was trained under.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::episode::Agent;
use crate::agent::{AgentKind, GateState, HeadConfig, Policy};
use crate::error::{io_err, Error, Result};
use crate::mpo::{DualVars, MpoLearner};
use crate::nn::checkpoint::{NetworkRecord, FORMAT_VERSION};
use crate::nn::{AdamState, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerRecord {
    pub heads: HeadConfig,
    pub policy: NetworkRecord,
    pub critic: NetworkRecord,
    pub target_critic: NetworkRecord,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub duals: DualVars,
    pub critic_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub agent: AgentKind,
    /// resolved `key = value` configuration
    pub config: String,
    pub cycles_trained: usize,
    pub gate: GateState,
    pub learner: Option<LearnerRecord>,
}

impl AgentCheckpoint {
    pub fn capture(agent: &Agent, cfg: &RunConfig, cycles_trained: usize) -> Self {
        Self {
            version: FORMAT_VERSION,
            agent: agent.kind,
            config: cfg.to_text(),
            cycles_trained,
            gate: agent.gate,
            learner: agent.learner.as_ref().map(|l| LearnerRecord {
                heads: l.policy.heads,
                policy: NetworkRecord::from(&l.policy.net),
                critic: NetworkRecord::from(&l.critic),
                target_critic: NetworkRecord::from(&l.target_critic),
                actor_opt: l.actor_opt.clone(),
                critic_opt: l.critic_opt.clone(),
                duals: l.duals,
                critic_steps: l.critic_steps,
            }),
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::parse(Path::new("<checkpoint>"), &self.config)
    }

    pub fn restore(&self) -> Result<(Agent, RunConfig)> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        let cfg = self.run_config()?;
        let learner = match (&self.learner, self.agent) {
            (None, AgentKind::Baseline) => None,
            (Some(r), AgentKind::Rl | AgentKind::Rpl) => {
                let policy = Policy {
                    net: Mlp::try_from(r.policy.clone())?,
                    heads: r.heads,
                };
                if policy.state_dim() != self.agent.state_dim() {
                    return Err(Error::Checkpoint(format!(
                        "policy input width {} does not match a {} agent",
                        policy.state_dim(),
                        self.agent
                    )));
                }
                Some(MpoLearner {
                    cfg: cfg.mpo(),
                    policy,
                    critic: Mlp::try_from(r.critic.clone())?,
                    target_critic: Mlp::try_from(r.target_critic.clone())?,
                    actor_opt: r.actor_opt.clone(),
                    critic_opt: r.critic_opt.clone(),
                    duals: r.duals,
                    critic_steps: r.critic_steps,
                })
            }
            _ => {
                return Err(Error::Checkpoint(format!(
                    "{} checkpoint has inconsistent network records",
                    self.agent
                )))
            }
        };
        Ok((
            Agent {
                kind: self.agent,
                learner,
                gate: self.gate,
            },
            cfg,
        ))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::episode::Environment;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(kind: AgentKind) -> RunConfig {
        RunConfig {
            agent: kind,
            actor_hidden: vec![8, 8],
            critic_hidden: vec![8],
            ..RunConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in [AgentKind::Baseline, AgentKind::Rl, AgentKind::Rpl] {
            let cfg = small(kind);
            let env = Environment::from_config(&cfg).unwrap();
            let agent = Agent::new(&cfg, &env, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let ck = AgentCheckpoint::capture(&agent, &cfg, 3);
            let text = ck.to_json();
            let back = AgentCheckpoint::from_json(&text).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_json(), text);
            let (restored, rcfg) = back.restore().unwrap();
            assert_eq!(restored, agent);
            assert_eq!(rcfg, cfg);
        }
    }

    #[test]
    fn mismatched_records_are_rejected() {
        let cfg = small(AgentKind::Rl);
        let env = Environment::from_config(&cfg).unwrap();
        let agent = Agent::new(&cfg, &env, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut ck = AgentCheckpoint::capture(&agent, &cfg, 0);
        ck.agent = AgentKind::Rpl;
        assert!(ck.restore().is_err());
        ck.agent = AgentKind::Baseline;
        assert!(ck.restore().is_err());
        ck.agent = AgentKind::Rl;
        ck.version = 99;
        assert!(ck.restore().is_err());
        assert!(AgentCheckpoint::from_json("{").is_err());
    }
}
