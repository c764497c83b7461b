//! Drive cycles, configuration, episode simulation, training, evaluation
//! and the files a run produces.

pub mod config;
pub mod cycle;
pub mod episode;
pub mod metrics;

pub use config::RunConfig;
pub use cycle::{load_cycle, perturb_cycle, synthetic_urban_cycle, DriveCycle, NoisePolicy};
pub use episode::{run_episode, train_episode, ActionMode, Agent, Environment, TrainState};
pub use metrics::{compute_metrics, EpisodeLog, Metrics, Stat, StepRecord};
pub mod checkpoint;
pub mod evaluate;
pub mod output;
pub mod train;

pub use checkpoint::AgentCheckpoint;
pub use evaluate::{evaluate, CycleSummary};
pub use train::{greedy_eval, train, CurveRow, EvalStatus, TrainOptions, TrainOutcome};
