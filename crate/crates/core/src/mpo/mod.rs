//! Off-policy actor-critic learner: replay, Retrace critic targets, a
//! weighted E-step and a trust-region M-step.

pub mod buffer;
pub mod critic;
pub mod estep;
pub mod learner;
pub mod mstep;
pub mod retrace;

pub use buffer::{ReplayBuffer, TrajectorySegment, Transition};
pub use critic::critic_update;
pub use estep::solve_temperature;
pub use learner::{e_step, retrace_targets, EStepOutput, LearnStats, MpoConfig, MpoLearner};
pub use mstep::{head_kl, m_step, DualVars, HeadKl, KlBudget, MStepStats, WeightedSamples};
pub use retrace::{retrace_recursion, RetraceInputs};
