//! Longitudinal truck powertrain simulator with residual and from-scratch
//! MPO eco-driving agents.

pub mod error;
pub mod interp;
pub mod mpo;
pub mod nn;
pub mod plant;
pub mod reward;
mod textio;

pub use error::{Error, Result};
pub mod agent;
pub mod driver;
pub mod harness;
pub mod source;
