//! Small dense-network toolkit: MLPs with analytic gradients, Adam, and
//! checkpoint records.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{adam_step, apply_update, AdamState};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, Mlp};
