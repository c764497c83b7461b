//! Q-network inputs and the squared-error critic step.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Mlp};

/// Rows evaluated per network call when batches get large.
const CHUNK_ROWS: usize = 8192;

/// Action encoding appended to the state: normalized torque, gear one-hot.
pub const ACTION_FEATURES: usize = 4;

pub fn write_features(row: &mut [f64], state: &[f64], torque_norm: f64, gear_idx: usize) {
    let d = state.len();
    row[..d].copy_from_slice(state);
    row[d] = torque_norm;
    row[d + 1..d + 4].fill(0.0);
    row[d + 1 + gear_idx] = 1.0;
}

pub fn critic_features(states: &[&[f64]], torques: &[f64], gears: &[usize]) -> Array2<f64> {
    let d = states.first().map_or(0, |s| s.len());
    let mut x = Array2::zeros((states.len(), d + ACTION_FEATURES));
    for (i, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        let row = row.as_slice_mut().expect("standard layout");
        write_features(row, states[i], torques[i], gears[i]);
    }
    x
}

/// Single-output network evaluated in bounded-size chunks.
pub fn q_values(net: &Mlp, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(inputs.nrows());
    let mut start = 0;
    while start < inputs.nrows() {
        let end = (start + CHUNK_ROWS).min(inputs.nrows());
        let y = net.forward_batch(inputs.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end]).assign(&y.column(0));
        start = end;
    }
    Ok(out)
}

/// One optimizer step on mean (Q − target)². Returns the loss before the step.
pub fn critic_update(
    critic: &mut Mlp,
    opt: &mut AdamState,
    inputs: ArrayView2<f64>,
    targets: &[f64],
) -> Result<f64> {
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::EmptySegment);
    }
    if targets.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: targets.len(),
        });
    }
    let cache = critic.forward_cached(inputs)?;
    let mut grad = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        let e = cache.output[[i, 0]] - targets[i];
        loss += e * e;
        grad[[i, 0]] = 2.0 * e / n as f64;
    }
    loss /= n as f64;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("critic loss {loss}")));
    }
    let (grads, _) = critic.backward(&cache, grad.view())?;
    adam_step(critic, &grads, opt)?;
    Ok(loss)
}
