//! Multi-step off-policy Q targets with truncated importance weights.

use crate::error::{Error, Result};

/// Per-step quantities of one segment, already evaluated by the networks.
#[derive(Debug, Clone, Copy)]
pub struct RetraceInputs<'a> {
    /// target-critic value of the stored action, Q'(s_t, a_t)
    pub q: &'a [f64],
    /// E_{a~π} Q'(s_{t+1}, a), zero where s_{t+1} is terminal
    pub v_next: &'a [f64],
    pub rewards: &'a [f64],
    /// trace coefficients c_t = λ·min(1, π(a_t|s_t) / b(a_t|s_t))
    pub traces: &'a [f64],
}

pub fn trace_coefficient(lambda: f64, log_pi: f64, log_b: f64) -> f64 {
    lambda * (log_pi - log_b).min(0.0).exp()
}

/// Backward recursion
/// `Q_ret(t) = r_t + γ·v_next_t + γ·c_{t+1}·(Q_ret(t+1) − q_{t+1})`,
/// bootstrapping from the target critic past the last step.
pub fn retrace_recursion(x: RetraceInputs<'_>, gamma: f64) -> Result<Vec<f64>> {
    let n = x.q.len();
    if n == 0 {
        return Err(Error::EmptySegment);
    }
    for other in [x.v_next.len(), x.rewards.len(), x.traces.len()] {
        if other != n {
            return Err(Error::Shape {
                expected: n,
                got: other,
            });
        }
    }
    let mut out = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        out[t] = x.rewards[t] + gamma * (x.v_next[t] + carry);
        carry = x.traces[t] * (out[t] - x.q[t]);
    }
    Ok(out)
}
