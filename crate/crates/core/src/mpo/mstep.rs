//! Parametric fit of the policy to the E-step weights under separate trust
//! regions for the torque mean, the torque spread and the gear categorical.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::agent::policy::{gaussian_log_pdf, heads_from_raw, sigmoid, HeadConfig, HeadOutput};
use crate::agent::Policy;
use crate::error::{Error, Result};
use crate::nn::{apply_update, AdamState};

const MAX_BACKTRACKS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlBudget {
    /// E-step bound on KL(q ‖ π)
    pub e_step: f64,
    pub mean: f64,
    pub std: f64,
    pub gear: f64,
}

impl Default for KlBudget {
    fn default() -> Self {
        Self {
            e_step: 0.1,
            mean: 0.1,
            std: 0.001,
            gear: 0.1,
        }
    }
}

impl KlBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kl_epsilon", self.e_step),
            ("kl_epsilon_mean", self.mean),
            ("kl_epsilon_std", self.std),
            ("kl_epsilon_gear", self.gear),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be > 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualVars {
    /// E-step temperature from the last solve
    pub eta: f64,
    pub alpha_mean: f64,
    pub alpha_std: f64,
    pub alpha_gear: f64,
}

impl Default for DualVars {
    fn default() -> Self {
        Self {
            eta: 1.0,
            alpha_mean: 1.0,
            alpha_std: 1.0,
            alpha_gear: 1.0,
        }
    }
}

/// Batch-mean KL(old ‖ new) per head.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadKl {
    /// mean moved, spread frozen at the old value
    pub mean: f64,
    /// spread moved, mean frozen at the old value
    pub std: f64,
    pub gear: f64,
}

impl HeadKl {
    pub fn within(&self, b: &KlBudget) -> bool {
        self.mean <= b.mean && self.std <= b.std && self.gear <= b.gear
    }

    pub fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.std.is_finite() && self.gear.is_finite()
    }
}

pub fn head_kl(old: &[HeadOutput], new: &[HeadOutput]) -> HeadKl {
    let n = old.len() as f64;
    let mut kl = HeadKl::default();
    for (o, p) in old.iter().zip(new) {
        kl.mean += (p.mean - o.mean).powi(2) / (2.0 * o.std * o.std);
        kl.std += (p.std / o.std).ln() + o.std * o.std / (2.0 * p.std * p.std) - 0.5;
        kl.gear += (0..3)
            .filter(|&k| o.probs[k] > 0.0)
            .map(|k| o.probs[k] * (o.probs[k] / p.probs[k]).ln())
            .sum::<f64>();
    }
    kl.mean /= n;
    kl.std /= n;
    kl.gear /= n;
    kl
}

/// Sampled actions and their E-step weights, one row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSamples {
    /// normalized torques
    pub torques: Array2<f64>,
    /// gear indices into [-1, 0, +1]
    pub gears: Array2<usize>,
    /// rows sum to 1
    pub weights: Array2<f64>,
}

/// Lagrangian minimized by the M-step, as a function of the raw network
/// outputs `z` (one row per state).
pub fn m_step_loss(
    z: ArrayView2<f64>,
    old: &[HeadOutput],
    x: &WeightedSamples,
    duals: &DualVars,
    cfg: &HeadConfig,
) -> f64 {
    let new = heads_from_raw(&z.to_owned(), cfg);
    let b = old.len() as f64;
    let mut fit = 0.0;
    for (i, (o, p)) in old.iter().zip(&new).enumerate() {
        for j in 0..x.weights.ncols() {
            let a = x.torques[[i, j]];
            let q = x.weights[[i, j]];
            fit += q
                * (gaussian_log_pdf(a, p.mean, o.std)
                    + gaussian_log_pdf(a, o.mean, p.std)
                    + p.probs[x.gears[[i, j]]].ln());
        }
    }
    let kl = head_kl(old, &new);
    -fit / b + duals.alpha_mean * kl.mean + duals.alpha_std * kl.std + duals.alpha_gear * kl.gear
}

/// Analytic gradient of [`m_step_loss`] with respect to `z`.
pub fn m_step_output_grad(
    z: ArrayView2<f64>,
    old: &[HeadOutput],
    x: &WeightedSamples,
    duals: &DualVars,
    cfg: &HeadConfig,
) -> Array2<f64> {
    let b = old.len() as f64;
    let mut g = Array2::zeros(z.raw_dim());
    for (i, o) in old.iter().enumerate() {
        let p = HeadOutput::from_raw(z.row(i), cfg);
        let vo = o.std * o.std;
        let mut d_mean = duals.alpha_mean * (p.mean - o.mean) / vo;
        let s3 = p.std.powi(3);
        let mut d_std = duals.alpha_std * (1.0 / p.std - vo / s3);
        let mut counts = [0.0; 3];
        for j in 0..x.weights.ncols() {
            let a = x.torques[[i, j]];
            let q = x.weights[[i, j]];
            d_mean -= q * (a - p.mean) / vo;
            d_std -= q * ((a - o.mean).powi(2) / s3 - 1.0 / p.std);
            counts[x.gears[[i, j]]] += q;
        }
        let s = sigmoid(z[[i, 1]]);
        g[[i, 0]] = d_mean * (1.0 - p.mean * p.mean) / b;
        g[[i, 1]] = d_std * (cfg.sigma_max - cfg.sigma_min) * s * (1.0 - s) / b;
        for k in 0..3 {
            g[[i, 2 + k]] =
                (-(counts[k] - p.probs[k]) + duals.alpha_gear * (p.probs[k] - o.probs[k])) / b;
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MStepStats {
    pub loss: f64,
    /// KL of the full optimizer step, drives the multipliers
    pub kl_proposed: HeadKl,
    /// KL of the accepted step
    pub kl: HeadKl,
    /// fraction of the optimizer step that was applied
    pub step_scale: f64,
}

/// One optimizer step on the Lagrangian followed by projected dual ascent
/// `α ← max(0, α + dual_lr·(KL/ε − 1))`. If the full step leaves a trust
/// region it is halved until every KL is inside the budget.
#[allow(clippy::too_many_arguments)]
pub fn m_step(
    policy: &mut Policy,
    adam: &mut AdamState,
    states: ArrayView2<f64>,
    samples: &WeightedSamples,
    budget: &KlBudget,
    duals: &mut DualVars,
    dual_lr: f64,
) -> Result<MStepStats> {
    let cache = policy.net.forward_cached(states)?;
    let old = heads_from_raw(&cache.output, &policy.heads);
    let z = cache.output.view();
    let loss = m_step_loss(z, &old, samples, duals, &policy.heads);
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("M-step loss {loss}")));
    }
    let dz = m_step_output_grad(z, &old, samples, duals, &policy.heads);
    let (grads, _) = policy.net.backward(&cache, dz.view())?;
    let delta = adam.compute_update(&grads)?;

    let trial_kl = |scale: f64| -> Result<(crate::nn::Mlp, HeadKl)> {
        let mut net = policy.net.clone();
        apply_update(&mut net, &delta, scale);
        let new = heads_from_raw(&net.forward_batch(states)?, &policy.heads);
        Ok((net, head_kl(&old, &new)))
    };
    let (full_net, kl_proposed) = trial_kl(1.0)?;
    if !kl_proposed.is_finite() {
        return Err(Error::NonFinite {
            what: "M-step KL",
            value: kl_proposed.mean + kl_proposed.std + kl_proposed.gear,
        });
    }
    let mut accepted = None;
    if kl_proposed.within(budget) {
        accepted = Some((full_net, kl_proposed, 1.0));
    } else {
        let mut scale = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            scale *= 0.5;
            let (net, kl) = trial_kl(scale)?;
            if kl.is_finite() && kl.within(budget) {
                accepted = Some((net, kl, scale));
                break;
            }
        }
    }
    let (kl, step_scale) = match accepted {
        Some((net, kl, s)) => {
            policy.net = net;
            (kl, s)
        }
        None => (HeadKl::default(), 0.0),
    };

    let ascend = |a: f64, kl: f64, eps: f64| (a + dual_lr * (kl / eps - 1.0)).max(0.0);
    duals.alpha_mean = ascend(duals.alpha_mean, kl_proposed.mean, budget.mean);
    duals.alpha_std = ascend(duals.alpha_std, kl_proposed.std, budget.std);
    duals.alpha_gear = ascend(duals.alpha_gear, kl_proposed.gear, budget.gear);

    Ok(MStepStats {
        loss,
        kl_proposed,
        kl,
        step_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(rng: &mut ChaCha8Rng, b: usize, m: usize, one_hot: bool) -> WeightedSamples {
        let torques = Array2::from_shape_fn((b, m), |_| rng.random_range(-1.0..1.0));
        let gears = Array2::from_shape_fn((b, m), |_| rng.random_range(0..3));
        let mut weights = Array2::from_shape_fn((b, m), |_| rng.random_range(0.0..1.0));
        for mut row in weights.rows_mut() {
            if one_hot {
                let k = rng.random_range(0..m);
                row.fill(0.0);
                row[k] = 1.0;
            } else {
                let s = row.sum();
                row /= s;
            }
        }
        WeightedSamples {
            torques,
            gears,
            weights,
        }
    }

    #[test]
    fn output_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = HeadConfig::new(1.0);
        for case in 0..20 {
            let b = 4;
            let z = Array2::from_shape_fn((b, 5), |_| rng.random_range(-1.5..1.5));
            let old_z = &z + &Array2::from_shape_fn((b, 5), |_| rng.random_range(-0.3..0.3));
            let old = heads_from_raw(&old_z, &cfg);
            let x = random_samples(&mut rng, b, 6, case % 3 == 0);
            let duals = DualVars {
                eta: 1.0,
                alpha_mean: rng.random_range(0.0..5.0),
                alpha_std: rng.random_range(0.0..50.0),
                alpha_gear: rng.random_range(0.0..5.0),
            };
            let g = m_step_output_grad(z.view(), &old, &x, &duals, &cfg);
            let h = 1e-6;
            for i in 0..b {
                for k in 0..5 {
                    let mut zp = z.clone();
                    zp[[i, k]] += h;
                    let mut zm = z.clone();
                    zm[[i, k]] -= h;
                    let fd = (m_step_loss(zp.view(), &old, &x, &duals, &cfg)
                        - m_step_loss(zm.view(), &old, &x, &duals, &cfg))
                        / (2.0 * h);
                    let err = (fd - g[[i, k]]).abs() / (fd.abs().max(g[[i, k]].abs()) + 1e-4);
                    assert!(err < 1e-5, "case {case} ({i},{k}): fd {fd} vs {}", g[[i, k]]);
                }
            }
        }
    }

    #[test]
    fn kl_is_zero_for_identical_heads() {
        let cfg = HeadConfig::new(1.0);
        let z = Array2::from_shape_fn((3, 5), |(i, k)| 0.1 * (i + k) as f64);
        let h = heads_from_raw(&z, &cfg);
        assert_eq!(head_kl(&h, &h), HeadKl::default());
    }

    #[test]
    fn uniform_weights_reduce_to_maximum_likelihood() {
        // with no penalty and the mean at the old mean, the mean gradient is
        // the plain log-likelihood gradient toward the sample average
        let cfg = HeadConfig::new(1.0);
        let z = Array2::from_shape_vec((1, 5), vec![0.2, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let old = heads_from_raw(&z, &cfg);
        let torques = Array2::from_shape_vec((1, 4), vec![-0.5, 0.1, 0.3, 0.9]).unwrap();
        let x = WeightedSamples {
            torques: torques.clone(),
            gears: Array2::from_shape_vec((1, 4), vec![0, 1, 1, 2]).unwrap(),
            weights: Array2::from_elem((1, 4), 0.25),
        };
        let duals = DualVars {
            alpha_mean: 0.0,
            alpha_std: 0.0,
            alpha_gear: 0.0,
            ..DualVars::default()
        };
        let g = m_step_output_grad(z.view(), &old, &x, &duals, &cfg);
        let mu = old[0].mean;
        let mle: f64 = torques.iter().map(|a| (a - mu) / old[0].std.powi(2)).sum::<f64>() / 4.0;
        assert!((g[[0, 0]] + mle * (1.0 - mu * mu)).abs() < 1e-12);
        // categorical: gradient is p − empirical frequency
        let freq = [0.25, 0.5, 0.25];
        for k in 0..3 {
            assert!((g[[0, 2 + k]] - (old[0].probs[k] - freq[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_weights_pull_toward_selected_action() {
        let cfg = HeadConfig::new(1.0);
        let z = Array2::zeros((1, 5));
        let old = heads_from_raw(&z, &cfg);
        let x = WeightedSamples {
            torques: Array2::from_shape_vec((1, 3), vec![-0.4, 0.7, 0.2]).unwrap(),
            gears: Array2::from_shape_vec((1, 3), vec![0, 2, 1]).unwrap(),
            weights: Array2::from_shape_vec((1, 3), vec![0.0, 1.0, 0.0]).unwrap(),
        };
        let g = m_step_output_grad(z.view(), &old, &x, &DualVars::default(), &cfg);
        // descent direction raises the mean and the upshift logit
        assert!(g[[0, 0]] < 0.0);
        assert!(g[[0, 4]] < 0.0 && g[[0, 2]] > 0.0 && g[[0, 3]] > 0.0);
    }

    #[test]
    fn accepted_step_respects_budgets() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut policy = Policy::new(6, &[16, 16], Activation::Elu, HeadConfig::new(1.0), &mut rng);
        let mut adam = AdamState::new(&policy.net, 0.05);
        let mut duals = DualVars::default();
        let budget = KlBudget::default();
        let states = Array2::from_shape_fn((8, 6), |_| rng.random_range(-1.0..1.0));
        let mut backtracked = 0;
        for _ in 0..30 {
            let x = random_samples(&mut rng, 8, 10, true);
            let before = policy.heads_batch(states.view()).unwrap();
            let stats = m_step(&mut policy, &mut adam, states.view(), &x, &budget, &mut duals, 0.1).unwrap();
            let after = policy.heads_batch(states.view()).unwrap();
            let kl = head_kl(&before, &after);
            assert!(kl.within(&budget), "{kl:?}");
            assert_eq!(kl, stats.kl);
            if stats.step_scale < 1.0 {
                backtracked += 1;
            }
            assert!(duals.alpha_mean >= 0.0 && duals.alpha_std >= 0.0 && duals.alpha_gear >= 0.0);
        }
        assert!(backtracked > 0, "large learning rate should trigger backtracking");
    }

    #[test]
    fn duals_rise_when_budget_is_exceeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut policy = Policy::new(3, &[8], Activation::Tanh, HeadConfig::new(1.0), &mut rng);
        let mut adam = AdamState::new(&policy.net, 0.5);
        let mut duals = DualVars::default();
        let budget = KlBudget {
            e_step: 0.1,
            mean: 1e-9,
            std: 1e-9,
            gear: 1e-9,
        };
        let states = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let x = random_samples(&mut rng, 4, 5, true);
        let before = duals;
        m_step(&mut policy, &mut adam, states.view(), &x, &budget, &mut duals, 0.1).unwrap();
        assert!(duals.alpha_mean > before.alpha_mean);
        assert!(duals.alpha_gear > before.alpha_gear);
    }
}
