//! Non-parametric policy improvement: per-state softmax weights over sampled
//! actions, with the temperature fixed by the convex dual of a KL bound.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const ETA_MIN: f64 = 1e-6;
pub const ETA_MAX: f64 = 1e3;
const GOLDEN_TOL: f64 = 1e-6;

/// Row-wise `max` and `log mean exp((q − max)/η)`.
fn shifted_log_mean_exp(q: ArrayView2<f64>, eta: f64) -> Vec<(f64, f64)> {
    q.axis_iter(Axis(0))
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|&x| ((x - m) / eta).exp()).sum();
            (m, (s / row.len() as f64).ln())
        })
        .collect()
}

/// g(η) = η·ε + η·mean_s log mean_j exp(Q_sj / η)
pub fn dual(q: ArrayView2<f64>, eta: f64, eps: f64) -> f64 {
    let rows = shifted_log_mean_exp(q, eta);
    let n = rows.len() as f64;
    eta * eps + rows.iter().map(|&(m, l)| m + eta * l).sum::<f64>() / n
}

/// Per-state weights q_sj ∝ exp(Q_sj / η).
pub fn temperature_weights(q: ArrayView2<f64>, eta: f64) -> Array2<f64> {
    let mut w = q.to_owned();
    for mut row in w.axis_iter_mut(Axis(0)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| ((x - m) / eta).exp());
        let s = row.sum();
        row /= s;
    }
    w
}

/// Mean over states of KL(weights ‖ uniform over the samples).
pub fn mean_kl_from_uniform(w: ArrayView2<f64>) -> f64 {
    let m = w.ncols() as f64;
    let total: f64 = w
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * (p * m).ln())
                .sum::<f64>()
        })
        .sum();
    total / w.nrows() as f64
}

/// dg/dη = ε − mean_s KL(q_η ‖ uniform)
pub fn dual_derivative(q: ArrayView2<f64>, eta: f64, eps: f64) -> f64 {
    eps - mean_kl_from_uniform(temperature_weights(q, eta).view())
}

/// Minimizes the dual over `[ETA_MIN, ETA_MAX]`: golden-section search to
/// 1e-6, then bisection on the sign of the derivative inside the final
/// bracket to resolve the minimizer to machine precision.
pub fn solve_temperature(q: ArrayView2<f64>, eps: f64) -> Result<f64> {
    if q.nrows() == 0 || q.ncols() < 2 {
        return Err(Error::Shape {
            expected: 2,
            got: q.ncols(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParam {
            name: "kl_epsilon",
            reason: format!("must be > 0, got {eps}"),
        });
    }
    if let Some(v) = q.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "E-step Q value",
            value: *v,
        });
    }
    let g = |eta: f64| dual(q, eta, eps);
    let (mut lo, mut hi) = (ETA_MIN, ETA_MAX);
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - invphi * (hi - lo);
    let mut d = lo + invphi * (hi - lo);
    let (mut gc, mut gd) = (g(c), g(d));
    while hi - lo > GOLDEN_TOL {
        if !(gc.is_finite() && gd.is_finite()) {
            return Err(Error::DualFailure {
                lo,
                hi,
                g_lo: gc,
                g_hi: gd,
            });
        }
        if gc < gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - invphi * (hi - lo);
            gc = g(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + invphi * (hi - lo);
            gd = g(d);
        }
    }
    // widen by one tolerance so the root of g' is inside, then bisect
    let mut a = (lo - GOLDEN_TOL).max(ETA_MIN);
    let mut b = (hi + GOLDEN_TOL).min(ETA_MAX);
    let da = dual_derivative(q, a, eps);
    let db = dual_derivative(q, b, eps);
    if !(da.is_finite() && db.is_finite()) {
        return Err(Error::DualFailure {
            lo: a,
            hi: b,
            g_lo: g(a),
            g_hi: g(b),
        });
    }
    if da >= 0.0 {
        return Ok(a);
    }
    if db <= 0.0 {
        return Ok(b);
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if dual_derivative(q, mid, eps) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Independent oracle: find η where KL(softmax(Q/η) ‖ uniform) = ε by
    // regula falsi in log η, with its own softmax.
    fn oracle_weights(q: &[f64], eps: f64) -> Vec<f64> {
        let soft = |eta: f64| {
            let m = q.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = q.iter().map(|x| ((x - m) / eta).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let kl = |eta: f64| {
            let n = q.len() as f64;
            soft(eta).iter().filter(|&&p| p > 0.0).map(|p| p * (p * n).ln()).sum::<f64>() - eps
        };
        let (mut a, mut b) = ((1e-3f64).ln(), (1e3f64).ln());
        let (mut fa, mut fb) = (kl(a.exp()), kl(b.exp()));
        assert!(fa > 0.0 && fb < 0.0);
        for _ in 0..500 {
            let c = b - fb * (b - a) / (fb - fa);
            let fc = kl(c.exp());
            if fc == 0.0 {
                a = c;
                b = c;
                break;
            }
            if fc > 0.0 {
                a = c;
                fa = fc;
                fb *= 0.5;
            } else {
                b = c;
                fb = fc;
                fa *= 0.5;
            }
            if (b - a).abs() < 1e-15 {
                break;
            }
        }
        soft((0.5 * (a + b)).exp())
    }

    #[test]
    fn four_samples_match_oracle() {
        let q = array![[1.0, 2.0, 3.0, 4.0]];
        let eta = solve_temperature(q.view(), 0.1).unwrap();
        let w = temperature_weights(q.view(), eta);
        let want = oracle_weights(&[1.0, 2.0, 3.0, 4.0], 0.1);
        for j in 0..4 {
            assert!((w[[0, j]] - want[j]).abs() < 1e-8, "{} vs {}", w[[0, j]], want[j]);
        }
        assert!((mean_kl_from_uniform(w.view()) - 0.1).abs() < 1e-8);
    }

    #[test]
    fn random_single_states_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let m = rng.random_range(2..12);
            let row: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
            let eps = rng.random_range(0.01..0.5);
            let max_kl = (m as f64).ln();
            let spread = row.iter().cloned().fold(f64::MIN, f64::max) - row.iter().cloned().fold(f64::MAX, f64::min);
            if eps >= max_kl * 0.9 || spread < 0.5 {
                continue;
            }
            let q = Array2::from_shape_vec((1, m), row.clone()).unwrap();
            let eta = solve_temperature(q.view(), eps).unwrap();
            let w = temperature_weights(q.view(), eta);
            let want = oracle_weights(&row, eps);
            for j in 0..m {
                assert!((w[[0, j]] - want[j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn equal_values_give_uniform_weights() {
        let q = array![[2.5, 2.5, 2.5, 2.5, 2.5]];
        let eta = solve_temperature(q.view(), 0.1).unwrap();
        for w in temperature_weights(q.view(), eta) {
            assert!((w - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_budget_goes_greedy() {
        let q = array![[0.0, 1.0, 3.0, 2.0]];
        let eta = solve_temperature(q.view(), 1e6).unwrap();
        assert_eq!(eta, ETA_MIN);
        let w = temperature_weights(q.view(), eta);
        assert_eq!(w.row(0).to_vec(), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn weights_normalized_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = Array2::from_shape_fn((32, 40), |_| rng.random_range(-20.0..0.0));
        let eta = solve_temperature(q.view(), 0.1).unwrap();
        let w = temperature_weights(q.view(), eta);
        for (qr, wr) in q.axis_iter(Axis(0)).zip(w.axis_iter(Axis(0))) {
            assert!((wr.sum() - 1.0).abs() < 1e-8);
            for i in 0..40 {
                assert!(wr[i] >= 0.0);
                for j in 0..40 {
                    if qr[i] > qr[j] {
                        assert!(wr[i] >= wr[j]);
                    }
                }
            }
        }
        assert!((mean_kl_from_uniform(w.view()) - 0.1).abs() < 1e-6);
    }

    #[test]
    fn dual_is_convex_with_unique_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = Array2::from_shape_fn((16, 10), |_| rng.random_range(-3.0..3.0));
        let eps = 0.1;
        let eta = solve_temperature(q.view(), eps).unwrap();
        // second differences on a log grid across the bracket
        let n = 400;
        let grid: Vec<f64> = (0..=n)
            .map(|i| (ETA_MIN.ln() + (ETA_MAX.ln() - ETA_MIN.ln()) * i as f64 / n as f64).exp())
            .collect();
        let g: Vec<f64> = grid.iter().map(|&e| dual(q.view(), e, eps)).collect();
        for i in 1..n {
            let (x0, x1, x2) = (grid[i - 1], grid[i], grid[i + 1]);
            let chord = g[i - 1] + (g[i + 1] - g[i - 1]) * (x1 - x0) / (x2 - x0);
            assert!(g[i] <= chord + 1e-9 * chord.abs().max(1.0));
        }
        // refine around the grid minimum and land on the same point
        let k = (0..=n).min_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
        let (mut lo, mut hi) = (grid[k.saturating_sub(1)], grid[(k + 1).min(n)]);
        for _ in 0..100 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if dual(q.view(), m1, eps) < dual(q.view(), m2, eps) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        assert!(((lo + hi) / 2.0 - eta).abs() < 1e-5 * eta.max(1.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_temperature(array![[1.0]].view(), 0.1).is_err());
        assert!(solve_temperature(array![[1.0, f64::NAN]].view(), 0.1).is_err());
        assert!(solve_temperature(array![[1.0, 2.0]].view(), 0.0).is_err());
    }
}
