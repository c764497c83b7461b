//! Multi-objective per-step reward: acceleration tracking, traction torque,
//! fuel rate, gear shifts and engine power reserve, each normalized.

use serde::{Deserialize, Serialize};

use crate::error::{finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub accel: f64,
    pub torque: f64,
    pub fuel: f64,
    pub shift: f64,
    pub reserve: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            accel: 1.0,
            torque: 0.1,
            fuel: 0.5,
            shift: 0.05,
            reserve: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            accel: self.accel * c,
            torque: self.torque * c,
            fuel: self.fuel * c,
            shift: self.shift * c,
            reserve: self.reserve * c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardNorms {
    /// m/s²
    pub accel_error: f64,
    /// N·m at the wheel
    pub torque: f64,
    /// g/s
    pub fuel_rate: f64,
}

impl RewardNorms {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("accel_error", self.accel_error),
            ("torque", self.torque),
            ("fuel_rate", self.fuel_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("norm must be > 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Signals of one transition that enter the reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    /// desired acceleration at t
    pub a_des: f64,
    /// realized acceleration at t+1
    pub a_next: f64,
    /// applied wheel torque at t
    pub torque: f64,
    /// fuel rate at t+1
    pub fuel_rate: f64,
    pub gear_prev: u8,
    pub gear_next: u8,
    /// power reserve at t+1, W
    pub reserve: f64,
    /// best-gear power reserve at t+1, W
    pub reserve_max: f64,
}

/// The five weighted penalty terms, each non-positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerms {
    pub accel: f64,
    pub torque: f64,
    pub fuel: f64,
    pub shift: f64,
    pub reserve: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.accel + self.torque + self.fuel + self.shift + self.reserve
    }
}

pub fn reward_terms(x: &RewardInputs, w: &RewardWeights, n: &RewardNorms) -> Result<RewardTerms> {
    for (what, v) in [
        ("a_des", x.a_des),
        ("a_next", x.a_next),
        ("torque", x.torque),
        ("fuel_rate", x.fuel_rate),
        ("reserve", x.reserve),
        ("reserve_max", x.reserve_max),
    ] {
        finite(what, v)?;
    }
    if !(x.reserve_max > 0.0) {
        return Err(Error::InvalidParam {
            name: "reserve_max",
            reason: format!("must be > 0, got {}", x.reserve_max),
        });
    }
    Ok(RewardTerms {
        accel: -w.accel * (x.a_des - x.a_next).abs() / n.accel_error,
        torque: -w.torque * x.torque.abs() / n.torque,
        fuel: -w.fuel * x.fuel_rate / n.fuel_rate,
        shift: -w.shift * (x.gear_next as f64 - x.gear_prev as f64).abs(),
        reserve: -w.reserve * (x.reserve_max - x.reserve) / x.reserve_max,
    })
}

pub fn reward(x: &RewardInputs, w: &RewardWeights, n: &RewardNorms) -> Result<f64> {
    reward_terms(x, w, n).map(|t| t.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norms() -> RewardNorms {
        RewardNorms {
            accel_error: 2.0,
            torque: 70_000.0,
            fuel_rate: 40.0,
        }
    }

    fn ideal() -> RewardInputs {
        RewardInputs {
            a_des: 0.7,
            a_next: 0.7,
            torque: 0.0,
            fuel_rate: 0.0,
            gear_prev: 4,
            gear_next: 4,
            reserve: 1e5,
            reserve_max: 1e5,
        }
    }

    #[test]
    fn ideal_transition_scores_zero() {
        assert_eq!(reward(&ideal(), &RewardWeights::default(), &norms()).unwrap(), 0.0);
    }

    #[test]
    fn isolated_shift_costs_its_weight() {
        let w = RewardWeights::default();
        let x = RewardInputs {
            gear_next: 5,
            ..ideal()
        };
        assert_eq!(reward(&x, &w, &norms()).unwrap(), -w.shift);
    }

    #[test]
    fn generic_transition_term_by_term() {
        let w = RewardWeights::default();
        let x = RewardInputs {
            a_des: 1.2,
            a_next: 0.4,
            torque: -14_000.0,
            fuel_rate: 6.0,
            gear_prev: 6,
            gear_next: 5,
            reserve: 2.5e4,
            reserve_max: 1e5,
        };
        // 1.0*0.8/2 + 0.1*14000/70000 + 0.5*6/40 + 0.05*1 + 0.1*0.75
        let expect = -(0.4 + 0.02 + 0.075 + 0.05 + 0.075);
        assert!((reward(&x, &w, &norms()).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = RewardWeights::default();
        let x = RewardInputs {
            fuel_rate: f64::NAN,
            ..ideal()
        };
        assert!(reward(&x, &w, &norms()).is_err());
        let x = RewardInputs {
            reserve_max: 0.0,
            reserve: 0.0,
            ..ideal()
        };
        assert!(reward(&x, &w, &norms()).is_err());
    }

    fn inputs() -> impl Strategy<Value = RewardInputs> {
        (
            -3.0..3.0f64,
            -3.0..3.0f64,
            -7e4..7e4f64,
            0.0..40.0f64,
            1u8..=10,
            -1i8..=1,
            0.0..1.0f64,
            1e3..3e5f64,
        )
            .prop_map(|(a, b, t, f, g, d, frac, pmax)| RewardInputs {
                a_des: a,
                a_next: b,
                torque: t,
                fuel_rate: f,
                gear_prev: g,
                gear_next: (g as i8 + d).clamp(1, 10) as u8,
                reserve: frac * pmax,
                reserve_max: pmax,
            })
    }

    proptest! {
        #[test]
        fn never_positive(x in inputs()) {
            prop_assert!(reward(&x, &RewardWeights::default(), &norms()).unwrap() <= 0.0);
        }

        #[test]
        fn linear_in_weights(x in inputs(), c in 0.0..10.0f64) {
            let w = RewardWeights::default();
            let r1 = reward(&x, &w, &norms()).unwrap();
            let r2 = reward(&x, &w.scaled(c), &norms()).unwrap();
            prop_assert!((r2 - c * r1).abs() <= 1e-12 * (1.0 + (c * r1).abs()));
        }

        #[test]
        fn zero_weight_ablates_signal(x in inputs(), df in 0.0..10.0f64) {
            let w = RewardWeights { fuel: 0.0, ..RewardWeights::default() };
            let y = RewardInputs { fuel_rate: x.fuel_rate + df, ..x };
            prop_assert_eq!(reward(&x, &w, &norms()).unwrap(), reward(&y, &w, &norms()).unwrap());
        }
    }
}
