//! Driver surrogate: Intelligent Driver Model car following behind a lead
//! vehicle that replays a drive cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::cycle::DriveCycle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// m/s
    pub desired_speed: f64,
    /// s
    pub headway_time: f64,
    /// m/s²
    pub max_accel: f64,
    /// m/s²
    pub comfort_decel: f64,
    pub exponent: f64,
    /// m
    pub jam_distance: f64,
    /// Magnitude of the lower clamp on the output, m/s².
    pub max_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 30.0,
            headway_time: 3.0,
            max_accel: 2.0,
            comfort_decel: 1.5,
            exponent: 4.0,
            jam_distance: 4.0,
            max_decel: 3.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("desired_speed", self.desired_speed),
            ("headway_time", self.headway_time),
            ("max_accel", self.max_accel),
            ("comfort_decel", self.comfort_decel),
            ("jam_distance", self.jam_distance),
            ("max_decel", self.max_decel),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be > 0, got {v}"),
                });
            }
        }
        if !(self.exponent >= 1.0) {
            return Err(Error::InvalidParam {
                name: "exponent",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    /// Desired bumper gap s* for the given speeds.
    pub fn desired_gap(&self, ego_v: f64, lead_v: f64) -> f64 {
        self.jam_distance
            + ego_v * self.headway_time
            + ego_v * (ego_v - lead_v) / (2.0 * (self.max_accel * self.comfort_decel).sqrt())
    }

    /// Spacing used at episode start: jam distance plus one headway.
    pub fn initial_gap(&self, ego_v: f64) -> f64 {
        self.jam_distance + ego_v * self.headway_time
    }
}

/// IDM acceleration, clamped to `[-max_decel, max_accel]`.
pub fn desired_acceleration(ego_v: f64, gap: f64, lead_v: f64, p: &IdmParams) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::Collision { gap });
    }
    let free = (ego_v / p.desired_speed).powf(p.exponent);
    let interaction = (p.desired_gap(ego_v, lead_v) / gap).powi(2);
    let a = p.max_accel * (1.0 - free - interaction);
    Ok(a.clamp(-p.max_decel, p.max_accel))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadState {
    /// m, measured from the lead's start point
    pub position: f64,
    /// m/s
    pub velocity: f64,
}

/// Lead-vehicle kinematics derived from a drive cycle: speed interpolated
/// linearly, position integrated with the trapezoidal rule.
#[derive(Debug, Clone)]
pub struct LeadTrajectory {
    speeds: Vec<f64>,
    cumulative: Vec<f64>,
}

impl LeadTrajectory {
    pub fn new(cycle: &DriveCycle) -> Self {
        let speeds = cycle.speeds().to_vec();
        let mut cumulative = Vec::with_capacity(speeds.len());
        let mut acc = 0.0;
        cumulative.push(acc);
        for w in speeds.windows(2) {
            acc += 0.5 * (w[0] + w[1]);
            cumulative.push(acc);
        }
        Self { speeds, cumulative }
    }

    pub fn duration(&self) -> f64 {
        (self.speeds.len() - 1) as f64
    }

    pub fn total_distance(&self) -> f64 {
        *self.cumulative.last().expect("cycle has samples")
    }

    pub fn state_at(&self, t: f64) -> Result<LeadState> {
        let end = self.duration();
        if !(0.0..=end).contains(&t) {
            return Err(Error::CycleEnded { time: t, end });
        }
        let i = (t.floor() as usize).min(self.speeds.len().saturating_sub(2));
        if self.speeds.len() == 1 {
            return Ok(LeadState {
                position: 0.0,
                velocity: self.speeds[0],
            });
        }
        let tau = t - i as f64;
        let (v0, v1) = (self.speeds[i], self.speeds[i + 1]);
        let velocity = v0 + tau * (v1 - v0);
        Ok(LeadState {
            position: self.cumulative[i] + 0.5 * (v0 + velocity) * tau,
            velocity,
        })
    }
}

/// Lead state at time `t` of a cycle.
pub fn lead_trajectory(cycle: &DriveCycle, t: f64) -> Result<LeadState> {
    LeadTrajectory::new(cycle).state_at(t)
}
