use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{Grid2d, Table1d};

pub const NUM_GEARS: usize = 10;

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            name,
            reason: format!("must be finite and > 0, got {v}"),
        })
    }
}

/// Chassis and environment constants entering the longitudinal force balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Effective-mass multiplier per gear, first gear first.
    pub rotating_mass_factor: Vec<f64>,
    /// m²
    pub frontal_area: f64,
    pub drag_coeff: f64,
    pub rolling_coeff: f64,
    /// m
    pub wheel_radius: f64,
    /// kg/m³
    pub air_density: f64,
    /// m/s²
    pub gravity: f64,
    /// Wheel-level service brake capability, N·m (positive magnitude).
    pub max_service_brake_torque: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let mass = 9070.0;
        let gravity = 9.81;
        let wheel_radius = 0.498;
        Self {
            mass,
            rotating_mass_factor: (0..NUM_GEARS)
                .map(|k| 1.60 - 0.50 * k as f64 / (NUM_GEARS - 1) as f64)
                .collect(),
            frontal_area: 7.71,
            drag_coeff: 0.8,
            rolling_coeff: 0.015,
            wheel_radius,
            air_density: 1.2,
            gravity,
            max_service_brake_torque: 0.8 * mass * gravity * wheel_radius,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        positive("mass", self.mass)?;
        positive("frontal_area", self.frontal_area)?;
        positive("drag_coeff", self.drag_coeff)?;
        positive("rolling_coeff", self.rolling_coeff)?;
        positive("wheel_radius", self.wheel_radius)?;
        positive("air_density", self.air_density)?;
        positive("gravity", self.gravity)?;
        positive("max_service_brake_torque", self.max_service_brake_torque)?;
        let f = &self.rotating_mass_factor;
        if f.len() != NUM_GEARS || f.iter().any(|&x| !(x >= 1.0 && x.is_finite())) {
            return Err(Error::InvalidParam {
                name: "rotating_mass_factor",
                reason: format!("need {NUM_GEARS} finite entries >= 1"),
            });
        }
        if f.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParam {
                name: "rotating_mass_factor",
                reason: "must be non-increasing with gear".into(),
            });
        }
        Ok(())
    }

    /// Effective inertial mass in `gear` (1-based).
    pub fn effective_mass(&self, gear: u8) -> f64 {
        self.mass * self.rotating_mass_factor[gear as usize - 1]
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    /// rad/s
    pub idle_speed: f64,
    /// rad/s
    pub max_speed: f64,
    /// rad/s → N·m
    pub max_torque: Table1d,
    /// rad/s → N·m, non-positive
    pub max_brake_torque: Table1d,
    /// rows: engine speed rad/s, columns: engine torque N·m, values g/s
    pub fuel_map: Grid2d,
    /// g/s
    pub idle_fuel_rate: f64,
}

impl EngineSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParam { name, reason });
        positive("idle_speed", self.idle_speed)?;
        if self.idle_speed >= self.max_speed {
            return bad("max_speed", "must exceed idle_speed".into());
        }
        if self.max_brake_torque.ys().iter().any(|&t| t > 0.0) {
            return bad("max_brake_torque", "values must be <= 0".into());
        }
        let (lo, hi) = self.fuel_map.row_range();
        if lo > self.idle_speed || hi < self.max_speed {
            return bad(
                "fuel_map",
                format!("speed range [{lo}, {hi}] does not cover idle..max"),
            );
        }
        let cols = self.fuel_map.cols();
        if cols[0] > 0.0 || cols[cols.len() - 1] < self.max_torque.max_value() {
            return bad("fuel_map", "torque range does not cover 0..max torque".into());
        }
        for row in self.fuel_map.values() {
            if row.iter().any(|&v| v < 0.0) {
                return bad("fuel_map", "negative fuel rate".into());
            }
            if row.windows(2).any(|w| w[1] < w[0]) {
                return bad("fuel_map", "fuel rate decreases with torque".into());
            }
        }
        if !(self.idle_fuel_rate >= 0.0) {
            return bad("idle_fuel_rate", "must be >= 0".into());
        }
        Ok(())
    }

    pub fn clamp_speed(&self, w: f64) -> f64 {
        w.clamp(self.idle_speed, self.max_speed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSpec {
    pub gear_ratios: Vec<f64>,
    pub final_drive_ratio: f64,
    pub driveline_efficiency: f64,
}

impl TransmissionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gear_ratios.len() != NUM_GEARS {
            return Err(Error::InvalidParam {
                name: "gear_ratios",
                reason: format!("need exactly {NUM_GEARS}, got {}", self.gear_ratios.len()),
            });
        }
        if self.gear_ratios.iter().any(|&r| !(r > 0.0 && r.is_finite()))
            || self.gear_ratios.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::InvalidParam {
                name: "gear_ratios",
                reason: "must be positive and strictly decreasing".into(),
            });
        }
        positive("final_drive_ratio", self.final_drive_ratio)?;
        if !(self.driveline_efficiency > 0.0 && self.driveline_efficiency <= 1.0) {
            return Err(Error::InvalidParam {
                name: "driveline_efficiency",
                reason: "must lie in (0, 1]".into(),
            });
        }
        Ok(())
    }

    /// Gearbox times final drive for `gear` (1-based).
    pub fn overall_ratio(&self, gear: u8) -> f64 {
        self.gear_ratios[gear as usize - 1] * self.final_drive_ratio
    }
}

/// Road grade as a function of travelled distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadProfile {
    /// position m → grade angle rad
    pub grade: Table1d,
}

impl RoadProfile {
    pub fn flat() -> Self {
        Self {
            grade: Table1d::constant(0.0),
        }
    }

    pub fn new(grade: Table1d) -> Result<Self> {
        if grade.ys().iter().any(|g| g.abs() >= std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParam {
                name: "grade",
                reason: "|grade| must be < pi/2".into(),
            });
        }
        Ok(Self { grade })
    }

    pub fn grade_at(&self, position: f64) -> f64 {
        self.grade.eval(position)
    }
}

impl Default for RoadProfile {
    fn default() -> Self {
        Self::flat()
    }
}

/// Physical state of the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// m
    pub position: f64,
    /// m/s
    pub velocity: f64,
    /// m/s²
    pub acceleration: f64,
    /// 1..=10
    pub gear: u8,
    /// rad/s
    pub engine_speed: f64,
    /// g
    pub fuel_used: f64,
    /// s
    pub time: f64,
}
