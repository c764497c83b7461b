//! Per-episode summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METERS_PER_MILE: f64 = 1609.344;
pub const ML_PER_GALLON: f64 = 3785.41;

/// One simulated step as written to `steps.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// s, start of the step
    pub time: f64,
    pub lead_velocity: f64,
    /// m, bumper gap at the start of the step
    pub gap: f64,
    pub a_des: f64,
    pub source_torque: f64,
    pub source_gear_cmd: i8,
    /// wheel torque applied by the plant
    pub torque: f64,
    pub gear_cmd: i8,
    pub prev_gear: u8,
    /// state after the step
    pub gear: u8,
    pub velocity: f64,
    pub acceleration: f64,
    pub position: f64,
    pub fuel_rate: f64,
    pub fuel_used: f64,
    pub reward: f64,
    pub gate_active: bool,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "time,lead_velocity,gap,a_des,source_torque,source_gear_cmd,torque,gear_cmd,prev_gear,gear,velocity,acceleration,position,fuel_rate,fuel_used,reward,gate_active";

    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{:?},{:?},{:?},{},{:?},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            self.time,
            self.lead_velocity,
            self.gap,
            self.a_des,
            self.source_torque,
            self.source_gear_cmd,
            self.torque,
            self.gear_cmd,
            self.prev_gear,
            self.gear,
            self.velocity,
            self.acceleration,
            self.position,
            self.fuel_rate,
            self.fuel_used,
            self.reward,
            self.gate_active as u8
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub cycle: String,
    /// s
    pub duration: f64,
    /// m travelled by the lead vehicle over the cycle
    pub route_distance: f64,
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 160);
        s.push_str(StepRecord::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// miles per US gallon
    pub mpg: f64,
    /// m/s²
    pub accel_rmse: f64,
    pub shift_count: u64,
    /// s, cycle duration scaled to the full route distance
    pub travel_time: f64,
    /// g
    pub fuel_used: f64,
    /// m
    pub distance: f64,
    pub reward_sum: f64,
}

pub fn mpg(distance_m: f64, fuel_g: f64, fuel_density_g_per_ml: f64) -> f64 {
    (distance_m / METERS_PER_MILE) / (fuel_g / fuel_density_g_per_ml / ML_PER_GALLON)
}

/// Fuel economy, tracking error against the driver's request, shift count
/// and route completion time of one episode.
pub fn compute_metrics(log: &EpisodeLog, fuel_density: f64) -> Result<Metrics> {
    let last = log.records.last().ok_or(Error::EmptySegment)?;
    let distance = last.position;
    if !(distance > 0.0) {
        return Err(Error::ZeroDistance);
    }
    let n = log.records.len() as f64;
    let sq: f64 = log.records.iter().map(|r| (r.a_des - r.acceleration).powi(2)).sum();
    let shift_count = log
        .records
        .iter()
        .map(|r| (r.gear as i64 - r.prev_gear as i64).unsigned_abs())
        .sum();
    let m = Metrics {
        mpg: mpg(distance, last.fuel_used, fuel_density),
        accel_rmse: (sq / n).sqrt(),
        shift_count,
        travel_time: log.duration * log.route_distance / distance,
        fuel_used: last.fuel_used,
        distance,
        reward_sum: log.records.iter().map(|r| r.reward).sum(),
    };
    for (what, v) in [
        ("mpg", m.mpg),
        ("accel_rmse", m.accel_rmse),
        ("travel_time", m.travel_time),
        ("reward_sum", m.reward_sum),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite { what, value: v });
        }
    }
    Ok(m)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}
