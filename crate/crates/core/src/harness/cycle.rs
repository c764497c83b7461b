//! Drive cycles: loading, the bundled synthetic urban cycle, and the
//! per-block speed noise applied during training and stochastic evaluation.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textio::{looks_like_header, parse_rows};

pub const MPH: f64 = 0.44704;

/// Lead-vehicle speed trace sampled every second from t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCycle {
    pub name: String,
    speeds: Vec<f64>,
}

impl DriveCycle {
    pub fn new(name: impl Into<String>, speeds: Vec<f64>) -> Result<Self> {
        if speeds.is_empty() {
            return Err(Error::InvalidParam {
                name: "cycle",
                reason: "no samples".into(),
            });
        }
        if let Some(v) = speeds.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParam {
                name: "cycle",
                reason: format!("speed {v} is not a finite non-negative number"),
            });
        }
        Ok(Self {
            name: name.into(),
            speeds,
        })
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    /// Seconds from the first to the last sample.
    pub fn duration(&self) -> f64 {
        (self.speeds.len() - 1) as f64
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.speeds.iter().enumerate().map(|(i, &v)| (i as f64, v))
    }

    pub fn mean_speed(&self) -> f64 {
        self.speeds.iter().sum::<f64>() / self.speeds.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,speed_mps\n");
        for (t, v) in self.samples() {
            let _ = writeln!(s, "{t},{v}");
        }
        s
    }
}

/// Parses `time, speed` rows (seconds, m/s). Times must start at 0 and
/// increase strictly; non-integer spacing is resampled onto a 1 s grid.
pub fn parse_cycle(name: &str, path: &Path, text: &str) -> Result<DriveCycle> {
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(looks_like_header);
    let (_, rows) = parse_rows(path, text, header)?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    if rows.is_empty() {
        return Err(err(0, "cycle file has no samples".into()));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut speeds = Vec::with_capacity(rows.len());
    for (line, row) in &rows {
        if row.len() != 2 {
            return Err(err(*line, format!("expected 2 columns, got {}", row.len())));
        }
        let (t, v) = (row[0], row[1]);
        if v < 0.0 {
            return Err(err(*line, format!("negative speed {v}")));
        }
        match times.last() {
            None if t != 0.0 => return Err(err(*line, format!("first time must be 0, got {t}"))),
            Some(&prev) if t <= prev => {
                return Err(err(*line, format!("time {t} does not increase (previous {prev})")))
            }
            _ => {}
        }
        times.push(t);
        speeds.push(v);
    }
    let uniform = times.iter().enumerate().all(|(i, &t)| t == i as f64);
    let speeds = if uniform {
        speeds
    } else {
        let end = times[times.len() - 1].floor() as usize;
        let mut j = 0;
        (0..=end)
            .map(|k| {
                let t = k as f64;
                while j + 1 < times.len() && times[j + 1] < t {
                    j += 1;
                }
                if j + 1 >= times.len() || t <= times[j] {
                    speeds[j]
                } else {
                    let u = (t - times[j]) / (times[j + 1] - times[j]);
                    speeds[j] + u * (speeds[j + 1] - speeds[j])
                }
            })
            .collect()
    };
    DriveCycle::new(name, speeds)
}

pub fn load_cycle(path: &Path) -> Result<DriveCycle> {
    let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cycle".into());
    parse_cycle(&name, path, &text)
}

/// One micro-trip of the synthetic cycle: idle, accelerate to a peak,
/// cruise, brake to a stop.
struct MicroTrip {
    idle_s: f64,
    peak_mph: f64,
    cruise_s: f64,
}

const fn trip(idle_s: f64, peak_mph: f64, cruise_s: f64) -> MicroTrip {
    MicroTrip {
        idle_s,
        peak_mph,
        cruise_s,
    }
}

const URBAN_TRIPS: [MicroTrip; 18] = [
    trip(20.0, 15.0, 10.0),
    trip(15.0, 25.0, 30.0),
    trip(20.0, 35.0, 60.0),
    trip(10.0, 20.0, 5.0),
    trip(25.0, 45.0, 90.0),
    trip(15.0, 30.0, 20.0),
    trip(20.0, 60.0, 120.0),
    trip(30.0, 40.0, 45.0),
    trip(15.0, 25.0, 15.0),
    trip(20.0, 50.0, 80.0),
    trip(10.0, 15.0, 5.0),
    trip(25.0, 35.0, 40.0),
    trip(15.0, 55.0, 100.0),
    trip(20.0, 30.0, 25.0),
    trip(15.0, 20.0, 10.0),
    trip(20.0, 40.0, 30.0),
    trip(20.0, 35.0, 50.0),
    trip(15.0, 25.0, 40.0),
];

pub const SYNTHETIC_URBAN_DURATION: usize = 1800;
const LEAD_ACCEL: f64 = 0.8;
const LEAD_DECEL: f64 = 1.0;

/// Stop-and-go urban cycle, 1800 s, peak 60 mph, built from a fixed list of
/// micro-trips with 0.8 m/s² launches and 1.0 m/s² stops.
pub fn synthetic_urban_cycle() -> DriveCycle {
    // piecewise-linear knots (t, v)
    let mut knots = vec![(0.0, 0.0)];
    let mut t = 0.0;
    let horizon = SYNTHETIC_URBAN_DURATION as f64;
    for trip in &URBAN_TRIPS {
        let v = trip.peak_mph * MPH;
        let len = trip.idle_s + v / LEAD_ACCEL + trip.cruise_s + v / LEAD_DECEL;
        if t + len > horizon {
            break;
        }
        t += trip.idle_s;
        knots.push((t, 0.0));
        t += v / LEAD_ACCEL;
        knots.push((t, v));
        t += trip.cruise_s;
        knots.push((t, v));
        t += v / LEAD_DECEL;
        knots.push((t, 0.0));
    }
    knots.push((horizon, 0.0));
    let mut j = 0;
    let speeds = (0..=SYNTHETIC_URBAN_DURATION)
        .map(|k| {
            let t = k as f64;
            while j + 1 < knots.len() && knots[j + 1].0 < t {
                j += 1;
            }
            let (t0, v0) = knots[j];
            let (t1, v1) = knots[(j + 1).min(knots.len() - 1)];
            if t1 <= t0 {
                v0
            } else {
                v0 + (t - t0).clamp(0.0, t1 - t0) / (t1 - t0) * (v1 - v0)
            }
        })
        .collect();
    DriveCycle::new("synthetic_urban", speeds).expect("synthetic cycle is valid")
}

/// Constant speed offset re-drawn every `period` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePolicy {
    /// m/s
    pub amplitude: f64,
    /// s
    pub period: f64,
}

impl Default for NoisePolicy {
    fn default() -> Self {
        Self {
            amplitude: 1.5,
            period: 60.0,
        }
    }
}

impl NoisePolicy {
    pub fn block_count(&self, duration: f64) -> usize {
        ((duration / self.period).ceil() as usize).max(1)
    }

    /// One offset per block, uniform in `[-amplitude, amplitude]`.
    pub fn draw_offsets<R: Rng + ?Sized>(&self, duration: f64, rng: &mut R) -> Vec<f64> {
        (0..self.block_count(duration))
            .map(|_| self.amplitude * (2.0 * rng.random::<f64>() - 1.0))
            .collect()
    }
}

/// Adds a piecewise-constant offset per noise block and floors speeds at 0.
pub fn perturb_cycle<R: Rng + ?Sized>(
    cycle: &DriveCycle,
    noise: &NoisePolicy,
    rng: &mut R,
) -> DriveCycle {
    let offsets = noise.draw_offsets(cycle.duration(), rng);
    let last = offsets.len() - 1;
    let speeds = cycle
        .samples()
        .map(|(t, v)| {
            let block = ((t / noise.period) as usize).min(last);
            (v + offsets[block]).max(0.0)
        })
        .collect();
    DriveCycle {
        name: cycle.name.clone(),
        speeds,
    }
}
