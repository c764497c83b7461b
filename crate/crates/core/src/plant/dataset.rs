//! Bundled synthetic heavy-duty diesel powertrain and its CSV file formats.
//!
//! The synthetic engine has a 1600 N·m torque plateau between 1200 and
//! 1600 rpm that tapers to 900 N·m at 2400 rpm. Fuel rates come from a
//! Willans-type model: indicated power (brake plus friction) divided by an
//! indicated efficiency and the lower heating value of diesel. Indicated
//! efficiency only falls off above 70 % load, so fuel rate is monotone in
//! torque; brake efficiency peaks at about 0.40 near 1400 rpm and 70 % load.
//!
//! File formats (decimal numbers, `.` separator):
//! - `fuel_map.csv`: header row of torque breakpoints in N·m (first cell is a
//!   label), then one row per engine speed in rpm followed by fuel rates in g/s.
//! - `torque_curve.csv`: `rpm, N·m` rows; the first and last speed are taken
//!   as idle and maximum engine speed.
//! - `gears.csv`: ten gear ratios, one per line, then the final drive ratio,
//!   then the driveline efficiency.
//! - `brake_curve.csv` (optional): `rpm, N·m` rows of non-positive engine
//!   braking capability. The synthetic curve is used when absent.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::interp::{Grid2d, Table1d};
use crate::textio::{looks_like_header, parse_rows, read_rows, write};

use super::params::{EngineSpec, TransmissionSpec, VehicleParams, NUM_GEARS};
use super::Powertrain;

pub const RPM_TO_RAD_S: f64 = std::f64::consts::PI / 30.0;
/// Lower heating value of diesel, J/g.
pub const DIESEL_LHV: f64 = 42_800.0;

const TORQUE_CURVE_RPM: [(f64, f64); 9] = [
    (600.0, 900.0),
    (800.0, 1150.0),
    (1000.0, 1400.0),
    (1200.0, 1600.0),
    (1600.0, 1600.0),
    (1800.0, 1500.0),
    (2000.0, 1350.0),
    (2200.0, 1150.0),
    (2400.0, 900.0),
];

const BRAKE_CURVE_RPM: [(f64, f64); 4] = [
    (600.0, -150.0),
    (1200.0, -300.0),
    (1800.0, -450.0),
    (2400.0, -600.0),
];

fn rpm_table(points: &[(f64, f64)]) -> Table1d {
    Table1d::new(
        points.iter().map(|p| p.0 * RPM_TO_RAD_S).collect(),
        points.iter().map(|p| p.1).collect(),
    )
    .expect("static table is valid")
}

/// Fuel rate of the synthetic engine, g/s.
pub fn synthetic_fuel_rate(rpm: f64, torque: f64, max_torque: f64) -> f64 {
    let omega = rpm * RPM_TO_RAD_S;
    let friction = 50.0 + 30.0 * (rpm / 1000.0).powi(2);
    let load = (torque / max_torque).min(1.0);
    let eta = 0.445
        - 0.05 * ((rpm - 1600.0) / 800.0).powi(2)
        - 1.5 * (load - 0.7).max(0.0).powi(2);
    (torque + friction) * omega / (eta * DIESEL_LHV)
}

/// Ratios spaced geometrically from 12.0 down to 0.75.
pub fn synthetic_gear_ratios() -> Vec<f64> {
    let span: f64 = 0.75 / 12.0;
    (0..NUM_GEARS)
        .map(|k| 12.0 * span.powf(k as f64 / (NUM_GEARS - 1) as f64))
        .collect()
}

pub fn synthetic_engine() -> EngineSpec {
    let max_torque = rpm_table(&TORQUE_CURVE_RPM);
    let rpms: Vec<f64> = (0..=18).map(|i| 600.0 + 100.0 * i as f64).collect();
    let torques: Vec<f64> = (0..=16).map(|j| 100.0 * j as f64).collect();
    let values: Vec<Vec<f64>> = rpms
        .iter()
        .map(|&rpm| {
            let tmax = max_torque.eval(rpm * RPM_TO_RAD_S);
            torques
                .iter()
                .map(|&t| synthetic_fuel_rate(rpm, t, tmax))
                .collect()
        })
        .collect();
    let idle_fuel_rate = values[0][0];
    EngineSpec {
        idle_speed: 600.0 * RPM_TO_RAD_S,
        max_speed: 2400.0 * RPM_TO_RAD_S,
        max_torque,
        max_brake_torque: rpm_table(&BRAKE_CURVE_RPM),
        fuel_map: Grid2d::new(rpms.iter().map(|r| r * RPM_TO_RAD_S).collect(), torques, values)
            .expect("synthetic grid is valid"),
        idle_fuel_rate,
    }
}

pub fn synthetic_transmission() -> TransmissionSpec {
    TransmissionSpec {
        gear_ratios: synthetic_gear_ratios(),
        final_drive_ratio: 3.9,
        driveline_efficiency: 0.95,
    }
}

/// The bundled synthetic truck: default chassis, synthetic engine and gearbox.
pub fn synthetic_powertrain() -> Powertrain {
    Powertrain::new(
        VehicleParams::default(),
        synthetic_engine(),
        synthetic_transmission(),
    )
    .expect("synthetic powertrain is valid")
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_rpm_table(path: &Path) -> Result<Table1d> {
    let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(looks_like_header);
    let (_, rows) = parse_rows(path, &text, header)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, row) in rows {
        if row.len() != 2 {
            return Err(parse_err(path, line, "expected two columns (rpm, N·m)"));
        }
        xs.push(row[0] * RPM_TO_RAD_S);
        ys.push(row[1]);
    }
    Table1d::new(xs, ys).map_err(|e| parse_err(path, 0, e.to_string()))
}

fn read_fuel_map(path: &Path) -> Result<Grid2d> {
    let (head, rows) = read_rows(path, true)?;
    let head = head.ok_or_else(|| parse_err(path, 1, "missing header row"))?;
    let torques = head[1..]
        .iter()
        .map(|c| c.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| parse_err(path, 1, "header must list torque breakpoints"))?;
    let mut speeds = Vec::new();
    let mut values = Vec::new();
    for (line, row) in rows {
        if row.len() != torques.len() + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, got {}", torques.len() + 1, row.len()),
            ));
        }
        speeds.push(row[0] * RPM_TO_RAD_S);
        values.push(row[1..].to_vec());
    }
    Grid2d::new(speeds, torques, values).map_err(|e| parse_err(path, 0, e.to_string()))
}

fn read_gears(path: &Path) -> Result<TransmissionSpec> {
    let (_, rows) = read_rows(path, false)?;
    let vals: Vec<f64> = rows.iter().flat_map(|(_, r)| r.iter().copied()).collect();
    if vals.len() != NUM_GEARS + 2 {
        return Err(parse_err(
            path,
            rows.last().map_or(0, |r| r.0),
            format!("expected {} numbers, got {}", NUM_GEARS + 2, vals.len()),
        ));
    }
    Ok(TransmissionSpec {
        gear_ratios: vals[..NUM_GEARS].to_vec(),
        final_drive_ratio: vals[NUM_GEARS],
        driveline_efficiency: vals[NUM_GEARS + 1],
    })
}

/// Loads an engine and gearbox from a dataset directory; chassis parameters
/// are supplied by the caller.
pub fn load_powertrain(dir: &Path, vehicle: VehicleParams) -> Result<Powertrain> {
    let max_torque = read_rpm_table(&dir.join("torque_curve.csv"))?;
    let brake_path = dir.join("brake_curve.csv");
    let max_brake_torque = if brake_path.exists() {
        read_rpm_table(&brake_path)?
    } else {
        rpm_table(&BRAKE_CURVE_RPM)
    };
    let fuel_map = read_fuel_map(&dir.join("fuel_map.csv"))?;
    let transmission = read_gears(&dir.join("gears.csv"))?;
    let idle_speed = max_torque.xs()[0];
    let max_speed = *max_torque.xs().last().expect("non-empty table");
    let idle_fuel_rate = fuel_map.eval(idle_speed, 0.0)?;
    let engine = EngineSpec {
        idle_speed,
        max_speed,
        max_torque,
        max_brake_torque,
        fuel_map,
        idle_fuel_rate,
    };
    Powertrain::new(vehicle, engine, transmission)
}

/// Speeds are written in rpm rounded to 1e-6 so that files stay readable.
fn to_rpm(w: f64) -> f64 {
    (w / RPM_TO_RAD_S * 1e6).round() / 1e6
}

fn table_csv(t: &Table1d) -> String {
    let mut s = String::from("rpm,torque_nm\n");
    for (x, y) in t.xs().iter().zip(t.ys()) {
        let _ = writeln!(s, "{},{}", to_rpm(*x), y);
    }
    s
}

/// Writes the engine and gearbox in the dataset file formats.
pub fn save_powertrain(dir: &Path, pt: &Powertrain) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(crate::error::io_err(dir))?;
    let map = &pt.engine.fuel_map;
    let mut s = String::from("rpm");
    for t in map.cols() {
        let _ = write!(s, ",{t}");
    }
    s.push('\n');
    for (w, row) in map.rows().iter().zip(map.values()) {
        let _ = write!(s, "{}", to_rpm(*w));
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    write(&dir.join("fuel_map.csv"), &s)?;
    write(&dir.join("torque_curve.csv"), &table_csv(&pt.engine.max_torque))?;
    write(&dir.join("brake_curve.csv"), &table_csv(&pt.engine.max_brake_torque))?;
    let tr = &pt.transmission;
    let mut g = String::new();
    for r in tr
        .gear_ratios
        .iter()
        .chain([&tr.final_drive_ratio, &tr.driveline_efficiency])
    {
        let _ = writeln!(g, "{r}");
    }
    write(&dir.join("gears.csv"), &g)
}
