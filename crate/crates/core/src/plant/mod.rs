//! Longitudinal vehicle and powertrain model: force balance, engine torque
//! limits and fuel map, ten-speed gearbox, and the engine/service brake split.
//!
//! Resistances oppose motion: `dV/dt = (T/r_w - R_r - R_a - R_g) / M_eff`.

pub mod dataset;
mod params;

use serde::{Deserialize, Serialize};

pub use params::{EngineSpec, PlantState, RoadProfile, TransmissionSpec, VehicleParams, NUM_GEARS};

use crate::error::{finite, Error, Result};

/// Road-load forces in newtons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resistances {
    pub rolling: f64,
    pub aero: f64,
    pub grade: f64,
}

impl Resistances {
    pub fn total(&self) -> f64 {
        self.rolling + self.aero + self.grade
    }
}

/// Wheel-level decomposition of a negative torque request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueSplit {
    /// Request after clamping to the combined braking capability.
    pub request: f64,
    pub engine_brake: f64,
    pub service_brake: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReserve {
    /// W
    pub reserve: f64,
    /// W, best over the gears usable at this speed
    pub max: f64,
}

/// Everything one plant step produces besides the next state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: PlantState,
    /// g/s over the step
    pub fuel_rate: f64,
    /// realized acceleration over the step, m/s²
    pub acceleration: f64,
    /// wheel torque actually applied, N·m
    pub applied_torque: f64,
    /// engine crankshaft torque, N·m (negative when engine braking)
    pub engine_torque: f64,
    /// wheel-level service brake torque, N·m (non-positive)
    pub service_brake_torque: f64,
    /// engine-side positive power, W
    pub delivered_power: f64,
    /// operating engine speed during the step, rad/s
    pub engine_speed: f64,
}

/// Chassis, engine and gearbox of the simulated truck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Powertrain {
    pub vehicle: VehicleParams,
    pub engine: EngineSpec,
    pub transmission: TransmissionSpec,
}

impl Powertrain {
    pub fn new(
        vehicle: VehicleParams,
        engine: EngineSpec,
        transmission: TransmissionSpec,
    ) -> Result<Self> {
        vehicle.validate()?;
        engine.validate()?;
        transmission.validate()?;
        Ok(Self {
            vehicle,
            engine,
            transmission,
        })
    }

    pub fn resistances(&self, velocity: f64, position: f64, road: &RoadProfile) -> Resistances {
        let p = &self.vehicle;
        let psi = road.grade_at(position);
        Resistances {
            rolling: p.weight() * p.rolling_coeff * psi.cos(),
            aero: 0.5 * p.air_density * p.drag_coeff * p.frontal_area * velocity * velocity,
            grade: p.weight() * psi.sin(),
        }
    }

    /// Engine speed implied by wheel speed alone, without the idle floor.
    pub fn kinematic_engine_speed(&self, velocity: f64, gear: u8) -> f64 {
        velocity / self.vehicle.wheel_radius * self.transmission.overall_ratio(gear)
    }

    /// Engine speed with the idle floor of the torque-converter abstraction.
    pub fn engine_speed_for(&self, velocity: f64, gear: u8) -> f64 {
        self.kinematic_engine_speed(velocity, gear)
            .max(self.engine.idle_speed)
    }

    /// Engine speed used for torque and fuel lookups, inside `[idle, max]`.
    pub fn operating_speed(&self, velocity: f64, gear: u8) -> f64 {
        self.engine
            .clamp_speed(self.kinematic_engine_speed(velocity, gear))
    }

    /// A gear is usable when its kinematic engine speed lies in
    /// `[idle, max]`; first gear may also run below idle (launch).
    pub fn gear_feasible(&self, velocity: f64, gear: u8) -> bool {
        if !(1..=NUM_GEARS as u8).contains(&gear) {
            return false;
        }
        let w = self.kinematic_engine_speed(velocity, gear);
        w <= self.engine.max_speed && (w >= self.engine.idle_speed || gear == 1)
    }

    /// Fuel rate in g/s. Non-positive torque cuts fuel except at the idle
    /// floor, where the engine burns its idle rate.
    pub fn fuel_rate(&self, engine_speed: f64, engine_torque: f64) -> Result<f64> {
        let map = &self.engine.fuel_map;
        let (lo, hi) = map.row_range();
        if !(lo..=hi).contains(&engine_speed) {
            return Err(Error::OutOfGrid {
                speed: engine_speed,
                min: lo,
                max: hi,
            });
        }
        if engine_torque <= 0.0 {
            return Ok(if engine_speed <= self.engine.idle_speed {
                self.engine.idle_fuel_rate
            } else {
                0.0
            });
        }
        map.eval(engine_speed, engine_torque)
    }

    /// Largest positive wheel torque the engine can deliver in `gear`.
    pub fn max_wheel_torque(&self, engine_speed: f64, gear: u8) -> f64 {
        self.engine.max_torque.eval(engine_speed)
            * self.transmission.overall_ratio(gear)
            * self.transmission.driveline_efficiency
    }

    /// Engine braking capability reflected to the wheel (non-positive).
    pub fn engine_brake_wheel_torque(&self, engine_speed: f64, gear: u8) -> f64 {
        self.engine.max_brake_torque.eval(engine_speed) * self.transmission.overall_ratio(gear)
            / self.transmission.driveline_efficiency
    }

    /// Wheel torque normalization: peak engine torque through first gear.
    pub fn reference_wheel_torque(&self) -> f64 {
        self.engine.max_torque.max_value()
            * self.transmission.overall_ratio(1)
            * self.transmission.driveline_efficiency
    }

    /// Splits a negative wheel request: engine braking saturates first,
    /// the service brakes take the remainder.
    pub fn split_negative_torque(&self, request: f64, engine_speed: f64, gear: u8) -> TorqueSplit {
        debug_assert!(request < 0.0);
        let engine_cap = self.engine_brake_wheel_torque(engine_speed, gear);
        let request = request.max(engine_cap - self.vehicle.max_service_brake_torque);
        let engine_brake = request.max(engine_cap);
        TorqueSplit {
            request,
            engine_brake,
            service_brake: request - engine_brake,
        }
    }

    /// Applies a (possibly summed) gear command. The command is limited to
    /// one step, the gear to `1..=10`, and a shift into a gear whose engine
    /// speed is out of range is cancelled. If the current gear itself is out
    /// of range the gearbox steps one gear toward feasibility.
    pub fn apply_gear_command(&self, gear: u8, command: i32, velocity: f64) -> u8 {
        let step = command.clamp(-1, 1);
        let top = NUM_GEARS as i32;
        let mut next = (gear as i32 + step).clamp(1, top) as u8;
        if next != gear && !self.gear_feasible(velocity, next) {
            next = gear;
        }
        if next == gear && !self.gear_feasible(velocity, gear) {
            let w = self.kinematic_engine_speed(velocity, gear);
            if w > self.engine.max_speed && (gear as i32) < top {
                next = gear + 1;
            } else if w < self.engine.idle_speed && gear > 1 {
                next = gear - 1;
            }
        }
        next
    }

    fn available_power(&self, velocity: f64, gear: u8) -> f64 {
        let w = self.operating_speed(velocity, gear);
        self.engine.max_torque.eval(w) * w
    }

    /// Unused engine power in `gear` and the best available over usable gears.
    pub fn power_reserve(&self, velocity: f64, gear: u8, delivered_power: f64) -> PowerReserve {
        let own = self.available_power(velocity, gear);
        let max = (1..=NUM_GEARS as u8)
            .filter(|&g| g == gear || self.gear_feasible(velocity, g))
            .map(|g| self.available_power(velocity, g))
            .fold(f64::NEG_INFINITY, f64::max);
        PowerReserve {
            reserve: (own - delivered_power).max(0.0),
            max,
        }
    }

    /// Highest usable gear at `velocity` (first gear from rest).
    pub fn initial_state(&self, velocity: f64) -> PlantState {
        let gear = (1..=NUM_GEARS as u8)
            .rev()
            .find(|&g| self.gear_feasible(velocity, g))
            .unwrap_or(1);
        PlantState {
            position: 0.0,
            velocity,
            acceleration: 0.0,
            gear,
            engine_speed: self.operating_speed(velocity, gear),
            fuel_used: 0.0,
            time: 0.0,
        }
    }

    /// Advances the plant by `dt` under a wheel torque request and gear command.
    pub fn step(
        &self,
        state: &PlantState,
        torque_request: f64,
        gear_command: i32,
        dt: f64,
        road: &RoadProfile,
    ) -> Result<StepOutcome> {
        finite("wheel torque request", torque_request)?;
        finite("velocity", state.velocity)?;
        finite("position", state.position)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParam {
                name: "dt",
                reason: format!("must be > 0, got {dt}"),
            });
        }
        let v = state.velocity.max(0.0);
        let gear = self.apply_gear_command(state.gear, gear_command, v);
        let w = self.operating_speed(v, gear);
        let ratio = self.transmission.overall_ratio(gear);
        let eff = self.transmission.driveline_efficiency;

        let (applied, engine_torque, service) = if torque_request >= 0.0 {
            let applied = torque_request.min(self.max_wheel_torque(w, gear));
            (applied, applied / (ratio * eff), 0.0)
        } else {
            let split = self.split_negative_torque(torque_request, w, gear);
            (
                split.request,
                split.engine_brake * eff / ratio,
                split.service_brake,
            )
        };
        let fuel_rate = self.fuel_rate(w, engine_torque)?;

        let res = self.resistances(v, state.position, road);
        let m_eff = self.vehicle.effective_mass(gear);
        let accel = (applied / self.vehicle.wheel_radius - res.rolling - res.aero - res.grade) / m_eff;
        finite("acceleration", accel)?;
        let mut v_next = v + accel * dt;
        let realized = if v_next < 0.0 {
            v_next = 0.0;
            -v / dt
        } else {
            accel
        };
        let next = PlantState {
            position: state.position + 0.5 * (v + v_next) * dt,
            velocity: v_next,
            acceleration: realized,
            gear,
            engine_speed: self.operating_speed(v_next, gear),
            fuel_used: state.fuel_used + fuel_rate * dt,
            time: state.time + dt,
        };
        Ok(StepOutcome {
            state: next,
            fuel_rate,
            acceleration: realized,
            applied_torque: applied,
            engine_torque,
            service_brake_torque: service,
            delivered_power: engine_torque.max(0.0) * w,
            engine_speed: w,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::dataset::synthetic_powertrain;
    use super::*;

    fn pt() -> Powertrain {
        synthetic_powertrain()
    }

    #[test]
    fn resistances_match_hand_values() {
        let p = pt();
        let flat = RoadProfile::flat();
        let r = p.resistances(0.0, 0.0, &flat);
        assert_eq!(r.aero, 0.0);
        assert!((r.rolling - 9070.0 * 9.81 * 0.015).abs() < 1e-9);
        assert!((r.rolling - 1334.65).abs() < 0.01);
        assert_eq!(r.grade, 0.0);
        let r = p.resistances(20.0, 0.0, &flat);
        assert!((r.aero - 0.5 * 1.2 * 0.8 * 7.71 * 400.0).abs() < 1e-9);
        assert!((r.aero - 1480.3).abs() < 0.05);
    }

    #[test]
    fn grade_forces_follow_angle() {
        let p = pt();
        let road = RoadProfile::new(crate::interp::Table1d::constant(0.02)).unwrap();
        let r = p.resistances(10.0, 50.0, &road);
        assert!((r.grade - p.vehicle.weight() * 0.02f64.sin()).abs() < 1e-9);
        assert!((r.rolling - p.vehicle.weight() * 0.015 * 0.02f64.cos()).abs() < 1e-9);
        assert!(RoadProfile::new(crate::interp::Table1d::constant(2.0)).is_err());
    }

    #[test]
    fn engine_speed_kinematics() {
        let mut p = pt();
        for g in 1..=10 {
            assert_eq!(p.engine_speed_for(0.0, g), p.engine.idle_speed);
        }
        // overall ratio 4.0 at r_w = 0.498, 15 m/s
        p.transmission.gear_ratios[5] = 4.0 / p.transmission.final_drive_ratio;
        let w = p.engine_speed_for(15.0, 6);
        assert!((w - 15.0 / 0.498 * 4.0).abs() < 1e-9);
        assert!((w - 120.48).abs() < 0.01);
        // unit kinematics: V = r_w and overall ratio 10
        p.transmission.gear_ratios[5] = 10.0 / p.transmission.final_drive_ratio;
        let w = p.engine_speed_for(p.vehicle.wheel_radius, 6);
        assert!((w - 10f64.max(p.engine.idle_speed)).abs() < 1e-9);
    }

    #[test]
    fn fuel_rate_nodes_cut_and_bounds() {
        let p = pt();
        let map = &p.engine.fuel_map;
        let (w, t) = (map.rows()[4], map.cols()[6]);
        assert_eq!(p.fuel_rate(w, t).unwrap(), map.values()[4][6]);
        assert_eq!(p.fuel_rate(w, -50.0).unwrap(), 0.0);
        assert_eq!(p.fuel_rate(w, 0.0).unwrap(), 0.0);
        assert_eq!(
            p.fuel_rate(p.engine.idle_speed, -10.0).unwrap(),
            p.engine.idle_fuel_rate
        );
        assert!(matches!(
            p.fuel_rate(p.engine.max_speed + 1.0, 100.0),
            Err(Error::OutOfGrid { .. })
        ));
        assert!(p.fuel_rate(p.engine.idle_speed - 1.0, 100.0).is_err());
    }

    #[test]
    fn fuel_rate_midpoint_is_bilinear() {
        let p = pt();
        let map = &p.engine.fuel_map;
        let (i, j) = (7, 9);
        let (w0, w1) = (map.rows()[i], map.rows()[i + 1]);
        let (t0, t1) = (map.cols()[j], map.cols()[j + 1]);
        let z = map.values();
        // brute-force bilinear formula at (u, v) = (0.5, 0.5)
        let mean = (z[i][j] + z[i][j + 1] + z[i + 1][j] + z[i + 1][j + 1]) / 4.0;
        let got = p.fuel_rate(0.5 * (w0 + w1), 0.5 * (t0 + t1)).unwrap();
        assert!((got - mean).abs() < 1e-12);
    }

    #[test]
    fn negative_split_saturates_engine_first() {
        let p = pt();
        let (w, g) = (150.0, 5);
        let cap = p.engine_brake_wheel_torque(w, g);
        assert!(cap < 0.0);
        let s = p.split_negative_torque(0.5 * cap, w, g);
        assert_eq!(s.service_brake, 0.0);
        assert_eq!(s.engine_brake, 0.5 * cap);
        let s = p.split_negative_torque(2.0 * cap, w, g);
        assert_eq!(s.engine_brake, cap);
        assert_eq!(s.engine_brake + s.service_brake, 2.0 * cap);
        // request beyond combined capability is clamped
        let s = p.split_negative_torque(-1e9, w, g);
        assert_eq!(s.request, cap - p.vehicle.max_service_brake_torque);
    }

    #[test]
    fn gear_command_rules() {
        let p = pt();
        let v = 7.0;
        assert!(p.gear_feasible(v, 5));
        assert_eq!(p.apply_gear_command(5, 0, v), 5);
        let top_v = 25.0;
        assert!(p.gear_feasible(top_v, 10));
        assert_eq!(p.apply_gear_command(10, 2, top_v), 10);
        let expect = if p.gear_feasible(v, 6) { 6 } else { 5 };
        assert_eq!(p.apply_gear_command(5, 2, v), expect);
        // choose V so gear 3 is feasible but gear 4 is below idle
        let r3 = p.transmission.overall_ratio(3);
        let r4 = p.transmission.overall_ratio(4);
        let v = 0.5 * (p.engine.idle_speed * p.vehicle.wheel_radius / r3
            + p.engine.idle_speed * p.vehicle.wheel_radius / r4);
        assert!(p.gear_feasible(v, 3));
        assert!(p.kinematic_engine_speed(v, 4) < p.engine.idle_speed);
        assert_eq!(p.apply_gear_command(3, 1, v), 3);
    }

    #[test]
    fn infeasible_current_gear_moves_one_step() {
        let p = pt();
        // gear 1 far above max engine speed
        assert_eq!(p.apply_gear_command(1, 0, 10.0), 2);
        assert_eq!(p.apply_gear_command(1, -1, 10.0), 2);
        // gear 8 at a crawl is below idle
        assert_eq!(p.apply_gear_command(8, 0, 1.0), 7);
        assert_eq!(p.apply_gear_command(1, 0, 0.0), 1);
    }

    #[test]
    fn power_reserve_bounds() {
        let p = pt();
        let v = 12.0;
        let g = 6;
        let w = p.operating_speed(v, g);
        let full = p.engine.max_torque.eval(w) * w;
        let pr = p.power_reserve(v, g, full);
        assert_eq!(pr.reserve, 0.0);
        // exhaustive scan over all gears
        let best = (1..=10u8)
            .filter(|&k| p.gear_feasible(v, k))
            .map(|k| {
                let w = p.operating_speed(v, k);
                (k, p.engine.max_torque.eval(w) * w)
            })
            .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        assert_eq!(pr.max, best.1.max(full));
        let at_best = p.power_reserve(v, best.0, 0.0);
        assert_eq!(at_best.reserve, at_best.max);
    }

    #[test]
    fn step_force_balance_and_rest() {
        let p = pt();
        let flat = RoadProfile::flat();
        let mut s = p.initial_state(15.0);
        s.position = 100.0;
        let r = p.resistances(s.velocity, s.position, &flat);
        let t = p.vehicle.wheel_radius * (r.rolling + r.aero);
        let out = p.step(&s, t, 0, 0.2, &flat).unwrap();
        assert!(out.acceleration.abs() < 1e-9);
        assert!((out.state.velocity - 15.0).abs() < 1e-9);

        let rest = p.initial_state(0.0);
        let out = p.step(&rest, 0.0, 0, 0.2, &flat).unwrap();
        assert_eq!(out.state.velocity, 0.0);
        assert_eq!(out.acceleration, 0.0);
        assert_eq!(out.state.position, 0.0);
    }

    #[test]
    fn step_saturates_positive_torque() {
        let p = pt();
        let flat = RoadProfile::flat();
        let s = p.initial_state(10.0);
        let request = 1e6;
        let out = p.step(&s, request, 0, 0.2, &flat).unwrap();
        let gear = out.state.gear;
        let r = p.resistances(10.0, 0.0, &flat);
        let unclamped = (request / p.vehicle.wheel_radius - r.total()) / p.vehicle.effective_mass(gear);
        assert!(out.acceleration < unclamped);
        assert_eq!(out.applied_torque, p.max_wheel_torque(out.engine_speed, gear));
    }

    #[test]
    fn step_rejects_non_finite() {
        let p = pt();
        let s = p.initial_state(5.0);
        assert!(p.step(&s, f64::NAN, 0, 0.2, &RoadProfile::flat()).is_err());
        assert!(p.step(&s, 0.0, 0, 0.0, &RoadProfile::flat()).is_err());
    }
}
