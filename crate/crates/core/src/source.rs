//! OEM-style source controller: inverse-dynamics traction torque from the
//! driver's desired acceleration, and an instantaneous fuel-optimal shift
//! decision. Also the driver-only baseline.

use serde::{Deserialize, Serialize};

use crate::plant::{PlantState, Powertrain, RoadProfile, NUM_GEARS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceAction {
    /// wheel torque, N·m
    pub torque: f64,
    /// -1, 0 or +1
    pub gear_cmd: i8,
}

/// Wheel torque that realizes `a_des` in the current gear under the plant's
/// force balance.
pub fn source_torque(a_des: f64, state: &PlantState, pt: &Powertrain, road: &RoadProfile) -> f64 {
    let res = pt.resistances(state.velocity, state.position, road);
    pt.vehicle.wheel_radius * (pt.vehicle.effective_mass(state.gear) * a_des + res.rolling + res.aero + res.grade)
}

/// Fuel rate for delivering `torque` at the wheel after shifting by `u`,
/// or `None` when the candidate gear is unusable. Staying in gear is always
/// a candidate; when it cannot deliver the torque it is costed at full load.
pub fn candidate_fuel_rate(state: &PlantState, torque: f64, u: i8, pt: &Powertrain) -> Option<f64> {
    let gear = state.gear as i32 + u as i32;
    if !(1..=NUM_GEARS as i32).contains(&gear) {
        return None;
    }
    let gear = gear as u8;
    let v = state.velocity;
    if u != 0 && !pt.gear_feasible(v, gear) {
        return None;
    }
    let w = pt.operating_speed(v, gear);
    let ratio = pt.transmission.overall_ratio(gear);
    let eff = pt.transmission.driveline_efficiency;
    let engine_torque = if torque > 0.0 {
        let needed = torque / (ratio * eff);
        let cap = pt.engine.max_torque.eval(w);
        if needed > cap {
            if u != 0 {
                return None;
            }
            cap
        } else {
            needed
        }
    } else {
        torque * eff / ratio
    };
    pt.fuel_rate(w, engine_torque).ok()
}

/// Minimizes `fuel_rate + shift_cost * |u|` over the usable commands.
/// Ties go to staying in gear, then to upshifting.
pub fn source_gear(state: &PlantState, torque: f64, pt: &Powertrain, shift_cost: f64) -> i8 {
    let mut best = (0i8, f64::INFINITY);
    for u in [0i8, 1, -1] {
        if let Some(fuel) = candidate_fuel_rate(state, torque, u, pt) {
            let cost = fuel + shift_cost * u.abs() as f64;
            if cost < best.1 {
                best = (u, cost);
            }
        }
    }
    best.0
}

pub fn source_action(
    a_des: f64,
    state: &PlantState,
    pt: &Powertrain,
    road: &RoadProfile,
    shift_cost: f64,
) -> SourceAction {
    let torque = source_torque(a_des, state, pt, road);
    SourceAction {
        torque,
        gear_cmd: source_gear(state, torque, pt, shift_cost),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::dataset::synthetic_powertrain;
    use proptest::prelude::*;

    fn cruise(pt: &Powertrain, v: f64, gear: u8) -> PlantState {
        PlantState {
            position: 0.0,
            velocity: v,
            acceleration: 0.0,
            gear,
            engine_speed: pt.operating_speed(v, gear),
            fuel_used: 0.0,
            time: 0.0,
        }
    }

    #[test]
    fn hold_speed_torque() {
        let pt = synthetic_powertrain();
        let flat = RoadProfile::flat();
        let s = cruise(&pt, 12.0, 7);
        let r = pt.resistances(12.0, 0.0, &flat);
        let t = source_torque(0.0, &s, &pt, &flat);
        assert!((t - pt.vehicle.wheel_radius * (r.rolling + r.aero)).abs() < 1e-9);
        let rest = pt.initial_state(0.0);
        let t0 = source_torque(0.0, &rest, &pt, &flat);
        assert!((t0 - pt.vehicle.wheel_radius * r.rolling).abs() < 1e-9);
    }

    #[test]
    fn ties_stay_in_gear() {
        let pt = synthetic_powertrain();
        // braking: every candidate cuts fuel
        let s = cruise(&pt, 12.0, 7);
        assert_eq!(source_gear(&s, -5000.0, &pt, 0.0), 0);
    }

    #[test]
    fn upshift_when_cheaper_by_more_than_shift_cost() {
        let pt = synthetic_powertrain();
        // scan speeds in gear 6 for an operating point where gear 7 saves > q_c
        let q_c = 0.05;
        let flat = RoadProfile::flat();
        let mut found = false;
        for k in 0..200 {
            let v = 5.0 + 0.1 * k as f64;
            let s = cruise(&pt, v, 6);
            if !pt.gear_feasible(v, 6) || !pt.gear_feasible(v, 7) {
                continue;
            }
            let t = source_torque(0.0, &s, &pt, &flat);
            let stay = candidate_fuel_rate(&s, t, 0, &pt).unwrap();
            let up = candidate_fuel_rate(&s, t, 1, &pt).unwrap();
            let down = candidate_fuel_rate(&s, t, -1, &pt);
            if up + q_c < stay && down.is_none_or(|d| up < d) {
                assert_eq!(source_gear(&s, t, &pt, q_c), 1);
                found = true;
                break;
            }
        }
        assert!(found, "no upshift operating point found");
    }

    #[test]
    fn infeasible_candidates_are_excluded() {
        let pt = synthetic_powertrain();
        // gear 4 below idle while gear 3 runs
        let r3 = pt.transmission.overall_ratio(3);
        let r4 = pt.transmission.overall_ratio(4);
        let w = pt.engine.idle_speed * pt.vehicle.wheel_radius;
        let v = 0.5 * (w / r3 + w / r4);
        let s = cruise(&pt, v, 3);
        assert!(candidate_fuel_rate(&s, 100.0, 1, &pt).is_none());
        assert_ne!(source_gear(&s, 100.0, &pt, 0.0), 1);
        // top gear cannot upshift
        let s = cruise(&pt, 25.0, 10);
        assert!(candidate_fuel_rate(&s, 100.0, 1, &pt).is_none());
    }

    #[test]
    fn torque_guard_excludes_overloaded_candidates() {
        let pt = synthetic_powertrain();
        let s = cruise(&pt, 10.0, 6);
        let huge = 1e6;
        assert!(candidate_fuel_rate(&s, huge, 1, &pt).is_none());
        assert!(candidate_fuel_rate(&s, huge, 0, &pt).is_some());
    }

    proptest! {
        #[test]
        fn never_shifts_into_unusable_gear(v in 0.0..30.0f64, gear in 1u8..=10, t in -20000.0..30000.0f64) {
            let pt = synthetic_powertrain();
            let s = cruise(&pt, v, gear);
            let u = source_gear(&s, t, &pt, 0.05);
            if u != 0 {
                prop_assert!(pt.gear_feasible(v, (gear as i32 + u as i32) as u8));
            }
        }

        #[test]
        fn zero_shift_cost_is_strict_argmin(v in 0.0..30.0f64, gear in 1u8..=10, t in 0.0..30000.0f64) {
            let pt = synthetic_powertrain();
            let s = cruise(&pt, v, gear);
            let u = source_gear(&s, t, &pt, 0.0);
            let chosen = candidate_fuel_rate(&s, t, u, &pt).unwrap();
            for c in [-1i8, 0, 1] {
                if let Some(f) = candidate_fuel_rate(&s, t, c, &pt) {
                    prop_assert!(chosen <= f);
                }
            }
        }
    }
}
