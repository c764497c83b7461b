use std::path::PathBuf;

use powertrain_rpl::harness::{load_cycle, synthetic_urban_cycle, RunConfig};
use powertrain_rpl::plant::dataset::{load_powertrain, synthetic_powertrain};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

#[test]
fn bundled_cycle_matches_generator() {
    let c = load_cycle(&data_dir().join("synthetic_urban.csv")).unwrap();
    let g = synthetic_urban_cycle();
    assert_eq!(c.duration(), 1800.0);
    assert_eq!(c.speeds(), g.speeds());
    let peak = c.speeds().iter().copied().fold(0.0, f64::max);
    assert!(peak <= 60.0 * 0.44704 + 1e-9 && peak > 20.0);
    assert!(c.mean_speed() > 3.0);
    assert_eq!(c.speeds()[0], 0.0);
}

#[test]
fn bundled_powertrain_matches_generator() {
    let synthetic = synthetic_powertrain();
    let loaded = load_powertrain(&data_dir().join("powertrain"), synthetic.vehicle.clone()).unwrap();
    assert_eq!(loaded, synthetic);
}

#[test]
fn bundled_config_is_the_default() {
    let cfg = RunConfig::load(&data_dir().join("default.cfg")).unwrap();
    assert_eq!(cfg.to_text(), RunConfig::default().to_text());
    for key in RunConfig::keys() {
        assert!(cfg.get(key).is_some(), "{key}");
    }
}
