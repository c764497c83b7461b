//! Python bindings: configuration, plant stepping, driver and source
//! controller, training, evaluation and checkpoints.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use powertrain_rpl::driver::desired_acceleration;
use powertrain_rpl::harness::output::{self, EvalSummary};
use powertrain_rpl::harness::{
    self, compute_metrics, evaluate as run_evaluation, run_episode, train as run_training, ActionMode, AgentCheckpoint,
    DriveCycle, Environment, RunConfig, TrainOptions,
};
use powertrain_rpl::plant::{PlantState, Powertrain, RoadProfile};
use powertrain_rpl::source::source_action as source_controller;

fn err(e: powertrain_rpl::Error) -> PyErr {
    use powertrain_rpl::Error as E;
    match e {
        E::InvalidParam { .. } | E::Parse { .. } | E::NonFinite { .. } | E::Shape { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serializes through JSON into plain Python objects.
fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn cycle_from(path: Option<PathBuf>, speeds: Option<Vec<f64>>) -> PyResult<DriveCycle> {
    match (path, speeds) {
        (Some(p), None) => harness::load_cycle(&p).map_err(err),
        (None, Some(s)) => DriveCycle::new("speeds", s).map_err(err),
        (None, None) => Ok(harness::synthetic_urban_cycle()),
        (Some(_), Some(_)) => Err(PyValueError::new_err("pass either a cycle path or speeds, not both")),
    }
}

/// Flat key = value run configuration.
#[pyclass(name = "Config")]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => RunConfig::load(&p).map_err(err)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::parse(&PathBuf::from("<string>"), text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        RunConfig::keys()
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .get(key)
            .ok_or_else(|| PyValueError::new_err(format!("unknown key {key:?}")))
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(PyValueError::new_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Config(agent={}, seed={})", self.inner.agent, self.inner.seed)
    }
}

fn config_or_default(cfg: Option<&PyConfig>) -> RunConfig {
    cfg.map(|c| c.inner.clone()).unwrap_or_default()
}

/// The truck on a flat road, stepped by wheel torque and gear command.
#[pyclass(name = "Plant")]
struct PyPlant {
    pt: Powertrain,
    road: RoadProfile,
    dt: f64,
    state: PlantState,
}

#[pymethods]
impl PyPlant {
    #[new]
    #[pyo3(signature = (config=None, velocity=0.0))]
    fn new(config: Option<&PyConfig>, velocity: f64) -> PyResult<Self> {
        let cfg = config_or_default(config);
        let pt = cfg.powertrain().map_err(err)?;
        let state = pt.initial_state(velocity);
        Ok(Self {
            pt,
            road: RoadProfile::flat(),
            dt: cfg.dt,
            state,
        })
    }

    #[pyo3(signature = (velocity=0.0))]
    fn reset(&mut self, velocity: f64) {
        self.state = self.pt.initial_state(velocity);
    }

    /// Advances one time step; returns the step outcome as a dict.
    fn step(&mut self, py: Python<'_>, torque: f64, gear_cmd: i32) -> PyResult<Py<PyAny>> {
        let out = self
            .pt
            .step(&self.state, torque, gear_cmd, self.dt, &self.road)
            .map_err(err)?;
        self.state = out.state;
        to_py(py, &out)
    }

    #[getter]
    fn state(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.state)
    }

    #[getter]
    fn velocity(&self) -> f64 {
        self.state.velocity
    }

    #[getter]
    fn gear(&self) -> u8 {
        self.state.gear
    }

    /// Source controller action (wheel torque, gear command) for `a_des`.
    #[pyo3(signature = (a_des, shift_cost=0.05))]
    fn source_action(&self, a_des: f64, shift_cost: f64) -> (f64, i8) {
        let a = source_controller(a_des, &self.state, &self.pt, &self.road, shift_cost);
        (a.torque, a.gear_cmd)
    }
}

/// Driver car-following acceleration.
#[pyfunction]
#[pyo3(signature = (ego_velocity, gap, lead_velocity, config=None))]
fn idm_acceleration(ego_velocity: f64, gap: f64, lead_velocity: f64, config: Option<&PyConfig>) -> PyResult<f64> {
    let cfg = config_or_default(config);
    desired_acceleration(ego_velocity, gap, lead_velocity, &cfg.idm()).map_err(err)
}

/// Speed trace, one sample per second; the bundled synthetic cycle by default.
#[pyfunction]
#[pyo3(signature = (path=None))]
fn load_cycle(path: Option<PathBuf>) -> PyResult<Vec<f64>> {
    Ok(cycle_from(path, None)?.speeds().to_vec())
}

/// Runs one greedy source-controller episode; returns metrics and the step log as CSV.
#[pyfunction]
#[pyo3(signature = (config=None, cycle=None, speeds=None))]
fn simulate_baseline(
    py: Python<'_>,
    config: Option<&PyConfig>,
    cycle: Option<PathBuf>,
    speeds: Option<Vec<f64>>,
) -> PyResult<(Py<PyAny>, String)> {
    let cfg = config_or_default(config);
    let cycle = cycle_from(cycle, speeds)?;
    let env = Environment::from_config(&cfg).map_err(err)?;
    let agent = harness::Agent::baseline();
    let log = run_episode(&env, &agent, &cycle, ActionMode::Greedy, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
        .map_err(err)?;
    let m = compute_metrics(&log, cfg.fuel_density).map_err(err)?;
    Ok((to_py(py, &m)?, log.to_csv()))
}

/// Trains the configured agent and writes the run directory. Returns the
/// summary stored in metrics.json.
#[pyfunction]
#[pyo3(signature = (config, out, cycle=None, speeds=None))]
fn train(
    py: Python<'_>,
    config: &PyConfig,
    out: PathBuf,
    cycle: Option<PathBuf>,
    speeds: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let cfg = config.inner.clone();
    cfg.validate().map_err(err)?;
    let cycle = cycle_from(cycle, speeds)?;
    let opts = TrainOptions {
        checkpoint_dir: Some(out.join("checkpoints")),
        ..TrainOptions::default()
    };
    let outcome = py.detach(|| run_training(&cfg, &cycle, &opts)).map_err(err)?;
    let summary = output::write_train_run(&out, &cfg, &outcome).map_err(err)?;
    to_py(py, &summary)
}

/// Noisy greedy evaluation of a checkpoint, written to `out`.
#[pyfunction]
#[pyo3(signature = (checkpoint, cycles, out, reps=25, seed=None))]
fn evaluate(
    py: Python<'_>,
    checkpoint: PathBuf,
    cycles: Vec<PathBuf>,
    out: PathBuf,
    reps: usize,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    if reps == 0 {
        return Err(PyValueError::new_err("reps must be at least 1"));
    }
    let (agent, cfg) = AgentCheckpoint::load(&checkpoint).and_then(|c| c.restore()).map_err(err)?;
    let cycles = cycles
        .iter()
        .map(|p| harness::load_cycle(p))
        .collect::<powertrain_rpl::Result<Vec<_>>>()
        .map_err(err)?;
    let seed = seed.unwrap_or(cfg.seed);
    let summaries = py
        .detach(|| run_evaluation(&agent, &cfg, &cycles, reps, seed))
        .map_err(err)?;
    let summary = EvalSummary {
        agent: agent.kind,
        checkpoint: checkpoint.display().to_string(),
        reps,
        seed,
        cycles: summaries,
    };
    output::write_eval_run(&out, &summary).map_err(err)?;
    to_py(py, &summary)
}

/// Writes the plotting tables for a run directory; returns their paths.
#[pyfunction]
fn plotdata(run: PathBuf) -> PyResult<Vec<PathBuf>> {
    let files = output::plotdata(&run).map_err(err)?;
    Ok(std::iter::once(files.learning_curve).chain(files.timeseries).collect())
}

/// A saved agent: networks, optimizer state, duals, gate and config.
#[pyclass(name = "Checkpoint")]
struct PyCheckpoint {
    inner: AgentCheckpoint,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: AgentCheckpoint::load(&path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: AgentCheckpoint::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn agent(&self) -> String {
        self.inner.agent.to_string()
    }

    #[getter]
    fn cycles_trained(&self) -> usize {
        self.inner.cycles_trained
    }

    #[getter]
    fn gate_active(&self) -> bool {
        self.inner.gate.active
    }

    fn config(&self) -> PyResult<PyConfig> {
        Ok(PyConfig {
            inner: self.inner.run_config().map_err(err)?,
        })
    }

    /// Greedy episode with the restored agent; returns (status, metrics or
    /// None, step log CSV or None).
    #[pyo3(signature = (cycle=None, speeds=None))]
    fn drive(
        &self,
        py: Python<'_>,
        cycle: Option<PathBuf>,
        speeds: Option<Vec<f64>>,
    ) -> PyResult<(String, Option<Py<PyAny>>, Option<String>)> {
        let (agent, cfg) = self.inner.restore().map_err(err)?;
        let cycle = cycle_from(cycle, speeds)?;
        let env = Environment::from_config(&cfg).map_err(err)?;
        let (status, log, metrics) = harness::greedy_eval(
            &env,
            &agent,
            &cycle,
            cfg.fuel_density,
            &mut ChaCha8Rng::seed_from_u64(cfg.seed),
        )
        .map_err(err)?;
        let metrics = metrics.map(|m| to_py(py, &m)).transpose()?;
        Ok((status.as_str().to_string(), metrics, log.map(|l| l.to_csv())))
    }
}

#[pymodule]
fn rpl_powertrain(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyPlant>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_function(wrap_pyfunction!(idm_acceleration, m)?)?;
    m.add_function(wrap_pyfunction!(load_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(plotdata, m)?)?;
    Ok(())
}
