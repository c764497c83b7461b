//! Files written by training and evaluation runs, and the plotting series
//! derived from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::AgentCheckpoint;
use super::config::RunConfig;
use super::evaluate::CycleSummary;
use super::metrics::{compute_metrics, Metrics};
use super::train::{curve_csv, EvalStatus, GateEvent, TrainOutcome};
use crate::agent::AgentKind;
use crate::error::{io_err, Error, Result};

pub const METRICS_FILE: &str = "metrics.json";
pub const CURVE_FILE: &str = "learning_curve.csv";
pub const STEPS_FILE: &str = "steps.csv";
pub const BASELINE_STEPS_FILE: &str = "baseline_steps.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const EVAL_RUNS_FILE: &str = "evaluation.csv";
pub const FIG3_FILE: &str = "fig3_learning_curve.csv";
pub const FIG4_FILE: &str = "fig4_timeseries.csv";

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub agent: AgentKind,
    pub seed: u64,
    pub cycle: String,
    pub cycles: usize,
    pub baseline: Metrics,
    pub trained_status: EvalStatus,
    /// greedy, noise-free after the last cycle
    pub trained: Option<Metrics>,
    /// percent MPG change of the trained agent over the baseline
    pub mpg_improvement_pct: Option<f64>,
    pub gate_opened: Option<GateEvent>,
    /// learning-curve evaluations that collided or stalled
    pub evaluation_failures: usize,
    pub training_collisions: usize,
}

impl TrainSummary {
    pub fn new(cfg: &RunConfig, outcome: &TrainOutcome) -> Result<Self> {
        let trained = match (&outcome.final_log, outcome.final_status) {
            (Some(l), EvalStatus::Ok) => Some(compute_metrics(l, cfg.fuel_density)?),
            _ => None,
        };
        Ok(Self {
            agent: cfg.agent,
            seed: cfg.seed,
            cycle: outcome.baseline_log.cycle.clone(),
            cycles: outcome.curve.len(),
            baseline: outcome.baseline,
            mpg_improvement_pct: trained.map(|m| 100.0 * (m.mpg / outcome.baseline.mpg - 1.0)),
            trained,
            trained_status: outcome.final_status,
            gate_opened: outcome.gate_opened,
            evaluation_failures: outcome.curve.iter().filter(|r| r.eval.is_none()).count(),
            training_collisions: outcome.curve.iter().filter(|r| r.train_collided).count(),
        })
    }
}

/// Writes metrics.json, learning_curve.csv, steps.csv, baseline_steps.csv,
/// config.txt and checkpoint.json into `dir`.
pub fn write_train_run(dir: &Path, cfg: &RunConfig, outcome: &TrainOutcome) -> Result<TrainSummary> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let summary = TrainSummary::new(cfg, outcome)?;
    write(&dir.join(CONFIG_FILE), &cfg.to_text())?;
    write(
        &dir.join(METRICS_FILE),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    write(&dir.join(CURVE_FILE), &curve_csv(&outcome.curve))?;
    if let Some(log) = &outcome.final_log {
        write(&dir.join(STEPS_FILE), &log.to_csv())?;
    }
    write(&dir.join(BASELINE_STEPS_FILE), &outcome.baseline_log.to_csv())?;
    AgentCheckpoint::capture(&outcome.agent, cfg, outcome.curve.len()).save(&dir.join(CHECKPOINT_FILE))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub agent: AgentKind,
    pub checkpoint: String,
    pub reps: usize,
    pub seed: u64,
    pub cycles: Vec<CycleSummary>,
}

/// Writes metrics.json (per-cycle mean and std) and evaluation.csv (one row
/// per repetition).
pub fn write_eval_run(dir: &Path, summary: &EvalSummary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(
        &dir.join(METRICS_FILE),
        &serde_json::to_string_pretty(summary).expect("summary serializes"),
    )?;
    let mut csv = String::from("cycle,rep,mpg,accel_rmse,shift_count,travel_time,fuel_used,status\n");
    for c in &summary.cycles {
        for r in &c.runs {
            match &r.metrics {
                Some(m) => writeln!(
                    csv,
                    "{},{},{:?},{:?},{},{:?},{:?},ok",
                    c.cycle, r.rep, m.mpg, m.accel_rmse, m.shift_count, m.travel_time, m.fuel_used
                ),
                None => writeln!(csv, "{},{},,,,,,{}", c.cycle, r.rep, r.status.as_str()),
            }
            .expect("string write");
        }
    }
    write(&dir.join(EVAL_RUNS_FILE), &csv)
}

/// Header-addressed CSV whose empty cells read as missing.
struct Table {
    path: PathBuf,
    columns: Vec<String>,
    /// (line number, cells)
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "empty file".into(),
        })?;
        let columns: Vec<String> = head.split(',').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (n, line) in lines {
            let row: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            if row.len() != columns.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    msg: format!("expected {} cells, got {}", columns.len(), row.len()),
                });
            }
            rows.push((n + 1, row));
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    /// Numeric column; empty cells are None.
    fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Parse {
                path: self.path.clone(),
                line: 1,
                msg: format!("missing column {name:?}"),
            })?;
        self.rows
            .iter()
            .map(|(line, r)| {
                let c = &r[k];
                if c.is_empty() {
                    return Ok(None);
                }
                c.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                    path: self.path.clone(),
                    line: *line,
                    msg: format!("not a number: {c:?}"),
                })
            })
            .collect()
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Trailing moving average over the last `w` present values.
pub fn moving_average(xs: &[Option<f64>], w: usize) -> Vec<Option<f64>> {
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let win: Vec<f64> = xs[lo..=i].iter().flatten().copied().collect();
            (i + 1 >= w && !win.is_empty()).then(|| win.iter().sum::<f64>() / win.len() as f64)
        })
        .collect()
}

/// Files written for one run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub learning_curve: PathBuf,
    pub timeseries: Option<PathBuf>,
}

/// Learning-curve and time-series tables for plotting, written next to the
/// run's own files.
pub fn plotdata(run: &Path) -> Result<PlotFiles> {
    let summary: TrainSummary = serde_json::from_str(&read(&run.join(METRICS_FILE))?)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", run.join(METRICS_FILE).display())))?;
    let curve = Table::load(&run.join(CURVE_FILE))?;
    let cycles = curve.column("cycle")?;
    let mpg = curve.column("mpg")?;
    let ma = moving_average(&mpg, 5);
    let mut out = String::from("cycle,mpg,mpg_ma5,baseline_mpg\n");
    for i in 0..cycles.len() {
        writeln!(
            out,
            "{},{},{},{:?}",
            cycles[i].unwrap_or_default() as usize,
            cell(mpg[i]),
            cell(ma[i]),
            summary.baseline.mpg
        )
        .expect("string write");
    }
    let learning_curve = run.join(FIG3_FILE);
    write(&learning_curve, &out)?;

    let steps_path = run.join(STEPS_FILE);
    let timeseries = if steps_path.exists() {
        let agent = Table::load(&steps_path)?;
        let base = Table::load(&run.join(BASELINE_STEPS_FILE))?;
        let name = summary.agent.to_string();
        let mut cols: BTreeMap<usize, (String, Vec<Option<f64>>)> = BTreeMap::new();
        let picks = [
            ("time", &base, "time".to_string()),
            ("lead_velocity", &base, "lead_velocity".to_string()),
            ("velocity", &base, "baseline_velocity".to_string()),
            ("gear", &base, "baseline_gear".to_string()),
            ("torque", &base, "baseline_torque".to_string()),
            ("velocity", &agent, format!("{name}_velocity")),
            ("gear", &agent, format!("{name}_gear")),
            ("torque", &agent, format!("{name}_torque")),
        ];
        for (i, (src, table, label)) in picks.into_iter().enumerate() {
            cols.insert(i, (label, table.column(src)?));
        }
        let n = cols.values().map(|(_, v)| v.len()).min().unwrap_or(0);
        let mut out = cols.values().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join(",");
        out.push('\n');
        for r in 0..n {
            let line: Vec<String> = cols.values().map(|(_, v)| cell(v[r])).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        let p = run.join(FIG4_FILE);
        write(&p, &out)?;
        Some(p)
    } else {
        None
    };
    Ok(PlotFiles {
        learning_curve,
        timeseries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_waits_for_a_full_window() {
        let xs = [Some(1.0), Some(2.0), Some(3.0), None, Some(5.0)];
        let ma = moving_average(&xs, 3);
        assert_eq!(ma, vec![None, None, Some(2.0), Some(2.5), Some(4.0)]);
    }
}
