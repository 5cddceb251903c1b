use std::io::Write;

use super::{iae, run_closed_loop, settling_time, Controller, LoopSettings, TrajectoryLog};
use crate::error::{Error, Result};
use crate::plant::Plant;

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub controller: String,
    pub x0: Vec<f64>,
    pub converged: bool,
    /// Settling step into the band.
    pub steps_to_band: Option<usize>,
    pub iae: f64,
    pub max_solve_time: f64,
    pub budget_violations: usize,
    pub halted: bool,
}

impl ComparisonRow {
    /// Summary of one run. Errors are `(x − setpoint) / scale`; convergence
    /// means settling into `band` without halting.
    pub fn from_log(log: &TrajectoryLog, x0: &[f64], dt: f64, setpoint: &[f64], scale: &[f64], band: f64) -> Self {
        let settle = settling_time(log, setpoint, scale, band).filter(|_| !log.halted);
        Self {
            controller: log.controller.clone(),
            x0: x0.to_vec(),
            converged: settle.is_some(),
            steps_to_band: settle.map(|t| (t / dt).round() as usize),
            iae: iae(log, setpoint, scale),
            max_solve_time: log.max_solve_time(),
            budget_violations: log.budget_violations(),
            halted: log.halted,
        }
    }
}

/// Runs every controller from every initial state. Errors are measured as
/// `(x − setpoint) / scale`; convergence means settling into `band`.
pub fn compare_controllers(
    plant: &dyn Plant,
    controllers: &mut [Box<dyn Controller>],
    initial_states: &[Vec<f64>],
    settings: &LoopSettings,
    setpoint: &[f64],
    scale: &[f64],
    band: f64,
) -> Result<Vec<ComparisonRow>> {
    if controllers.is_empty() {
        return Err(Error::InvalidConfig("nothing to compare".into()));
    }
    let mut rows = Vec::new();
    for c in controllers.iter_mut() {
        for x0 in initial_states {
            let log = run_closed_loop(plant, c.as_mut(), x0, settings)?;
            rows.push(ComparisonRow::from_log(&log, x0, settings.dt, setpoint, scale, band));
        }
    }
    Ok(rows)
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let n = rows.first().map_or(0, |r| r.x0.len());
    let mut header = vec!["controller".to_owned()];
    header.extend((1..=n).map(|i| format!("x0_{i}")));
    header.extend(
        ["converged", "steps_to_band", "iae", "max_solve_time_s", "budget_violations", "halted"].map(String::from),
    );
    wr.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.controller.clone()];
        row.extend(r.x0.iter().map(f64::to_string));
        row.push(r.converged.to_string());
        row.push(r.steps_to_band.map_or_else(String::new, |s| s.to_string()));
        row.push(r.iae.to_string());
        row.push(r.max_solve_time.to_string());
        row.push(r.budget_violations.to_string());
        row.push(r.halted.to_string());
        wr.write_record(&row)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
