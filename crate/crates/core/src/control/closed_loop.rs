use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Controller;
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::plant::Plant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopSettings {
    pub dt: f64,
    pub steps: usize,
    /// The run halts once the state leaves this box.
    pub halt_box: Option<BoxDomain>,
}

/// One sampling instant. The final row of a log carries the terminal state
/// and no input.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub region: Option<usize>,
    pub candidates: usize,
    pub evaluations: usize,
    /// Controller wall time, seconds.
    pub solve_time: f64,
    pub budget_exceeded: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub controller: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub rows: Vec<LogRow>,
    /// The run stopped early: the state left the halt box or the plant failed.
    pub halted: bool,
}

impl TrajectoryLog {
    pub fn new(controller: &str, state_dim: usize, input_dim: usize) -> Self {
        Self {
            controller: controller.to_owned(),
            state_dim,
            input_dim,
            rows: Vec::new(),
            halted: false,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn steps_run(&self) -> usize {
        self.rows.iter().filter(|r| r.u.is_some()).count()
    }

    pub fn budget_violations(&self) -> usize {
        self.rows.iter().filter(|r| r.budget_exceeded).count()
    }

    pub fn max_solve_time(&self) -> f64 {
        self.rows.iter().map(|r| r.solve_time).fold(0.0, f64::max)
    }

    pub fn header(&self, timing: bool) -> Vec<String> {
        let mut h = vec!["step".to_owned(), "t".into()];
        h.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        h.extend((1..=self.input_dim).map(|i| format!("u{i}")));
        h.extend(["J", "region", "candidates", "evaluations"].map(String::from));
        if timing {
            h.push("solve_time_s".into());
        }
        h.push("budget_exceeded".into());
        h
    }

    /// CSV with one row per sampling instant; `timing` adds the wall-time column.
    pub fn write_csv<W: Write>(&self, w: W, timing: bool) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header(timing))?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for r in &self.rows {
            let mut row = vec![r.step.to_string(), r.t.to_string()];
            row.extend(r.x.iter().map(f64::to_string));
            match &r.u {
                Some(u) => row.extend(u.iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), self.input_dim)),
            }
            row.push(opt(r.objective));
            row.push(r.region.map_or_else(String::new, |v| v.to_string()));
            row.push(r.candidates.to_string());
            row.push(r.evaluations.to_string());
            if timing {
                row.push(r.solve_time.to_string());
            }
            row.push(r.budget_exceeded.to_string());
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Measure, decide, hold the first input for one period, repeat.
pub fn run_closed_loop(
    plant: &dyn Plant,
    controller: &mut dyn Controller,
    x0: &[f64],
    settings: &LoopSettings,
) -> Result<TrajectoryLog> {
    if x0.len() != plant.state_dim() {
        return Err(Error::dims("initial state", plant.state_dim(), x0.len()));
    }
    if let Some(b) = &settings.halt_box {
        if !b.contains(x0) {
            return Err(Error::OutsideDomain(format!("initial state {x0:?} is outside the halt box")));
        }
    }
    controller.reset();
    let mut log = TrajectoryLog::new(controller.name(), plant.state_dim(), plant.input_dim());
    let mut x = x0.to_vec();
    for step in 0..settings.steps {
        let started = Instant::now();
        let decision = controller.decide(&x)?;
        let solve_time = started.elapsed().as_secs_f64();
        let next = plant.advance(&x, &decision.input, settings.dt);
        log.rows.push(LogRow {
            step,
            t: step as f64 * settings.dt,
            x: std::mem::take(&mut x),
            u: Some(decision.input),
            objective: decision.objective,
            region: decision.region,
            candidates: decision.candidates,
            evaluations: decision.evaluations,
            solve_time,
            budget_exceeded: decision.budget_exceeded,
        });
        match next {
            Ok(n) => x = n,
            Err(e) => {
                log::warn!("plant failed at step {step}: {e}");
                log.halted = true;
                return Ok(log);
            }
        }
        if settings.halt_box.as_ref().is_some_and(|b| !b.contains(&x)) {
            log::warn!("state {x:?} left the halt box after step {step}");
            log.halted = true;
            break;
        }
    }
    let steps = log.rows.len();
    log.rows.push(LogRow {
        step: steps,
        t: steps as f64 * settings.dt,
        x,
        u: None,
        objective: None,
        region: None,
        candidates: 0,
        evaluations: 0,
        solve_time: 0.0,
        budget_exceeded: false,
    });
    Ok(log)
}
