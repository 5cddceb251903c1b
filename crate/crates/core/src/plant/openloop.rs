use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Plant;
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::nn::SampleTable;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenLoopConfig {
    pub x_box: BoxDomain,
    pub u_box: BoxDomain,
    pub n_traj: usize,
    /// Number of prediction steps `K`; one table is produced per step.
    pub horizon: usize,
    /// Held-input periods simulated per trajectory (at least `horizon`).
    pub steps_per_traj: usize,
    /// Trajectories are cut once the state leaves `x_box` scaled by this factor.
    pub truncate_factor: f64,
    pub dt: f64,
    pub seed: u64,
}

impl OpenLoopConfig {
    pub fn validate(&self, plant: &dyn Plant) -> Result<()> {
        if self.x_box.dim() != plant.state_dim() {
            return Err(Error::dims("x_box", plant.state_dim(), self.x_box.dim()));
        }
        if self.u_box.dim() != plant.input_dim() {
            return Err(Error::dims("u_box", plant.input_dim(), self.u_box.dim()));
        }
        if self.horizon == 0 || self.n_traj == 0 {
            return Err(Error::InvalidConfig("horizon and n_traj must be at least 1".into()));
        }
        if self.steps_per_traj < self.horizon {
            return Err(Error::InvalidConfig(format!(
                "steps_per_traj ({}) must be at least the horizon ({})",
                self.steps_per_traj, self.horizon
            )));
        }
        if !(self.truncate_factor >= 1.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidConfig("truncate_factor must be ≥ 1 and dt > 0".into()));
        }
        Ok(())
    }
}

struct Trajectory {
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
}

fn simulate(plant: &dyn Plant, cfg: &OpenLoopConfig, limit: &BoxDomain, index: usize) -> Trajectory {
    let mut rng = seed::rng(seed::derive(cfg.seed, &[index as u64]));
    let mut x = cfg.x_box.sample(&mut rng);
    let mut traj = Trajectory {
        states: vec![x.clone()],
        inputs: Vec::new(),
    };
    for _ in 0..cfg.steps_per_traj {
        let u = cfg.u_box.sample(&mut rng);
        match plant.advance(&x, &u, cfg.dt) {
            Ok(next) if limit.contains(&next) => {
                x = next;
                traj.inputs.push(u);
                traj.states.push(x.clone());
            }
            _ => break,
        }
    }
    traj
}

/// Simulates random held-input trajectories and returns one table per
/// prediction step `k = 1..=K` with exact labels `x_{t+k}`.
pub fn generate_openloop_dataset(plant: &dyn Plant, cfg: &OpenLoopConfig) -> Result<Vec<SampleTable>> {
    cfg.validate(plant)?;
    let limit = cfg.x_box.scaled_by(cfg.truncate_factor);
    let trajectories: Vec<Trajectory> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| simulate(plant, cfg, &limit, i))
        .collect();
    let (n, m) = (plant.state_dim(), plant.input_dim());
    let mut tables: Vec<SampleTable> = (1..=cfg.horizon).map(|k| SampleTable::new(n, m, k)).collect();
    for traj in &trajectories {
        let len = traj.inputs.len();
        for t in 0..len {
            for (k, table) in (1..=cfg.horizon).zip(tables.iter_mut()) {
                if t + k > len {
                    break;
                }
                let mut sample = traj.states[t].clone();
                for u in &traj.inputs[t..t + k] {
                    sample.extend_from_slice(u);
                }
                table.push(sample, traj.states[t + k].clone());
            }
        }
    }
    Ok(tables)
}
