//! Reference plants, sample-and-hold integration and open-loop data generation.

mod cstr;
mod integrate;
mod openloop;
mod toy;

use serde::{Deserialize, Serialize};

pub use cstr::{CstrParams, CstrPlant};
pub use integrate::{integrate_hold, rk4_step, OdeSystem};
pub use openloop::{generate_openloop_dataset, OpenLoopConfig};
pub use toy::{toy_step, ToyPlant};

use crate::error::{Error, Result};

/// A plant advanced one sampling period at a time with the input held.
pub trait Plant: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// State after `dt` with `u` held, in deviation variables.
    fn advance(&self, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>>;
    /// Names of the physical outputs reported by [`Plant::outputs`].
    fn output_names(&self) -> Vec<String>;
    fn outputs(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimGrid {
    /// Sampling period in plant time units (hours for the CSTR).
    pub dt: f64,
    pub substeps: usize,
    pub steps: usize,
}

impl Default for SimGrid {
    fn default() -> Self {
        Self {
            dt: 0.01,
            substeps: 10,
            steps: 20,
        }
    }
}

impl SimGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidConfig("substeps must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_dims(plant: &dyn Plant, x: &[f64], u: &[f64]) -> Result<()> {
    if x.len() != plant.state_dim() {
        return Err(Error::dims("plant state", plant.state_dim(), x.len()));
    }
    if u.len() != plant.input_dim() {
        return Err(Error::dims("plant input", plant.input_dim(), u.len()));
    }
    Ok(())
}
