use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::miqp::SelectionMode;
use crate::weights::QuadWeights;

/// Controller settings; the defaults are those of the CSTR case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Diagonal of `M`.
    pub state_weights: Vec<f64>,
    /// Diagonal of `N`.
    pub input_weights: Vec<f64>,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
    /// Sampling period, plant time units.
    pub dt: f64,
    /// Wall-clock seconds allowed per selection.
    pub budget_secs: f64,
    pub steps: usize,
    pub selection: SelectionMode,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 2,
            state_weights: vec![500.0, 0.5],
            input_weights: vec![1.0, 8e-11],
            u_lo: vec![-3.5, -5e5],
            u_hi: vec![3.5, 5e5],
            dt: 0.01,
            budget_secs: 1.0,
            steps: 20,
            selection: SelectionMode::Exhaustive,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !(self.budget_secs > 0.0) {
            return Err(Error::InvalidConfig("dt and budget_secs must be positive".into()));
        }
        let w = self.weights()?;
        if !w.input_is_positive() {
            return Err(Error::InvalidConfig("input weights must be positive".into()));
        }
        if w.input.len() != self.u_lo.len() {
            return Err(Error::dims("input weights", self.u_lo.len(), w.input.len()));
        }
        self.u_box().map(|_| ())
    }

    pub fn weights(&self) -> Result<QuadWeights> {
        QuadWeights::new(self.state_weights.clone(), self.input_weights.clone())
    }

    pub fn u_box(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.u_lo.clone(), self.u_hi.clone())
    }
}
