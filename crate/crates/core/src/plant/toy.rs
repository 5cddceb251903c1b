use super::{check_dims, Plant};
use crate::error::Result;

/// Discrete two-state toy map; one application per sampling period.
pub fn toy_step(x: [f64; 2], u: [f64; 2]) -> [f64; 2] {
    [
        0.5 * x[0] * x[0] - x[1] + u[0].sin() - u[1].cos(),
        -x[0] + 0.5 * x[1] * x[1] - u[0].cos() + u[1].sin(),
    ]
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ToyPlant;

impl Plant for ToyPlant {
    fn name(&self) -> &str {
        "toy"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        2
    }

    /// `dt` is ignored: the map already spans one period.
    fn advance(&self, x: &[f64], u: &[f64], _dt: f64) -> Result<Vec<f64>> {
        check_dims(self, x, u)?;
        Ok(toy_step([x[0], x[1]], [u[0], u[1]]).to_vec())
    }

    fn output_names(&self) -> Vec<String> {
        vec!["y1".into(), "y2".into()]
    }

    fn outputs(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}
