//! Objective values over an input grid at a fixed state (one-step horizon).

use serde::{Deserialize, Serialize};

use super::Horizon;
use crate::error::{Error, Result};
use crate::weights::QuadWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Surface {
    pub axes: Vec<Vec<f64>>,
    /// Row-major over the axes, last axis fastest.
    pub values: Vec<f64>,
}

impl Surface {
    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.axes.len()];
        for d in (0..self.axes.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.axes[d + 1].len();
        }
        strides
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.strides()
            .iter()
            .zip(&self.axes)
            .map(|(s, axis)| axis[(flat / s) % axis.len()])
            .collect()
    }

    /// Largest `J(mid) - (J(lo) + J(hi)) / 2` over axis-aligned grid triples.
    pub fn worst_midpoint_violation(&self) -> f64 {
        let strides = self.strides();
        let mut worst = f64::NEG_INFINITY;
        for flat in 0..self.values.len() {
            for (d, s) in strides.iter().enumerate() {
                let i = (flat / s) % self.axes[d].len();
                if i == 0 || i + 1 == self.axes[d].len() {
                    continue;
                }
                let v = self.values[flat] - 0.5 * (self.values[flat - s] + self.values[flat + s]);
                worst = worst.max(v);
            }
        }
        worst
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.axes.len()).map(|i| format!("u{i}")).collect();
        header.push("J".into());
        wr.write_record(&header)?;
        for (flat, j) in self.values.iter().enumerate() {
            wr.write_record(self.point(flat).iter().chain(std::iter::once(j)).map(|v| v.to_string()))?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Evaluates `x̄ᵀ M x̄ + uᵀ N u` over the tensor grid of `axes` with `x` fixed.
pub fn objective_surface(
    horizon: &Horizon,
    x: &[f64],
    axes: &[GridAxis],
    weights: &QuadWeights,
) -> Result<Surface> {
    if horizon.len() != 1 {
        return Err(Error::InvalidConfig(format!(
            "objective surfaces need a one-step horizon, got {}",
            horizon.len()
        )));
    }
    if axes.len() != horizon.input_dim() {
        return Err(Error::dims("surface axes", horizon.input_dim(), axes.len()));
    }
    if axes.iter().any(|a| a.points < 2 || !(a.lo < a.hi)) {
        return Err(Error::InvalidConfig("each surface axis needs lo < hi and at least 2 points".into()));
    }
    let grid: Vec<Vec<f64>> = axes.iter().map(GridAxis::values).collect();
    let total: usize = grid.iter().map(Vec::len).product();
    let mut surface = Surface {
        axes: grid,
        values: Vec::with_capacity(total),
    };
    for flat in 0..total {
        let u = surface.point(flat);
        surface.values.push(horizon.objective(x, &u, weights)?);
    }
    Ok(surface)
}
