//! Diagonal stage-cost weights `M` (state) and `N` (input).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadWeights {
    /// Diagonal of `M`; every entry strictly positive.
    pub state: Vec<f64>,
    /// Diagonal of `N`; entries non-negative.
    pub input: Vec<f64>,
}

impl QuadWeights {
    pub fn new(state: Vec<f64>, input: Vec<f64>) -> Result<Self> {
        if state.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "state weight diagonal must be strictly positive, got {state:?}"
            )));
        }
        if input.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "input weight diagonal must be non-negative, got {input:?}"
            )));
        }
        Ok(Self { state, input })
    }

    /// Accepts full square matrices and rejects any off-diagonal entry.
    pub fn from_matrices(m: &[Vec<f64>], n: &[Vec<f64>]) -> Result<Self> {
        Self::new(diagonal_of(m, "M")?, diagonal_of(n, "N")?)
    }

    pub fn input_is_positive(&self) -> bool {
        self.input.iter().all(|v| *v > 0.0)
    }

    /// Weights seen by variables expressed as `physical = half_range * scaled`.
    pub fn rescaled(&self, state_half_range: &[f64], input_half_range: &[f64]) -> Self {
        Self {
            state: self
                .state
                .iter()
                .zip(state_half_range)
                .map(|(w, h)| w * h * h)
                .collect(),
            input: self
                .input
                .iter()
                .zip(input_half_range)
                .map(|(w, h)| w * h * h)
                .collect(),
        }
    }

    /// `Σ_k x_kᵀ M x_k + Σ_k u_kᵀ N u_k` over stacked vectors.
    pub fn stage_cost(&self, states: &[f64], inputs: &[f64]) -> f64 {
        let n = self.state.len();
        let m = self.input.len();
        let xs: f64 = states
            .iter()
            .enumerate()
            .map(|(i, v)| self.state[i % n] * v * v)
            .sum();
        let us: f64 = inputs
            .iter()
            .enumerate()
            .map(|(i, v)| self.input[i % m] * v * v)
            .sum();
        xs + us
    }
}

fn diagonal_of(mat: &[Vec<f64>], name: &str) -> Result<Vec<f64>> {
    let n = mat.len();
    let mut diag = Vec::with_capacity(n);
    for (i, row) in mat.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidConfig(format!("{name} is not square")));
        }
        for (j, v) in row.iter().enumerate() {
            if i != j && *v != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be diagonal; entry ({i}, {j}) = {v}"
                )));
            }
        }
        diag.push(row[i]);
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_diagonal_and_non_positive() {
        let m = vec![vec![1.0, 0.1], vec![0.0, 1.0]];
        let n = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(QuadWeights::from_matrices(&m, &n).is_err());
        let m = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        assert!(QuadWeights::from_matrices(&m, &n).is_err());
        let m = vec![vec![500.0, 0.0], vec![0.0, 0.5]];
        let w = QuadWeights::from_matrices(&m, &n).unwrap();
        assert_eq!(w.state, vec![500.0, 0.5]);
    }

    #[test]
    fn rescaling_preserves_cost() {
        let w = QuadWeights::new(vec![500.0, 0.5], vec![1.0, 8e-11]).unwrap();
        let hx = [2.34, 108.0];
        let hu = [3.5, 5e5];
        let s = w.rescaled(&hx, &hu);
        let xs = [0.3, -0.2];
        let us = [0.5, -0.7];
        let xp: Vec<f64> = xs.iter().zip(&hx).map(|(a, b)| a * b).collect();
        let up: Vec<f64> = us.iter().zip(&hu).map(|(a, b)| a * b).collect();
        let a = s.stage_cost(&xs, &us);
        let b = w.stage_cost(&xp, &up);
        assert!((a - b).abs() < 1e-9 * b.abs());
    }
}
