use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::nn::{Horizon, Matrix, Predictor};
use crate::seed;

/// The models being approximated. Model `k` (zero-based) reads the first
/// `state_dim + input_dim·(k+1)` coordinates of a joint point.
pub struct SurrogateSet<'a> {
    pub state_dim: usize,
    pub input_dim: usize,
    pub models: Vec<&'a dyn Predictor>,
    /// Per model and output, the denominator of the relative error.
    pub output_ranges: Vec<Vec<f64>>,
}

impl<'a> SurrogateSet<'a> {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        models: Vec<&'a dyn Predictor>,
        output_ranges: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if models.is_empty() || models.len() != output_ranges.len() {
            return Err(Error::InvalidModel("need one output range per model".into()));
        }
        for (k, (m, r)) in models.iter().zip(&output_ranges).enumerate() {
            let width = state_dim + input_dim * (k + 1);
            if m.input_dim() != width {
                return Err(Error::dims("surrogate input", width, m.input_dim()));
            }
            if m.output_dim() != r.len() {
                return Err(Error::dims("surrogate output ranges", m.output_dim(), r.len()));
            }
        }
        Ok(Self {
            state_dim,
            input_dim,
            models,
            output_ranges,
        })
    }

    pub fn from_horizon(h: &'a Horizon) -> Self {
        Self {
            state_dim: h.state_dim(),
            input_dim: h.input_dim(),
            models: h.networks(),
            output_ranges: h.output_ranges(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.models.len()
    }

    pub fn joint_dim(&self) -> usize {
        self.state_dim + self.input_dim * self.horizon()
    }

    pub fn model_width(&self, k: usize) -> usize {
        self.state_dim + self.input_dim * (k + 1)
    }
}

/// `y = gain · s[..gain.cols] + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub gain: Matrix,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn eval_into(&self, s: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.offset);
        self.gain.accumulate_mul(&s[..self.gain.cols], out);
    }

    pub fn eval(&self, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.offset.len()];
        self.eval_into(s, &mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffineFit {
    pub maps: Vec<AffineMap>,
    /// Largest relative error on the fitting samples, per model and output.
    pub max_error: Vec<Vec<f64>>,
}

fn draw(set: &SurrogateSet, region: &BoxDomain, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let mut rng = seed::rng(seed);
    let points: Vec<Vec<f64>> = (0..n).map(|_| region.sample(&mut rng)).collect();
    let values = set
        .models
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let w = set.model_width(k);
            points.iter().map(|p| m.predict(&p[..w])).collect()
        })
        .collect();
    (points, values)
}

/// Largest `|affine − model| / range` over the points, per model and output.
pub fn relative_errors(set: &SurrogateSet, maps: &[AffineMap], region: &BoxDomain, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let (points, values) = draw(set, region, n, seed);
    errors_on(set, maps, &points, &values)
}

fn errors_on(set: &SurrogateSet, maps: &[AffineMap], points: &[Vec<f64>], values: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    maps.iter()
        .enumerate()
        .map(|(k, map)| {
            let mut worst = vec![0.0f64; map.offset.len()];
            let mut pred = vec![0.0; map.offset.len()];
            for (p, y) in points.iter().zip(&values[k]) {
                map.eval_into(p, &mut pred);
                for j in 0..pred.len() {
                    let r = set.output_ranges[k][j];
                    let denom = if r > 0.0 { r } else { 1.0 };
                    worst[j] = worst[j].max((pred[j] - y[j]).abs() / denom);
                }
            }
            worst
        })
        .collect()
}

/// Least-squares fit in box-normalized coordinates, converted back to the
/// coordinates of `region`. `None` when the normal matrix is singular.
fn solve(region: &BoxDomain, width: usize, points: &[Vec<f64>], values: &[Vec<f64>]) -> Option<AffineMap> {
    let outputs = values[0].len();
    let center = region.center();
    let half: Vec<f64> = (0..width).map(|d| 0.5 * region.width(d)).collect();
    let cols = width + 1;
    let mut gram = DMatrix::<f64>::zeros(cols, cols);
    let mut rhs = DMatrix::<f64>::zeros(cols, outputs);
    let mut row = DVector::<f64>::zeros(cols);
    for (p, y) in points.iter().zip(values) {
        for d in 0..width {
            row[d] = (p[d] - center[d]) / half[d];
        }
        row[width] = 1.0;
        gram.syger(1.0, &row, &row, 1.0);
        for j in 0..outputs {
            for c in 0..cols {
                rhs[(c, j)] += row[c] * y[j];
            }
        }
    }
    gram.fill_upper_triangle_with_lower_triangle();
    let chol = gram.cholesky()?;
    let coef = chol.solve(&rhs);
    let mut gain = Matrix::zeros(outputs, width);
    let mut offset = vec![0.0; outputs];
    for j in 0..outputs {
        let mut b = coef[(width, j)];
        for d in 0..width {
            let g = coef[(d, j)] / half[d];
            gain.set(j, d, g);
            b -= g * center[d];
        }
        offset[j] = b;
    }
    Some(AffineMap { gain, offset })
}

/// Fits one affine map per model over uniform samples in `region`.
pub fn fit_affine(set: &SurrogateSet, region: &BoxDomain, n_samples: usize, seed: u64) -> Result<AffineFit> {
    if region.dim() != set.joint_dim() {
        return Err(Error::dims("region box", set.joint_dim(), region.dim()));
    }
    if n_samples < set.joint_dim() + 1 {
        return Err(Error::InvalidConfig(format!(
            "need at least {} samples, got {n_samples}",
            set.joint_dim() + 1
        )));
    }
    for attempt in 0..2u64 {
        let (points, values) = draw(set, region, n_samples, seed::derive(seed, &[attempt]));
        let maps: Option<Vec<AffineMap>> = (0..set.horizon())
            .map(|k| solve(region, set.model_width(k), &points, &values[k]))
            .collect();
        if let Some(maps) = maps {
            let max_error = errors_on(set, &maps, &points, &values);
            return Ok(AffineFit { maps, max_error });
        }
        log::warn!("singular least-squares system on {region:?}, attempt {attempt}");
    }
    Err(Error::RankDeficient(format!("affine fit on {region:?}")))
}
