//! Supervised datasets for the horizon models.
//!
//! [`SampleTable`] holds physical-unit rows and is what the CSV files carry.
//! [`Dataset`] is the scaled, split view consumed by training.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{MinMaxScaler, Predictor};
use crate::error::{Error, Result};
use crate::seed;

/// Tolerance on scaled values leaving `[-1, 1]`.
pub const SCALED_SLACK: f64 = 1e-9;

/// Rows of `(x_t, u_t, …, u_{t+k-1})` with labels `x_{t+k}`, physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTable {
    pub state_dim: usize,
    pub input_dim: usize,
    /// Prediction step `k`; the sample carries `k` stacked inputs.
    pub step: usize,
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn new(state_dim: usize, input_dim: usize, step: usize) -> Self {
        Self {
            state_dim,
            input_dim,
            step,
            samples: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn sample_width(&self) -> usize {
        self.state_dim + self.input_dim * self.step
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, sample: Vec<f64>, label: Vec<f64>) {
        debug_assert_eq!(sample.len(), self.sample_width());
        debug_assert_eq!(label.len(), self.state_dim);
        self.samples.push(sample);
        self.labels.push(label);
    }

    /// Same samples with componentwise absolute labels.
    pub fn to_absolute(&self) -> SampleTable {
        SampleTable {
            labels: self
                .labels
                .iter()
                .map(|l| l.iter().map(|v| v.abs()).collect())
                .collect(),
            ..self.clone()
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.state_dim).map(|i| format!("x{i}")).collect();
        for k in 0..self.step {
            for i in 1..=self.input_dim {
                h.push(format!("u{i}_k{k}"));
            }
        }
        h.extend((1..=self.state_dim).map(|i| format!("y{i}")));
        h
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header())?;
        for (s, l) in self.samples.iter().zip(&self.labels) {
            wr.write_record(s.iter().chain(l).map(|v| v.to_string()))?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parses a CSV written by [`SampleTable::write_csv`]; dimensions are
    /// recovered from the header.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        let state_dim = header.iter().filter(|h| h.starts_with('x')).count();
        let label_dim = header.iter().filter(|h| h.starts_with('y')).count();
        let u_cols: Vec<&String> = header.iter().filter(|h| h.starts_with('u')).collect();
        let step = u_cols
            .iter()
            .filter_map(|h| h.split("_k").nth(1)?.parse::<usize>().ok())
            .max()
            .map_or(0, |k| k + 1);
        if state_dim == 0 || label_dim != state_dim || step == 0 || u_cols.len() % step != 0 {
            return Err(Error::InvalidConfig(format!(
                "unrecognised dataset header {header:?}"
            )));
        }
        let mut table = SampleTable::new(state_dim, u_cols.len() / step, step);
        if table.header() != header {
            return Err(Error::InvalidConfig(format!(
                "dataset columns out of order: {header:?}"
            )));
        }
        let width = table.sample_width();
        for rec in rd.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidConfig(format!("bad number '{f}': {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != width + state_dim {
                return Err(Error::dims("dataset row", width + state_dim, vals.len()));
            }
            table.push(vals[..width].to_vec(), vals[width..].to_vec());
        }
        Ok(table)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Scales samples and labels and assigns train/val/test tags.
    pub fn to_dataset(
        &self,
        input_scaler: &MinMaxScaler,
        label_scaler: &MinMaxScaler,
        split: SplitFractions,
        seed: u64,
    ) -> Result<Dataset> {
        if input_scaler.dim() != self.sample_width() {
            return Err(Error::dims("input scaler", self.sample_width(), input_scaler.dim()));
        }
        if label_scaler.dim() != self.state_dim {
            return Err(Error::dims("label scaler", self.state_dim, label_scaler.dim()));
        }
        let inputs: Vec<f64> = self.samples.iter().flat_map(|s| input_scaler.forward(s)).collect();
        let labels: Vec<f64> = self.labels.iter().flat_map(|l| label_scaler.forward(l)).collect();
        let mut ds = Dataset::new(self.sample_width(), self.state_dim, inputs, labels)?;
        ds.assign_splits(split, seed)?;
        Ok(ds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|v| !(0.0..=1.0).contains(v)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.train <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "split fractions must be in [0, 1], sum to 1, with a non-empty train share: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Scaled samples and labels, row-major, with split tags.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub input_dim: usize,
    pub output_dim: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn new(input_dim: usize, output_dim: usize, inputs: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::EmptyDomain);
        }
        if inputs.len() % input_dim != 0 || labels.len() % output_dim != 0 {
            return Err(Error::InvalidConfig("ragged dataset buffers".into()));
        }
        let rows = inputs.len() / input_dim;
        if labels.len() / output_dim != rows {
            return Err(Error::dims("label rows", rows, labels.len() / output_dim));
        }
        Ok(Self {
            input_dim,
            output_dim,
            inputs,
            labels,
            splits: vec![Split::Train; rows],
        })
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i * self.output_dim..(i + 1) * self.output_dim]
    }

    /// Deterministic shuffle-and-cut split assignment.
    pub fn assign_splits(&mut self, split: SplitFractions, seed: u64) -> Result<()> {
        split.validate()?;
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed));
        let n_train = (split.train * n as f64).round() as usize;
        let n_val = ((split.val * n as f64).round() as usize).min(n - n_train);
        for (rank, &i) in order.iter().enumerate() {
            self.splits[i] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        Ok(())
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|i| self.splits[*i] == split).collect()
    }

    /// Whether every scaled value lies in `[-1 - slack, 1 + slack]`.
    pub fn within_unit_range(&self) -> bool {
        let lim = 1.0 + SCALED_SLACK;
        self.inputs.iter().chain(&self.labels).all(|v| v.abs() <= lim)
    }

    /// Mean-squared error of a predictor on one split; `None` when empty.
    pub fn mse<P: Predictor + ?Sized>(&self, model: &P, split: Split) -> Option<f64> {
        let idx = self.indices(split);
        if idx.is_empty() {
            return None;
        }
        let mut out = vec![0.0; self.output_dim];
        let mut total = 0.0;
        for &i in &idx {
            model.predict_into(self.input(i), &mut out);
            total += out
                .iter()
                .zip(self.label(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        Some(total / (idx.len() * self.output_dim) as f64)
    }

    /// Per-output `(min, max)` of the labels over the whole dataset.
    pub fn label_ranges(&self) -> Vec<(f64, f64)> {
        let mut r = vec![(f64::INFINITY, f64::NEG_INFINITY); self.output_dim];
        for row in self.labels.chunks_exact(self.output_dim) {
            for (j, v) in row.iter().enumerate() {
                r[j].0 = r[j].0.min(*v);
                r[j].1 = r[j].1.max(*v);
            }
        }
        r
    }
}
