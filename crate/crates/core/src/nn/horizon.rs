//! Per-step surrogate models and the horizon bundle used by the controller.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    train, Architecture, MinMaxScaler, Network, Predictor, SampleTable, SplitFractions, TrainConfig,
    TrainReport,
};
use crate::error::{Error, Result};
use crate::seed;
use crate::weights::QuadWeights;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A network predicting `x_{t+k}` (or `|x_{t+k}|`) from `(x_t, u_t, …, u_{t+k-1})`,
/// together with the scalers that map physical units to network units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepModel {
    pub format_version: u32,
    /// Prediction step `k`, starting at 1.
    pub step: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub input_scaler: MinMaxScaler,
    pub output_scaler: MinMaxScaler,
    /// Scaled `(min, max)` of each training label.
    pub label_range: Vec<(f64, f64)>,
    pub network: Network,
}

impl StepModel {
    pub fn predicts_absolute(&self) -> bool {
        self.network.predicts_absolute
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        self.network.validate()?;
        let width = self.state_dim + self.input_dim * self.step;
        if self.step == 0 || self.network.input_dim != width || self.input_scaler.dim() != width {
            return Err(Error::dims("step model input", width, self.network.input_dim));
        }
        if self.network.output_dim() != self.state_dim
            || self.output_scaler.dim() != self.state_dim
            || self.label_range.len() != self.state_dim
        {
            return Err(Error::dims("step model output", self.state_dim, self.network.output_dim()));
        }
        if self.predicts_absolute() && !self.output_scaler.is_zero_centered() {
            return Err(Error::InvalidModel(
                "absolute-value models need a zero-centered output scaler".into(),
            ));
        }
        Ok(())
    }

    /// Prediction in physical units for a physical input row.
    pub fn predict_physical(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.network.input_dim {
            return Err(Error::dims("step model input", self.network.input_dim, input.len()));
        }
        let z = self.network.forward(&self.input_scaler.forward(input))?;
        Ok(self.output_scaler.inverse(&z))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: StepModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Architecture and training settings shared by the models of a horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub hidden: Vec<usize>,
    /// Train on `|x_{t+k}|` instead of `x_{t+k}` (ICNN only).
    pub predicts_absolute: bool,
    pub train: TrainConfig,
    pub split: SplitFractions,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::Icnn,
            hidden: vec![32, 32],
            predicts_absolute: true,
            train: TrainConfig::default(),
            split: SplitFractions::default(),
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("hidden layer widths must be positive".into()));
        }
        if self.predicts_absolute && self.architecture != Architecture::Icnn {
            return Err(Error::InvalidConfig("absolute-value targets need the icnn architecture".into()));
        }
        self.train.validate()?;
        self.split.validate()
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: StepModel,
    pub report: TrainReport,
    pub test_mse: Option<f64>,
}

/// Trains the model for `table.step` on physical-unit data.
///
/// Samples are scaled with `state_scaler` followed by `input_scaler` repeated
/// once per stacked input; labels with `state_scaler`.
pub fn fit_step_model(
    table: &SampleTable,
    spec: &ModelSpec,
    state_scaler: &MinMaxScaler,
    input_scaler: &MinMaxScaler,
) -> Result<FitOutcome> {
    spec.validate()?;
    if table.is_empty() {
        return Err(Error::InvalidConfig(format!("no samples for step {}", table.step)));
    }
    let k = table.step as u64;
    let joint = state_scaler.concat(&input_scaler.repeat(table.step));
    let table = if spec.predicts_absolute {
        table.to_absolute()
    } else {
        table.clone()
    };
    let data = table.to_dataset(&joint, state_scaler, spec.split, seed::derive(spec.train.seed, &[k, 0]))?;
    if !data.within_unit_range() {
        return Err(Error::InvalidConfig(format!(
            "step {k} data falls outside the scaler range"
        )));
    }
    let mut init = seed::rng(seed::derive(spec.train.seed, &[k, 1]));
    let mut net = match spec.architecture {
        Architecture::Icnn => Network::icnn(
            data.input_dim,
            &spec.hidden,
            data.output_dim,
            spec.predicts_absolute,
            &mut init,
        )?,
        Architecture::Fnn => Network::fnn(data.input_dim, &spec.hidden, data.output_dim, &mut init)?,
    };
    let cfg = TrainConfig {
        seed: seed::derive(spec.train.seed, &[k, 2]),
        ..spec.train.clone()
    };
    let report = train(&mut net, &data, &cfg)?;
    let test_mse = data.mse(&net, super::Split::Test);
    let model = StepModel {
        format_version: MODEL_FORMAT_VERSION,
        step: table.step,
        state_dim: table.state_dim,
        input_dim: table.input_dim,
        input_scaler: joint,
        output_scaler: state_scaler.clone(),
        label_range: data.label_ranges(),
        network: net,
    };
    model.validate()?;
    Ok(FitOutcome {
        model,
        report,
        test_mse,
    })
}

/// Models for steps `1..=N_p`, sharing state and input scalings.
#[derive(Clone, Debug, PartialEq)]
pub struct Horizon {
    pub steps: Vec<StepModel>,
}

impl Horizon {
    pub fn new(mut steps: Vec<StepModel>) -> Result<Self> {
        steps.sort_by_key(|s| s.step);
        let first = steps
            .first()
            .ok_or_else(|| Error::InvalidModel("empty horizon".into()))?;
        let (n, m) = (first.state_dim, first.input_dim);
        let last = steps.last().unwrap();
        let joint = &last.input_scaler;
        for (i, s) in steps.iter().enumerate() {
            s.validate()?;
            if s.step != i + 1 {
                return Err(Error::InvalidModel(format!(
                    "horizon steps must be 1..=N_p without gaps, found step {}",
                    s.step
                )));
            }
            if s.state_dim != n || s.input_dim != m {
                return Err(Error::InvalidModel("horizon models disagree on dimensions".into()));
            }
            let w = s.network.input_dim;
            if s.input_scaler.lo[..] != joint.lo[..w] || s.input_scaler.hi[..] != joint.hi[..w] {
                return Err(Error::InvalidModel(
                    "horizon models must share input scalings".into(),
                ));
            }
            if s.output_scaler != first.output_scaler || s.predicts_absolute() != first.predicts_absolute() {
                return Err(Error::InvalidModel(
                    "horizon models must share output scaling and label kind".into(),
                ));
            }
        }
        Ok(Self { steps })
    }

    /// JSON array of the step models.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.steps)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let steps: Vec<StepModel> = serde_json::from_str(text)?;
        Self::new(steps)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.steps[0].state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.steps[0].input_dim
    }

    pub fn predicts_absolute(&self) -> bool {
        self.steps[0].predicts_absolute()
    }

    /// Scaling of the joint `(x, u_0, …, u_{N_p-1})` vector.
    pub fn joint_scaler(&self) -> &MinMaxScaler {
        &self.steps.last().unwrap().input_scaler
    }

    pub fn state_scaler(&self) -> MinMaxScaler {
        let j = self.joint_scaler();
        let n = self.state_dim();
        MinMaxScaler {
            lo: j.lo[..n].to_vec(),
            hi: j.hi[..n].to_vec(),
        }
    }

    pub fn input_scaler(&self) -> MinMaxScaler {
        let j = self.joint_scaler();
        let (n, m) = (self.state_dim(), self.input_dim());
        MinMaxScaler {
            lo: j.lo[n..n + m].to_vec(),
            hi: j.hi[n..n + m].to_vec(),
        }
    }

    pub fn output_scaler(&self) -> &MinMaxScaler {
        &self.steps[0].output_scaler
    }

    pub fn networks(&self) -> Vec<&dyn Predictor> {
        self.steps.iter().map(|s| &s.network as &dyn Predictor).collect()
    }

    /// Range of every output of every step model, in network units.
    pub fn output_ranges(&self) -> Vec<Vec<f64>> {
        self.steps
            .iter()
            .map(|s| s.label_range.iter().map(|(lo, hi)| hi - lo).collect())
            .collect()
    }

    /// Predicted states `x̄_{t+1} … x̄_{t+N_p}` in physical units, concatenated.
    pub fn predict_physical(&self, x: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = (self.state_dim(), self.input_dim());
        if x.len() != n {
            return Err(Error::dims("measured state", n, x.len()));
        }
        if inputs.len() != m * self.len() {
            return Err(Error::dims("input sequence", m * self.len(), inputs.len()));
        }
        let joint: Vec<f64> = x.iter().chain(inputs).copied().collect();
        let scaled = self.joint_scaler().forward(&joint);
        let out_scaler = self.output_scaler();
        let mut z = vec![0.0; n];
        let mut pred = Vec::with_capacity(n * self.len());
        for s in &self.steps {
            s.network.predict_into(&scaled[..s.network.input_dim], &mut z);
            pred.extend(out_scaler.inverse(&z));
        }
        Ok(pred)
    }

    /// Stage cost of an input sequence evaluated through the networks, all in
    /// physical units.
    pub fn objective(&self, x: &[f64], inputs: &[f64], weights: &QuadWeights) -> Result<f64> {
        if weights.state.len() != self.state_dim() || weights.input.len() != self.input_dim() {
            return Err(Error::dims("weights", self.state_dim(), weights.state.len()));
        }
        let pred = self.predict_physical(x, inputs)?;
        Ok(weights.stage_cost(&pred, inputs))
    }
}
