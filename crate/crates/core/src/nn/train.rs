//! Minibatch Adam on mean-squared error.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Architecture, Dataset, Network, Split};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("bad training hyperparameters: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 0 is the untrained network.
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochLoss>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.history.first().map(|e| e.train_mse)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|e| e.train_mse)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["epoch", "train_mse", "val_mse"])?;
        for e in &self.history {
            wr.write_record([
                e.epoch.to_string(),
                e.train_mse.to_string(),
                e.val_mse.map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (i, p) in net.params_mut().enumerate() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            *p -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

/// Trains in place. ICNN hidden weights are projected onto the non-negative
/// orthant after every optimizer step.
pub fn train(net: &mut Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDomain);
    }
    if data.input_dim != net.input_dim {
        return Err(Error::dims("training inputs", net.input_dim, data.input_dim));
    }
    if data.output_dim != net.output_dim() {
        return Err(Error::dims("training labels", net.output_dim(), data.output_dim));
    }
    let mut train_idx = data.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    let has_val = !data.indices(Split::Val).is_empty();
    let mut rng = seed::rng(cfg.seed);
    let mut adam = Adam::new(net.param_count());
    let mut report = TrainReport::default();
    let checkpoint = |net: &Network, epoch: usize| -> Result<EpochLoss> {
        let train_mse = data.mse(net, Split::Train).unwrap();
        if !train_mse.is_finite() {
            return Err(Error::DivergedTraining { epoch });
        }
        Ok(EpochLoss {
            epoch,
            train_mse,
            val_mse: if has_val { data.mse(net, Split::Val) } else { None },
        })
    };
    report.history.push(checkpoint(net, 0)?);

    let mut xb = Vec::with_capacity(cfg.batch_size * data.input_dim);
    let mut yb = Vec::with_capacity(cfg.batch_size * data.output_dim);
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(data.input(i));
                yb.extend_from_slice(data.label(i));
            }
            let (loss, grad) = net.loss_and_gradient(&xb, &yb);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::DivergedTraining { epoch });
            }
            adam.step(net, &grad, cfg);
            if net.architecture == Architecture::Icnn {
                net.project_nonnegative();
                debug_assert!(net.hidden_weights_nonnegative());
            }
        }
        report.history.push(checkpoint(net, epoch)?);
    }
    log::debug!(
        "trained {:?} for {} epochs: mse {:.3e} -> {:.3e}",
        net.architecture,
        cfg.epochs,
        report.initial_loss().unwrap_or(f64::NAN),
        report.final_loss().unwrap_or(f64::NAN)
    );
    Ok(report)
}
