use std::time::Duration;

use super::MpcConfig;
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::miqp::{solve_exhaustive, solve_greedy, Budget, IcnnObjective, MiqpInstance, NeighborGraph, SelectionMode, SelectionResult};
use crate::nn::{Horizon, MinMaxScaler};
use crate::pwl::RegionTree;
use crate::qp::{candidates_for_state, Candidate};
use crate::weights::QuadWeights;

/// Outcome of one controller call.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// First input of the chosen sequence, physical units.
    pub input: Vec<f64>,
    pub objective: Option<f64>,
    pub region: Option<usize>,
    pub budget_exceeded: bool,
    pub candidates: usize,
    pub evaluations: usize,
}

pub trait Controller: Send {
    fn name(&self) -> &str;
    /// Forgets state carried between calls.
    fn reset(&mut self);
    fn decide(&mut self, x: &[f64]) -> Result<Decision>;
}

/// Applies the same input at every step.
#[derive(Clone, Debug)]
pub struct ConstantInput {
    pub name: String,
    pub input: Vec<f64>,
}

impl ConstantInput {
    pub fn zero(input_dim: usize) -> Self {
        Self {
            name: "open-loop".into(),
            input: vec![0.0; input_dim],
        }
    }
}

impl Controller for ConstantInput {
    fn name(&self) -> &str {
        &self.name
    }

    fn reset(&mut self) {}

    fn decide(&mut self, _x: &[f64]) -> Result<Decision> {
        Ok(Decision {
            input: self.input.clone(),
            objective: None,
            region: None,
            budget_exceeded: false,
            candidates: 0,
            evaluations: 0,
        })
    }
}

/// Region-tree MPC: per-region QPs at the measured state, then selection on
/// the horizon models.
pub struct ExplicitMpc {
    name: String,
    horizon: Horizon,
    tree: RegionTree,
    config: MpcConfig,
    weights: QuadWeights,
    tree_weights: QuadWeights,
    u_box: BoxDomain,
    tree_u_bounds: BoxDomain,
    sequence_scaler: MinMaxScaler,
    previous: Option<Vec<f64>>,
}

impl ExplicitMpc {
    pub fn new(name: &str, horizon: Horizon, tree: RegionTree, config: MpcConfig) -> Result<Self> {
        config.validate()?;
        let (n, m) = (horizon.state_dim(), horizon.input_dim());
        if horizon.len() != config.horizon || tree.horizon != config.horizon {
            return Err(Error::InvalidConfig(format!(
                "horizon mismatch: config {}, models {}, tree {}",
                config.horizon,
                horizon.len(),
                tree.horizon
            )));
        }
        if tree.state_dim != n || tree.input_dim != m || config.u_lo.len() != m || config.state_weights.len() != n {
            return Err(Error::dims("controller dimensions", n + m, tree.state_dim + tree.input_dim));
        }
        let state_scaler = horizon.state_scaler();
        let input_scaler = horizon.input_scaler();
        if !state_scaler.is_zero_centered() || !input_scaler.is_zero_centered() {
            return Err(Error::InvalidModel("the controller needs zero-centered scalers".into()));
        }
        let weights = config.weights()?;
        let tree_weights = weights.rescaled(&horizon.output_scaler().half_range(), &input_scaler.half_range());
        let u_box = config.u_box()?;
        let tree_u_bounds = input_scaler.forward_box(&u_box);
        Ok(Self {
            name: name.to_owned(),
            sequence_scaler: input_scaler.repeat(config.horizon),
            horizon,
            tree,
            config,
            weights,
            tree_weights,
            u_box,
            tree_u_bounds,
            previous: None,
        })
    }

    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    pub fn tree(&self) -> &RegionTree {
        &self.tree
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    /// Measured state in tree coordinates, clamped into the tree's state box.
    pub fn tree_state(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut xs = self.horizon.state_scaler().forward(x);
        let root = self.tree.root_x_box();
        if !root.contains(&xs) {
            log::debug!("state {x:?} outside the region tree; clamping for candidate search");
            root.clamp(&mut xs);
        }
        Ok(xs)
    }

    pub fn candidates(&self, x: &[f64]) -> Result<Vec<Candidate>> {
        let xs = self.tree_state(x)?;
        candidates_for_state(&self.tree, &self.tree_weights, &self.tree_u_bounds, &xs)
    }

    /// Candidate generation and selection for `x` with the given mode and
    /// greedy starting sequence (tree coordinates).
    pub fn select(
        &self,
        x: &[f64],
        mode: SelectionMode,
        previous: Option<&[f64]>,
        budget: &Budget,
    ) -> Result<(Vec<Candidate>, SelectionResult)> {
        if x.len() != self.horizon.state_dim() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::dims("measured state", self.horizon.state_dim(), x.len()));
        }
        let xs = self.tree_state(x)?;
        let candidates = candidates_for_state(&self.tree, &self.tree_weights, &self.tree_u_bounds, &xs)?;
        let evaluator = IcnnObjective::new(&self.horizon, x, &self.weights)?;
        let inst = MiqpInstance {
            candidates: &candidates,
            evaluator: &evaluator,
        };
        let result = match mode {
            SelectionMode::Exhaustive => solve_exhaustive(&inst, budget)?,
            SelectionMode::Greedy => {
                let graph = NeighborGraph::for_state(&self.tree, &xs, &candidates);
                let start = self.start_index(&xs, previous, &candidates);
                solve_greedy(&inst, &graph, start, budget)?
            }
        };
        Ok((candidates, result))
    }

    fn start_index(&self, xs: &[f64], previous: Option<&[f64]>, candidates: &[Candidate]) -> usize {
        let d = self.tree.joint_dim() - xs.len();
        let mut point = xs.to_vec();
        point.extend(previous.map_or_else(|| vec![0.0; d], <[f64]>::to_vec));
        self.tree.root.clamp(&mut point);
        self.tree
            .locate(&point)
            .ok()
            .and_then(|r| candidates.binary_search_by_key(&r.id, |c| c.region).ok())
            .unwrap_or(0)
    }
}

impl Controller for ExplicitMpc {
    fn name(&self) -> &str {
        &self.name
    }

    fn reset(&mut self) {
        self.previous = None;
    }

    fn decide(&mut self, x: &[f64]) -> Result<Decision> {
        let budget = Budget::starting_now(Duration::from_secs_f64(self.config.budget_secs));
        let previous = self.previous.take();
        let (candidates, result) = self.select(x, self.config.selection, previous.as_deref(), &budget)?;
        let mut input = self.sequence_scaler.inverse(&result.inputs);
        input.truncate(self.horizon.input_dim());
        self.u_box.clamp(&mut input);
        self.previous = Some(result.inputs);
        Ok(Decision {
            input,
            objective: Some(result.objective),
            region: Some(result.region),
            budget_exceeded: result.budget_exceeded || budget.exceeded(),
            candidates: candidates.len(),
            evaluations: result.evaluations,
        })
    }
}
