use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Budget, NeighborGraph};
use crate::error::{Error, Result};
use crate::nn::{static_issues, Horizon, MinMaxScaler, Predictor};
use crate::qp::Candidate;
use crate::weights::QuadWeights;

const CHUNK: usize = 64;

/// Objective of a candidate input sequence given in tree coordinates.
pub trait Evaluator: Sync {
    fn objective(&self, inputs: &[f64]) -> Result<f64>;

    /// Objective and a subgradient, offered only when the objective is
    /// convex in the inputs; greedy selection then certifies its answer.
    fn convex_subgradient(&self, _inputs: &[f64]) -> Option<Result<(f64, Vec<f64>)>> {
        None
    }
}

/// `Σ_k x̄ᵀMx̄ + Σ_k uᵀNu` in physical units, with `x̄` predicted by the
/// horizon models.
pub fn objective_icnn(horizon: &Horizon, x: &[f64], inputs: &[f64], weights: &QuadWeights) -> Result<f64> {
    horizon.objective(x, inputs, weights)
}

/// [`objective_icnn`] at a fixed measured state, for inputs in the horizon's
/// scaled coordinates.
pub struct IcnnObjective<'a> {
    horizon: &'a Horizon,
    joint: Vec<f64>,
    state_dim: usize,
    input_scaler: MinMaxScaler,
    weights: &'a QuadWeights,
    convex: bool,
}

impl<'a> IcnnObjective<'a> {
    pub fn new(horizon: &'a Horizon, x: &[f64], weights: &'a QuadWeights) -> Result<Self> {
        let n = horizon.state_dim();
        if x.len() != n {
            return Err(Error::dims("measured state", n, x.len()));
        }
        if weights.state.len() != n || weights.input.len() != horizon.input_dim() {
            return Err(Error::dims("weights", n, weights.state.len()));
        }
        let mut joint = horizon.state_scaler().forward(x);
        joint.resize(horizon.joint_scaler().dim(), 0.0);
        // Squares of non-negative convex outputs stay convex; signed outputs
        // do not.
        let convex = horizon.steps.iter().all(|s| {
            s.predicts_absolute() && s.output_scaler.is_zero_centered() && static_issues(&s.network).is_empty()
        });
        Ok(Self {
            horizon,
            joint,
            state_dim: n,
            input_scaler: horizon.input_scaler().repeat(horizon.len()),
            weights,
            convex,
        })
    }

    fn joint_for(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        if inputs.len() != self.joint.len() - self.state_dim {
            return Err(Error::dims("input sequence", self.joint.len() - self.state_dim, inputs.len()));
        }
        let mut joint = self.joint.clone();
        joint[self.state_dim..].copy_from_slice(inputs);
        Ok(joint)
    }
}

impl Evaluator for IcnnObjective<'_> {
    fn objective(&self, inputs: &[f64]) -> Result<f64> {
        let joint = self.joint_for(inputs)?;
        let out = self.horizon.output_scaler();
        let mut z = vec![0.0; self.state_dim];
        let mut predicted = Vec::with_capacity(self.state_dim * self.horizon.len());
        for step in &self.horizon.steps {
            step.network.predict_into(&joint[..step.network.input_dim], &mut z);
            predicted.extend(out.inverse(&z));
        }
        let physical = self.input_scaler.inverse(inputs);
        Ok(self.weights.stage_cost(&predicted, &physical))
    }

    fn convex_subgradient(&self, inputs: &[f64]) -> Option<Result<(f64, Vec<f64>)>> {
        if !self.convex {
            return None;
        }
        Some(self.value_and_gradient(inputs))
    }
}

impl IcnnObjective<'_> {
    fn value_and_gradient(&self, inputs: &[f64]) -> Result<(f64, Vec<f64>)> {
        let joint = self.joint_for(inputs)?;
        let n = self.state_dim;
        let out = self.horizon.output_scaler();
        let h_out = out.half_range();
        let mut z = vec![0.0; n];
        let mut predicted = Vec::with_capacity(n * self.horizon.len());
        let mut grad = vec![0.0; inputs.len()];
        for step in &self.horizon.steps {
            let s = &joint[..step.network.input_dim];
            // Same path as `objective`, so both report identical values.
            step.network.predict_into(s, &mut z);
            let x = out.inverse(&z);
            let upstream: Vec<f64> = (0..n).map(|i| 2.0 * self.weights.state[i] * x[i] * h_out[i]).collect();
            predicted.extend(x);
            let (_, g) = step.network.input_vjp(s, &upstream)?;
            for (acc, gi) in grad.iter_mut().zip(&g[n..]) {
                *acc += gi;
            }
        }
        let m = self.weights.input.len();
        let h_in = self.input_scaler.half_range();
        let physical = self.input_scaler.inverse(inputs);
        for (i, (v, g)) in physical.iter().zip(grad.iter_mut()).enumerate() {
            *g += 2.0 * self.weights.input[i % m] * v * h_in[i];
        }
        Ok((self.weights.stage_cost(&predicted, &physical), grad))
    }
}

pub struct MiqpInstance<'a> {
    pub candidates: &'a [Candidate],
    pub evaluator: &'a dyn Evaluator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Exhaustive,
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub region: usize,
    /// Winning input sequence, tree coordinates.
    pub inputs: Vec<f64>,
    pub objective: f64,
    /// `(region, J)` for every evaluated candidate, by region id.
    pub table: Vec<(usize, f64)>,
    pub mode: SelectionMode,
    pub evaluations: usize,
    pub budget_exceeded: bool,
}

fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn finish(
    inst: &MiqpInstance,
    values: &[Option<f64>],
    mode: SelectionMode,
    budget_exceeded: bool,
) -> Result<SelectionResult> {
    let mut table: Vec<(usize, f64)> = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        let Some(j) = v else { continue };
        let region = inst.candidates[i].region;
        table.push((region, *j));
        if best.is_none_or(|(b, bj)| better((*j, region), (bj, inst.candidates[b].region))) {
            best = Some((i, *j));
        }
    }
    let (i, objective) = best.ok_or(Error::NoCandidates)?;
    table.sort_by_key(|(r, _)| *r);
    Ok(SelectionResult {
        region: inst.candidates[i].region,
        inputs: inst.candidates[i].inputs.clone(),
        objective,
        evaluations: table.len(),
        table,
        mode,
        budget_exceeded,
    })
}

fn evaluate(inst: &MiqpInstance, i: usize) -> Option<f64> {
    match inst.evaluator.objective(&inst.candidates[i].inputs) {
        Ok(j) if j.is_finite() => Some(j),
        Ok(j) => {
            log::warn!("candidate {} has non-finite objective {j}", inst.candidates[i].region);
            None
        }
        Err(e) => {
            log::warn!("candidate {} not evaluated: {e}", inst.candidates[i].region);
            None
        }
    }
}

/// Evaluates every candidate and returns the minimizer; ties go to the lowest
/// region id. When the budget runs out, the best candidate evaluated so far
/// is returned and flagged.
pub fn solve_exhaustive(inst: &MiqpInstance, budget: &Budget) -> Result<SelectionResult> {
    let n = inst.candidates.len();
    if n == 0 {
        return Err(Error::NoCandidates);
    }
    let mut values = vec![None; n];
    let mut exceeded = false;
    for start in (0..n).step_by(CHUNK) {
        if start > 0 && budget.exceeded() {
            exceeded = true;
            break;
        }
        let end = (start + CHUNK).min(n);
        let chunk: Vec<Option<f64>> = (start..end).into_par_iter().map(|i| evaluate(inst, i)).collect();
        values[start..end].copy_from_slice(&chunk);
    }
    if exceeded {
        log::warn!("selection budget exceeded; using best of the evaluated candidates");
    }
    finish(inst, &values, SelectionMode::Exhaustive, exceeded)
}

/// Candidates evaluated together during certification.
const CERTIFY_BATCH: usize = 8;

fn probe(inst: &MiqpInstance, i: usize) -> (Option<f64>, Option<Vec<f64>>) {
    let region = inst.candidates[i].region;
    match inst.evaluator.convex_subgradient(&inst.candidates[i].inputs) {
        None => (evaluate(inst, i), None),
        Some(Ok((j, g))) if j.is_finite() && g.iter().all(|v| v.is_finite()) => (Some(j), Some(g)),
        Some(Ok((j, _))) => {
            log::warn!("candidate {region} has non-finite objective or subgradient (J = {j})");
            (None, None)
        }
        Some(Err(e)) => {
            log::warn!("candidate {region} not evaluated: {e}");
            (None, None)
        }
    }
}

/// Steepest descent over facet neighbours from candidate `start`, stopping at
/// a candidate no neighbour improves on.
///
/// When the evaluator is convex, the local minimum is then certified: each
/// evaluated candidate contributes the tangent plane `J_j + g_jᵀ(U - U_j)`,
/// which bounds `J` from below at every other candidate's sequence. Any
/// candidate whose bound does not exceed the incumbent is evaluated, lowest
/// bound first, until none is left. The result then matches exhaustive
/// selection.
pub fn solve_greedy(
    inst: &MiqpInstance,
    graph: &NeighborGraph,
    start: usize,
    budget: &Budget,
) -> Result<SelectionResult> {
    let n = inst.candidates.len();
    if n == 0 {
        return Err(Error::NoCandidates);
    }
    if graph.len() != n || start >= n {
        return Err(Error::dims("neighbour graph", n, graph.len()));
    }
    let mut values: Vec<Option<f64>> = vec![None; n];
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut visited = vec![false; n];
    (values[start], grads[start]) = probe(inst, start);
    visited[start] = true;
    let convex = grads[start].is_some();
    if !convex && !graph.is_connected() {
        log::warn!("neighbour graph is disconnected; falling back to exhaustive selection");
        return solve_exhaustive(inst, budget);
    }
    let key = |i: usize, values: &[Option<f64>]| values[i].map(|j| (j, inst.candidates[i].region));
    let mut current = start;
    let mut exceeded = false;
    loop {
        let pending: Vec<usize> = graph.adjacency[current].iter().copied().filter(|&j| !visited[j]).collect();
        if !pending.is_empty() && budget.exceeded() {
            exceeded = true;
            break;
        }
        let probed: Vec<_> = pending.par_iter().map(|&j| probe(inst, j)).collect();
        for (j, (v, g)) in pending.into_iter().zip(probed) {
            values[j] = v;
            grads[j] = g;
            visited[j] = true;
        }
        let mut next = current;
        for &j in &graph.adjacency[current] {
            let Some(kj) = key(j, &values) else { continue };
            match key(next, &values) {
                Some(kn) if !better(kj, kn) => {}
                _ => next = j,
            }
        }
        if next == current {
            break;
        }
        current = next;
    }
    if convex && !exceeded {
        exceeded = certify(inst, &mut values, &mut grads, &mut visited, budget);
    }
    if exceeded {
        log::warn!("selection budget exceeded; using best of the evaluated candidates");
    }
    finish(inst, &values, SelectionMode::Greedy, exceeded)
}

/// Evaluates candidates until every unevaluated one has a lower bound above
/// the incumbent. Returns true if the budget ran out first.
fn certify(
    inst: &MiqpInstance,
    values: &mut [Option<f64>],
    grads: &mut [Option<Vec<f64>>],
    visited: &mut [bool],
    budget: &Budget,
) -> bool {
    let n = values.len();
    let mut bound = vec![f64::NEG_INFINITY; n];
    let add_plane = |bound: &mut [f64], visited: &[bool], j: usize, value: f64, g: &[f64]| {
        let uj = &inst.candidates[j].inputs;
        for i in (0..n).filter(|&i| !visited[i]) {
            let ui = &inst.candidates[i].inputs;
            let lin: f64 = g.iter().zip(ui).zip(uj).map(|((g, a), b)| g * (a - b)).sum();
            bound[i] = bound[i].max(value + lin);
        }
    };
    for j in 0..n {
        if let (Some(v), Some(g)) = (values[j], &grads[j]) {
            add_plane(&mut bound, visited, j, v, g);
        }
    }
    loop {
        let Some(best) = values.iter().flatten().copied().reduce(f64::min) else {
            return false;
        };
        // Rounding in the network can make a tangent plane overshoot by a few
        // ulps; the slack keeps ties and near-ties in play.
        let slack = 1e-9 * best.abs().max(1.0);
        let mut open: Vec<usize> = (0..n).filter(|&i| !visited[i] && bound[i] <= best + slack).collect();
        if open.is_empty() {
            return false;
        }
        if budget.exceeded() {
            return true;
        }
        open.sort_by(|&a, &b| bound[a].total_cmp(&bound[b]).then(inst.candidates[a].region.cmp(&inst.candidates[b].region)));
        open.truncate(CERTIFY_BATCH);
        let probed: Vec<_> = open.par_iter().map(|&i| probe(inst, i)).collect();
        for &i in &open {
            visited[i] = true;
        }
        for (i, (v, g)) in open.into_iter().zip(probed) {
            values[i] = v;
            if let (Some(v), Some(g)) = (v, &g) {
                add_plane(&mut bound, visited, i, v, g);
            }
            grads[i] = g;
        }
    }
}
