//! Sampling-based convexity certificate with a static weight check.

use serde::{Deserialize, Serialize};

use super::{Architecture, Network, Predictor};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// Static and sampled checks both passed.
    pub pass: bool,
    pub static_pass: bool,
    pub static_issues: Vec<String>,
    /// Largest `f(mid) - (f(a) + f(b)) / 2` over pairs and output components.
    pub worst_violation: f64,
    /// Pair attaining the worst violation.
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
    pub pairs: usize,
}

/// Structural reasons a network is not guaranteed convex; empty when it is.
pub fn static_issues(net: &Network) -> Vec<String> {
    let mut issues = Vec::new();
    if net.architecture != Architecture::Icnn {
        issues.push("architecture is not input-convex".to_owned());
    }
    for (i, layer) in net.layers.iter().enumerate() {
        let negatives = layer.hidden_weights.data.iter().filter(|w| **w < 0.0).count();
        if negatives > 0 && net.architecture == Architecture::Icnn {
            issues.push(format!("layer {i}: {negatives} negative hidden weights"));
        }
        if !layer.activation.is_convex_nondecreasing() {
            issues.push(format!("layer {i}: activation {:?} is not convex non-decreasing", layer.activation));
        }
    }
    issues
}

/// Midpoint test over `n_pairs` uniform pairs in `domain`.
pub fn sample_midpoint_convexity<P: Predictor + ?Sized>(
    model: &P,
    domain: &BoxDomain,
    n_pairs: usize,
    seed: u64,
) -> Result<(f64, Option<(Vec<f64>, Vec<f64>)>)> {
    if domain.dim() == 0 {
        return Err(Error::EmptyDomain);
    }
    if domain.dim() != model.input_dim() {
        return Err(Error::dims("convexity domain", model.input_dim(), domain.dim()));
    }
    if n_pairs == 0 {
        return Err(Error::InvalidConfig("n_pairs must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    let p = model.output_dim();
    let (mut fa, mut fb, mut fm) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for _ in 0..n_pairs {
        let a = domain.sample(&mut rng);
        let b = domain.sample(&mut rng);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        model.predict_into(&a, &mut fa);
        model.predict_into(&b, &mut fb);
        model.predict_into(&mid, &mut fm);
        for j in 0..p {
            let v = fm[j] - 0.5 * (fa[j] + fb[j]);
            if v > worst {
                worst = v;
                witness = Some((a.clone(), b.clone()));
            }
        }
    }
    Ok((worst, witness))
}

pub fn certify_convexity(
    net: &Network,
    domain: &BoxDomain,
    n_pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<ConvexityReport> {
    let issues = static_issues(net);
    let (worst, witness) = sample_midpoint_convexity(net, domain, n_pairs, seed)?;
    let static_pass = issues.is_empty();
    Ok(ConvexityReport {
        pass: static_pass && worst <= tol,
        static_pass,
        static_issues: issues,
        worst_violation: worst,
        witness,
        pairs: n_pairs,
    })
}
