//! Fixtures shared by the kernel benchmarks.

use empc_core::nn::{Horizon, MinMaxScaler, Network, StepModel, MODEL_FORMAT_VERSION};
use empc_core::pwl::{build_region_tree, ApproxConfig, RegionTree, SurrogateSet};
use empc_core::{seed, BoxDomain, QuadWeights};

pub const STATE_DIM: usize = 2;
pub const INPUT_DIM: usize = 2;
pub const HORIZON: usize = 2;

/// Random absolute-output ICNN horizon on unit scalers, its region tree and weights.
pub struct Fixture {
    pub horizon: Horizon,
    pub tree: RegionTree,
    pub weights: QuadWeights,
    pub u_bounds: BoxDomain,
}

impl Fixture {
    pub fn new(hidden: &[usize], error_bound: f64, seed_value: u64) -> Self {
        let (n, m) = (STATE_DIM, INPUT_DIM);
        let mut rng = seed::rng(seed_value);
        let steps = (1..=HORIZON)
            .map(|k| StepModel {
                format_version: MODEL_FORMAT_VERSION,
                step: k,
                state_dim: n,
                input_dim: m,
                input_scaler: MinMaxScaler::unit(n + m * k),
                output_scaler: MinMaxScaler::unit(n),
                label_range: vec![(0.0, 1.0); n],
                network: Network::icnn(n + m * k, hidden, n, true, &mut rng).unwrap(),
            })
            .collect();
        let horizon = Horizon::new(steps).unwrap();
        let root = BoxDomain::symmetric(&vec![1.0; n + m * HORIZON]).unwrap();
        let cfg = ApproxConfig {
            error_bound,
            ..ApproxConfig::default()
        };
        let tree = build_region_tree(&SurrogateSet::from_horizon(&horizon), &root, &cfg).unwrap();
        Self {
            horizon,
            tree,
            weights: QuadWeights::new(vec![1.0; n], vec![0.1; m]).unwrap(),
            u_bounds: BoxDomain::symmetric(&vec![1.0; m]).unwrap(),
        }
    }
}
