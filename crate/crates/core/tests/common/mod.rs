#![allow(dead_code)]

pub mod qp_oracle;
pub mod wire;

use empc_core::nn::{
    fit_step_model, Architecture, FitOutcome, Horizon, MinMaxScaler, ModelSpec, Network, SampleTable, StepModel,
    TrainConfig, MODEL_FORMAT_VERSION,
};
use empc_core::plant::{generate_openloop_dataset, OpenLoopConfig, ToyPlant};
use empc_core::{seed, BoxDomain};

/// Toy-system states are drawn from ±2; one step can reach ±6, so the state
/// scaler spans ±6.5. Inputs span ±10.
pub fn toy_scalers() -> (MinMaxScaler, MinMaxScaler) {
    (
        MinMaxScaler::new(vec![-6.5, -6.5], vec![6.5, 6.5]).unwrap(),
        MinMaxScaler::new(vec![-10.0, -10.0], vec![10.0, 10.0]).unwrap(),
    )
}

pub fn toy_table(n: usize, seed: u64) -> SampleTable {
    let cfg = OpenLoopConfig {
        x_box: BoxDomain::symmetric(&[2.0, 2.0]).unwrap(),
        u_box: BoxDomain::symmetric(&[10.0, 10.0]).unwrap(),
        n_traj: n,
        horizon: 1,
        steps_per_traj: 1,
        truncate_factor: 3.25,
        dt: 1.0,
        seed,
    };
    generate_openloop_dataset(&ToyPlant, &cfg).unwrap().remove(0)
}

/// Scaled box the toy models were trained on.
pub fn toy_domain() -> BoxDomain {
    let (xs, us) = toy_scalers();
    xs.forward_box(&BoxDomain::symmetric(&[2.0, 2.0]).unwrap())
        .concat(&us.forward_box(&BoxDomain::symmetric(&[10.0, 10.0]).unwrap()))
}

pub fn fit_toy(architecture: Architecture, predicts_absolute: bool, epochs: usize) -> FitOutcome {
    let (xs, us) = toy_scalers();
    let spec = ModelSpec {
        architecture,
        hidden: vec![32, 32],
        predicts_absolute,
        train: TrainConfig {
            epochs,
            seed: 5,
            ..TrainConfig::default()
        },
        ..ModelSpec::default()
    };
    fit_step_model(&toy_table(4000, 3), &spec, &xs, &us).unwrap()
}

/// Horizon of randomly initialised absolute-output ICNNs on unit scalers.
pub fn random_icnn_horizon(n: usize, m: usize, steps: usize, hidden: &[usize], seed_value: u64) -> Horizon {
    let mut rng = seed::rng(seed_value);
    let models = (1..=steps)
        .map(|k| {
            let width = n + m * steps;
            let network = Network::icnn(n + m * k, hidden, n, true, &mut rng).unwrap();
            let scaler = MinMaxScaler::unit(width);
            StepModel {
                format_version: MODEL_FORMAT_VERSION,
                step: k,
                state_dim: n,
                input_dim: m,
                input_scaler: MinMaxScaler {
                    lo: scaler.lo[..n + m * k].to_vec(),
                    hi: scaler.hi[..n + m * k].to_vec(),
                },
                output_scaler: MinMaxScaler::unit(n),
                label_range: vec![(0.0, 1.0); n],
                network,
            }
        })
        .collect();
    Horizon::new(models).unwrap()
}
