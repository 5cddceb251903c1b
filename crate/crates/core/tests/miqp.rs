mod common;

use std::time::Duration;

use empc_core::miqp::{
    objective_icnn, solve_exhaustive, solve_greedy, Budget, Evaluator, IcnnObjective, MiqpInstance, NeighborGraph,
    SelectionMode,
};
use empc_core::nn::{
    Activation, Architecture, Horizon, Layer, Matrix, MinMaxScaler, Network, StepModel, MODEL_FORMAT_VERSION,
};
use empc_core::pwl::{build_region_tree, ApproxConfig, RegionTree, SurrogateSet};
use empc_core::qp::{candidates_for_state, Candidate};
use empc_core::{seed, BoxDomain, QuadWeights};

fn zero_model(n: usize, m: usize) -> Horizon {
    let net = Network::from_layers(
        Architecture::Icnn,
        n + m,
        vec![Layer {
            hidden_weights: Matrix::zeros(n, 0),
            input_weights: Some(Matrix::zeros(n, n + m)),
            bias: vec![0.0; n],
            activation: Activation::Relu,
        }],
        true,
    )
    .unwrap();
    Horizon::new(vec![StepModel {
        format_version: MODEL_FORMAT_VERSION,
        step: 1,
        state_dim: n,
        input_dim: m,
        input_scaler: MinMaxScaler::unit(n + m),
        output_scaler: MinMaxScaler::unit(n),
        label_range: vec![(0.0, 1.0); n],
        network: net,
    }])
    .unwrap()
}

#[test]
fn zero_output_model_examples() {
    let h = zero_model(1, 1);
    let w = QuadWeights::new(vec![3.0], vec![0.5]).unwrap();
    assert_eq!(objective_icnn(&h, &[0.4], &[0.0], &w).unwrap(), 0.0);
    assert_eq!(objective_icnn(&h, &[0.4], &[2.0], &w).unwrap(), 2.0);
}

struct Setup {
    horizon: Horizon,
    tree: RegionTree,
    weights: QuadWeights,
}

fn setup(seed_value: u64) -> Setup {
    let horizon = common::random_icnn_horizon(2, 1, 2, &[8, 8], seed_value);
    let cfg = ApproxConfig {
        error_bound: 0.03,
        ..ApproxConfig::default()
    };
    let root = BoxDomain::symmetric(&[1.0; 4]).unwrap();
    let tree = build_region_tree(&SurrogateSet::from_horizon(&horizon), &root, &cfg).unwrap();
    Setup {
        horizon,
        tree,
        weights: QuadWeights::new(vec![5.0, 1.0], vec![0.2]).unwrap(),
    }
}

fn candidates(s: &Setup, x: &[f64]) -> Vec<Candidate> {
    candidates_for_state(&s.tree, &s.weights, &BoxDomain::symmetric(&[1.0]).unwrap(), x).unwrap()
}

#[test]
fn exhaustive_matches_independent_loop() {
    let s = setup(21);
    let mut rng = seed::rng(40);
    for _ in 0..20 {
        let x = s.tree.root_x_box().sample(&mut rng);
        let cands = candidates(&s, &x);
        let eval = IcnnObjective::new(&s.horizon, &x, &s.weights).unwrap();
        let r = solve_exhaustive(&MiqpInstance { candidates: &cands, evaluator: &eval }, &Budget::unlimited()).unwrap();
        let mut best = (f64::INFINITY, usize::MAX);
        for c in &cands {
            // Unit scalers: tree coordinates are physical units.
            let j = s.horizon.objective(&x, &c.inputs, &s.weights).unwrap();
            assert!(j >= 0.0);
            if j < best.0 {
                best = (j, c.region);
            }
        }
        assert_eq!(r.region, best.1);
        assert!((r.objective - best.0).abs() <= 1e-12 * best.0.max(1.0));
        assert_eq!(r.evaluations, cands.len());
        assert_eq!(r.table.len(), cands.len());
        assert_eq!(r.objective, r.table.iter().map(|t| t.1).fold(f64::INFINITY, f64::min));
    }
}

#[test]
fn greedy_equals_exhaustive_on_convex_instances() {
    for seed_value in [21, 22, 23] {
        let s = setup(seed_value);
        let mut rng = seed::rng(41 + seed_value);
        let mut saved = 0;
        for _ in 0..25 {
            let x = s.tree.root_x_box().sample(&mut rng);
            let cands = candidates(&s, &x);
            let eval = IcnnObjective::new(&s.horizon, &x, &s.weights).unwrap();
            let inst = MiqpInstance { candidates: &cands, evaluator: &eval };
            let ex = solve_exhaustive(&inst, &Budget::unlimited()).unwrap();
            let graph = NeighborGraph::for_state(&s.tree, &x, &cands);
            let start = (x[0].abs() * 1e6) as usize % cands.len();
            let gr = solve_greedy(&inst, &graph, start, &Budget::unlimited()).unwrap();
            assert_eq!((gr.region, gr.objective), (ex.region, ex.objective));
            assert_eq!(gr.mode, SelectionMode::Greedy);
            assert!(gr.evaluations <= ex.evaluations);
            saved += ex.evaluations - gr.evaluations;
        }
        assert!(saved > 0);
    }
}

#[test]
fn subgradient_matches_finite_differences() {
    let s = setup(21);
    let mut rng = seed::rng(42);
    for _ in 0..20 {
        let x = s.tree.root_x_box().sample(&mut rng);
        let u = s.tree.root_u_box().sample(&mut rng);
        let eval = IcnnObjective::new(&s.horizon, &x, &s.weights).unwrap();
        let (j, g) = eval.convex_subgradient(&u).unwrap().unwrap();
        assert_eq!(j, eval.objective(&u).unwrap());
        let h = 1e-6;
        for d in 0..u.len() {
            let mut a = u.clone();
            let mut b = u.clone();
            a[d] += h;
            b[d] -= h;
            let fd = (eval.objective(&a).unwrap() - eval.objective(&b).unwrap()) / (2.0 * h);
            assert!((fd - g[d]).abs() <= 1e-5 * fd.abs().max(1.0), "{fd} vs {}", g[d]);
        }
    }
}

#[test]
fn signed_models_offer_no_certificate() {
    let mut h = common::random_icnn_horizon(2, 1, 1, &[4], 3);
    let net = &mut h.steps[0].network;
    net.layers.last_mut().unwrap().activation = Activation::Linear;
    net.predicts_absolute = false;
    let w = QuadWeights::new(vec![1.0, 1.0], vec![1.0]).unwrap();
    let eval = IcnnObjective::new(&h, &[0.0, 0.0], &w).unwrap();
    assert!(eval.convex_subgradient(&[0.0]).is_none());
}

#[test]
fn physical_and_scaled_evaluations_agree() {
    let mut h = common::random_icnn_horizon(2, 1, 2, &[6], 7);
    let xs = MinMaxScaler::new(vec![-2.0, -90.0], vec![2.0, 90.0]).unwrap();
    let us = MinMaxScaler::new(vec![-3.5], vec![3.5]).unwrap();
    for s in &mut h.steps {
        s.input_scaler = xs.concat(&us.repeat(s.step));
        s.output_scaler = xs.clone();
    }
    let h = Horizon::new(h.steps).unwrap();
    let w = QuadWeights::new(vec![500.0, 0.5], vec![1.0]).unwrap();
    let x = [0.9, 45.0];
    let eval = IcnnObjective::new(&h, &x, &w).unwrap();
    let scaled = [0.25, -0.5];
    let physical = [0.875, -1.75];
    let a = eval.objective(&scaled).unwrap();
    let b = objective_icnn(&h, &x, &physical, &w).unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
}

/// Counts calls and sleeps, to exercise the budget.
struct Slow<'a> {
    inner: IcnnObjective<'a>,
}

impl Evaluator for Slow<'_> {
    fn objective(&self, inputs: &[f64]) -> empc_core::Result<f64> {
        std::thread::sleep(Duration::from_millis(3));
        self.inner.objective(inputs)
    }
}

#[test]
fn budget_cutoff_returns_best_evaluated() {
    let s = setup(21);
    let x = [0.1, -0.2];
    // A synthetic list of 256 inputs, enough for several evaluation chunks.
    let mut rng = seed::rng(43);
    let cands: Vec<Candidate> = (0..256)
        .map(|region| Candidate {
            region,
            inputs: s.tree.root_u_box().sample(&mut rng),
            affine_objective: 0.0,
        })
        .collect();
    assert!(cands.len() > 64, "{} candidates", cands.len());
    let eval = Slow {
        inner: IcnnObjective::new(&s.horizon, &x, &s.weights).unwrap(),
    };
    let inst = MiqpInstance { candidates: &cands, evaluator: &eval };
    let r = solve_exhaustive(&inst, &Budget::starting_now(Duration::from_millis(1))).unwrap();
    assert!(r.budget_exceeded);
    assert!(r.evaluations < cands.len());
    let best = r.table.iter().fold((usize::MAX, f64::INFINITY), |b, &(i, j)| if j < b.1 { (i, j) } else { b });
    assert_eq!((r.region, r.objective), best);
    let c = cands.iter().find(|c| c.region == r.region).unwrap();
    assert_eq!(r.inputs, c.inputs);
}
