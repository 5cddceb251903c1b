mod common;

use empc_core::control::{
    compare_controllers, iae, iae_signal, run_closed_loop, ConstantInput, Controller, ExplicitMpc, LoopSettings,
    MpcConfig, TrajectoryLog,
};
use empc_core::miqp::SelectionMode;
use empc_core::nn::Horizon;
use empc_core::plant::ToyPlant;
use empc_core::pwl::{build_region_tree, ApproxConfig, RegionTree, SurrogateSet};
use empc_core::BoxDomain;
use proptest::prelude::*;

/// Random convex models on the toy scalers, one step ahead.
fn toy_stack() -> (Horizon, RegionTree) {
    let mut h = common::random_icnn_horizon(2, 2, 1, &[8], 31);
    let (xs, us) = common::toy_scalers();
    h.steps[0].input_scaler = xs.concat(&us);
    h.steps[0].output_scaler = xs;
    let h = Horizon::new(h.steps).unwrap();
    let cfg = ApproxConfig {
        error_bound: 0.005,
        ..ApproxConfig::default()
    };
    let tree = build_region_tree(&SurrogateSet::from_horizon(&h), &common::toy_domain(), &cfg).unwrap();
    assert!(tree.len() > 100);
    (h, tree)
}

fn toy_config(selection: SelectionMode, budget_secs: f64) -> MpcConfig {
    MpcConfig {
        horizon: 1,
        state_weights: vec![1.0, 1.0],
        input_weights: vec![0.1, 0.1],
        u_lo: vec![-3.0, -2.0],
        u_hi: vec![3.0, 2.0],
        dt: 1.0,
        budget_secs,
        steps: 6,
        selection,
    }
}

fn mpc(name: &str, selection: SelectionMode, budget_secs: f64) -> ExplicitMpc {
    let (h, tree) = toy_stack();
    ExplicitMpc::new(name, h, tree, toy_config(selection, budget_secs)).unwrap()
}

fn settings() -> LoopSettings {
    LoopSettings {
        dt: 1.0,
        steps: 6,
        halt_box: Some(BoxDomain::symmetric(&[50.0, 50.0]).unwrap()),
    }
}

fn csv(log: &TrajectoryLog) -> String {
    let mut out = Vec::new();
    log.write_csv(&mut out, false).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn inputs_stay_inside_the_input_box() {
    let u = BoxDomain::new(vec![-3.0, -2.0], vec![3.0, 2.0]).unwrap();
    for mode in [SelectionMode::Exhaustive, SelectionMode::Greedy] {
        let mut c = mpc("mpc", mode, 10.0);
        for x0 in [[0.5, -0.5], [1.5, 1.0], [-1.0, 0.2]] {
            let log = run_closed_loop(&ToyPlant, &mut c, &x0, &settings()).unwrap();
            assert!(log.steps_run() > 0);
            for r in log.rows.iter().filter(|r| r.u.is_some()) {
                assert!(u.contains(r.u.as_ref().unwrap()), "{:?}", r.u);
                assert!(r.candidates > 0 && r.evaluations <= r.candidates);
                assert!(r.objective.unwrap() >= 0.0);
            }
        }
    }
}

#[test]
fn greedy_and_exhaustive_loops_coincide() {
    let x0 = [0.5, -0.5];
    let a = run_closed_loop(&ToyPlant, &mut mpc("mpc", SelectionMode::Exhaustive, 10.0), &x0, &settings()).unwrap();
    let b = run_closed_loop(&ToyPlant, &mut mpc("mpc", SelectionMode::Greedy, 10.0), &x0, &settings()).unwrap();
    let strip = |l: &TrajectoryLog| l.rows.iter().map(|r| (r.x.clone(), r.u.clone(), r.region)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn logs_are_deterministic() {
    let x0 = [1.0, 0.5];
    let a = run_closed_loop(&ToyPlant, &mut mpc("mpc", SelectionMode::Exhaustive, 10.0), &x0, &settings()).unwrap();
    let mut c = mpc("mpc", SelectionMode::Exhaustive, 10.0);
    let b = run_closed_loop(&ToyPlant, &mut c, &x0, &settings()).unwrap();
    // Reuse after reset gives the same run too.
    let d = run_closed_loop(&ToyPlant, &mut c, &x0, &settings()).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(csv(&b), csv(&d));
    assert_eq!(a.rows.len(), a.steps_run() + 1);
    assert!(a.rows.last().unwrap().u.is_none());
}

#[test]
fn exhausted_budget_is_flagged_and_still_acts() {
    let mut c = mpc("mpc", SelectionMode::Exhaustive, 1e-9);
    let log = run_closed_loop(&ToyPlant, &mut c, &[0.5, -0.5], &settings()).unwrap();
    assert_eq!(log.budget_violations(), log.steps_run());
    for r in log.rows.iter().filter(|r| r.u.is_some()) {
        assert!(r.u.as_ref().unwrap().iter().all(|v| v.is_finite()));
        assert!(r.evaluations >= 1);
        assert!(r.budget_exceeded);
    }
    let head = csv(&log).lines().next().unwrap().to_owned();
    assert_eq!(head, "step,t,x1,x2,u1,u2,J,region,candidates,evaluations,budget_exceeded");
}

#[test]
fn identical_stacks_give_identical_rows() {
    let mut cs: Vec<Box<dyn Controller>> = vec![
        Box::new(mpc("a", SelectionMode::Exhaustive, 10.0)),
        Box::new(mpc("b", SelectionMode::Exhaustive, 10.0)),
        Box::new(ConstantInput::zero(2)),
    ];
    let x0s = vec![vec![0.5, -0.5], vec![-0.3, 0.4]];
    let rows = compare_controllers(&ToyPlant, &mut cs, &x0s, &settings(), &[0.0, 0.0], &[1.0, 1.0], 0.1).unwrap();
    assert_eq!(rows.len(), 6);
    for i in 0..2 {
        let (a, b) = (&rows[i], &rows[i + 2]);
        assert_eq!((a.controller.as_str(), b.controller.as_str()), ("a", "b"));
        assert_eq!((a.converged, a.steps_to_band, a.iae, a.halted), (b.converged, b.steps_to_band, b.iae, b.halted));
        assert_eq!(a.x0, b.x0);
    }
    assert_eq!(rows[4].controller, "open-loop");
}

#[test]
fn bad_initial_state_is_rejected() {
    let mut c = ConstantInput::zero(2);
    assert!(run_closed_loop(&ToyPlant, &mut c, &[0.0], &settings()).is_err());
    assert!(run_closed_loop(&ToyPlant, &mut c, &[100.0, 0.0], &settings()).is_err());
}

#[test]
fn log_iae_matches_longhand() {
    let mut c = ConstantInput::zero(2);
    let log = run_closed_loop(&ToyPlant, &mut c, &[0.3, -0.2], &settings()).unwrap();
    let mut total = 0.0;
    for w in log.rows.windows(2) {
        for i in 0..2 {
            total += 0.5 * (w[1].t - w[0].t) * ((w[0].x[i] - 0.1).abs() / 2.0 + (w[1].x[i] - 0.1).abs() / 2.0);
        }
    }
    let got = iae(&log, &[0.1, 0.1], &[2.0, 2.0]);
    assert!((got - total).abs() <= 1e-12 * total.max(1.0));
}

proptest! {
    #[test]
    fn iae_is_nonnegative_and_additive(
        errors in prop::collection::vec(-10.0f64..10.0, 3..40),
        dt in 0.001f64..1.0,
        cut_frac in 0.0f64..1.0,
    ) {
        let t: Vec<f64> = (0..errors.len()).map(|i| i as f64 * dt).collect();
        let whole = iae_signal(&t, &errors);
        prop_assert!(whole >= 0.0);
        let cut = 1 + ((errors.len() - 2) as f64 * cut_frac) as usize;
        let split = iae_signal(&t[..=cut], &errors[..=cut]) + iae_signal(&t[cut..], &errors[cut..]);
        prop_assert!((whole - split).abs() <= 1e-12 * whole.max(1.0));
        let flipped: Vec<f64> = errors.iter().map(|e| -e).collect();
        prop_assert_eq!(whole, iae_signal(&t, &flipped));
    }
}
