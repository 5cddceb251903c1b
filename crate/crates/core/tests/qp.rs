mod common;

use empc_core::pwl::{build_region_tree, ApproxConfig, SurrogateSet};
use empc_core::qp::{assemble_qp, candidates_for_state, solve_box_qp, RegionQp};
use empc_core::{seed, BoxDomain, QuadWeights};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::RngExt;

use common::qp_oracle::*;

#[test]
fn qp_optimum_beats_grid_and_random_points() {
    let mut rng = seed::rng(31);
    for trial in 0..100 {
        let (m, np) = [(1, 1), (2, 1), (1, 2), (2, 2)][trial % 4];
        let region = random_region(&mut rng, m, np, trial);
        let w = random_weights(&mut rng, m);
        let qp = assemble_qp(&region, &w, &wide_u(m)).unwrap();
        let x = qp.x_box.sample(&mut rng);
        if let Err(e) = check_against_grid(&qp, &x, 100_000, &mut rng) {
            panic!("trial {trial}: {e}");
        }
    }
}

#[test]
fn assembled_form_equals_affine_objective() {
    let mut rng = seed::rng(32);
    for trial in 0..50 {
        let (m, np) = [(1, 1), (2, 1), (1, 2), (2, 2), (1, 3)][trial % 5];
        let region = random_region(&mut rng, m, np, trial);
        let w = random_weights(&mut rng, m);
        let qp = assemble_qp(&region, &w, &wide_u(m)).unwrap();
        for _ in 0..100 {
            let p = region.bounds.sample(&mut rng);
            let (x, u) = p.split_at(N);
            let a = qp.objective(x, u);
            let b = direct_objective(&region, &w, x, u);
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
        let eig = SymmetricEigen::new(qp.m1.clone()).eigenvalues;
        let nmin = w.input.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(eig.min() >= nmin - 1e-10);
        assert_eq!(qp.m1, qp.m1.transpose());
    }
}

#[test]
fn scaled_and_physical_solutions_agree() {
    let mut rng = seed::rng(33);
    for trial in 0..40 {
        let (m, np) = [(1, 1), (2, 1), (1, 2), (2, 2)][trial % 4];
        let region = random_region(&mut rng, m, np, trial);
        let w = random_weights(&mut rng, m);
        let qp = assemble_qp(&region, &w, &wide_u(m)).unwrap();
        let x = qp.x_box.sample(&mut rng);
        let d = qp.input_len();
        // physical = scale * scaled
        let scale: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..4.0)).collect();
        let inv = DMatrix::from_diagonal(&DVector::from_iterator(d, scale.iter().map(|s| 1.0 / s)));
        let physical = RegionQp {
            m1: &inv * &qp.m1 * &inv,
            m3: &qp.m3 * &inv,
            m4: &inv * &qp.m4,
            u_box: BoxDomain::new(
                qp.u_box.lo.iter().zip(&scale).map(|(v, s)| v * s).collect(),
                qp.u_box.hi.iter().zip(&scale).map(|(v, s)| v * s).collect(),
            )
            .unwrap(),
            ..qp.clone()
        };
        let a = solve_box_qp(&qp, &x).unwrap();
        let b = solve_box_qp(&physical, &x).unwrap();
        for i in 0..d {
            assert!((a.inputs[i] * scale[i] - b.inputs[i]).abs() <= 1e-8 * scale[i], "trial {trial}");
        }
        assert!((a.objective - b.objective).abs() <= 1e-8 * a.objective.abs().max(1.0));
    }
}

#[test]
fn solves_are_bitwise_deterministic() {
    let mut rng = seed::rng(34);
    let region = random_region(&mut rng, 2, 2, 0);
    let w = random_weights(&mut rng, 2);
    let qp = assemble_qp(&region, &w, &wide_u(2)).unwrap();
    let x = qp.x_box.center();
    assert_eq!(solve_box_qp(&qp, &x).unwrap(), solve_box_qp(&qp, &x).unwrap());
}

#[test]
fn candidates_lie_in_their_own_boxes() {
    let h = common::random_icnn_horizon(2, 1, 2, &[8, 8], 21);
    let cfg = ApproxConfig {
        error_bound: 0.03,
        ..ApproxConfig::default()
    };
    let root = BoxDomain::symmetric(&[1.0; 4]).unwrap();
    let tree = build_region_tree(&SurrogateSet::from_horizon(&h), &root, &cfg).unwrap();
    let w = QuadWeights::new(vec![1.0, 2.0], vec![0.5]).unwrap();
    let u_bounds = BoxDomain::symmetric(&[0.7]).unwrap();
    let mut rng = seed::rng(35);
    for _ in 0..20 {
        let x = tree.root_x_box().sample(&mut rng);
        let cands = candidates_for_state(&tree, &w, &u_bounds, &x).unwrap();
        let feasible = tree
            .candidate_regions(&x)
            .unwrap()
            .iter()
            .filter(|r| r.u_box(2).intersect(&u_bounds.repeat(2)).is_some())
            .count();
        assert_eq!(cands.len(), feasible);
        assert!(cands.windows(2).all(|p| p[0].region < p[1].region));
        for c in &cands {
            let b = tree.regions[c.region].u_box(2);
            for (i, u) in c.inputs.iter().enumerate() {
                assert!(*u >= b.lo[i] - 1e-12 && *u <= b.hi[i] + 1e-12);
                assert!(u.abs() <= 0.7 + 1e-12);
            }
        }
    }
}

#[test]
fn root_only_tree_has_one_candidate() {
    let h = common::random_icnn_horizon(2, 1, 1, &[4], 2);
    let cfg = ApproxConfig {
        error_bound: 0.99,
        ..ApproxConfig::default()
    };
    let root = BoxDomain::symmetric(&[1.0; 3]).unwrap();
    let tree = build_region_tree(&SurrogateSet::from_horizon(&h), &root, &cfg).unwrap();
    assert_eq!(tree.len(), 1);
    let w = QuadWeights::new(vec![1.0, 1.0], vec![1.0]).unwrap();
    let cands = candidates_for_state(&tree, &w, &BoxDomain::symmetric(&[1.0]).unwrap(), &[0.1, 0.2]).unwrap();
    assert_eq!(cands.len(), 1);
}
