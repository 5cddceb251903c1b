use empc_core::nn::Matrix;
use empc_core::pwl::{AffineMap, Region};
use empc_core::qp::{solve_box_qp, RegionQp};
use empc_core::{BoxDomain, QuadWeights};
use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, RngExt};

pub const N: usize = 2;

pub fn random_box<R: Rng>(rng: &mut R, dim: usize) -> BoxDomain {
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    for _ in 0..dim {
        let a: f64 = rng.random_range(-1.0..0.5);
        let w: f64 = rng.random_range(0.125..1.0);
        lo.push(a);
        hi.push((a + w).min(1.0));
    }
    BoxDomain::new(lo, hi).unwrap()
}

/// Region with random affine maps for `np` steps of `m` inputs.
pub fn random_region<R: Rng>(rng: &mut R, m: usize, np: usize, id: usize) -> Region {
    let maps = (1..=np)
        .map(|k| {
            let cols = N + m * k;
            let rows: Vec<Vec<f64>> = (0..N).map(|_| (0..cols).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            AffineMap {
                gain: Matrix::from_rows(&rows),
                offset: (0..N).map(|_| rng.random_range(-1.0..1.0)).collect(),
            }
        })
        .collect();
    Region {
        id,
        depth: 0,
        bounds: random_box(rng, N + m * np),
        maps,
        max_error: vec![vec![0.0; N]; np],
        saturated: false,
    }
}

pub fn random_weights<R: Rng>(rng: &mut R, m: usize) -> QuadWeights {
    QuadWeights::new(
        (0..N).map(|_| rng.random_range(0.1..10.0)).collect(),
        (0..m).map(|_| rng.random_range(0.01..2.0)).collect(),
    )
    .unwrap()
}

pub fn wide_u(m: usize) -> BoxDomain {
    BoxDomain::symmetric(&vec![1.0; m]).unwrap()
}

/// Objective through the affine predictions, written without the QP blocks.
pub fn direct_objective(region: &Region, w: &QuadWeights, x: &[f64], u: &[f64]) -> f64 {
    let mut joint = x.to_vec();
    joint.extend_from_slice(u);
    let mut j = 0.0;
    for map in &region.maps {
        let xbar = map.eval(&joint);
        j += xbar.iter().zip(&w.state).map(|(v, m)| m * v * v).sum::<f64>();
    }
    let m = w.input.len();
    j + u.iter().enumerate().map(|(i, v)| w.input[i % m] * v * v).sum::<f64>()
}

/// Plain-array evaluation for brute-force searches.
pub struct Dense {
    d: usize,
    m1: Vec<f64>,
    lin: Vec<f64>,
    c: f64,
}

impl Dense {
    pub fn new(qp: &RegionQp, x: &[f64]) -> Self {
        let d = qp.input_len();
        let xv = DVector::from_column_slice(x);
        let lin = qp.m3.transpose() * &xv + &qp.m4;
        let c = (xv.transpose() * &qp.m2 * &xv)[0] + qp.m5.dot(&xv) + qp.m6;
        Self {
            d,
            m1: qp.m1.iter().copied().collect(),
            lin: lin.iter().copied().collect(),
            c,
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        let mut j = self.c;
        for r in 0..self.d {
            j += self.lin[r] * u[r];
            for c in 0..self.d {
                // nalgebra storage is column-major.
                j += u[r] * self.m1[c * self.d + r] * u[c];
            }
        }
        j
    }

    pub fn grad(&self, u: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|r| self.lin[r] + (0..self.d).map(|c| 2.0 * self.m1[c * self.d + r] * u[c]).sum::<f64>())
            .collect()
    }
}

pub fn grid_min(dense: &Dense, b: &BoxDomain, points: usize) -> f64 {
    let d = b.dim();
    let mut idx = vec![0usize; d];
    let mut u = vec![0.0; d];
    let mut best = f64::INFINITY;
    loop {
        for i in 0..d {
            u[i] = b.lo[i] + b.width(i) * idx[i] as f64 / (points - 1) as f64;
        }
        best = best.min(dense.eval(&u));
        let mut i = 0;
        while i < d {
            idx[i] += 1;
            if idx[i] < points {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i == d {
            return best;
        }
    }
}

/// Solves `qp` at `x` and checks it against `random_points` uniform draws and
/// a 33-point grid, allowing for the grid's resolution. Returns the KKT
/// residual.
pub fn check_against_grid<R: Rng>(qp: &RegionQp, x: &[f64], random_points: usize, rng: &mut R) -> Result<f64, String> {
    let sol = solve_box_qp(qp, x).map_err(|e| e.to_string())?;
    if sol.kkt_residual > 1e-7 {
        return Err(format!("kkt residual {}", sol.kkt_residual));
    }
    let d = qp.input_len();
    for i in 0..d {
        if sol.inputs[i] < qp.u_box.lo[i] - 1e-9 || sol.inputs[i] > qp.u_box.hi[i] + 1e-9 {
            return Err(format!("input {i} = {} outside the box", sol.inputs[i]));
        }
    }
    let dense = Dense::new(qp, x);
    let jstar = dense.eval(&sol.inputs);
    let tol = 1e-9 * jstar.abs().max(1.0);
    if (jstar - sol.objective).abs() > tol {
        return Err(format!("reported objective {} vs {jstar}", sol.objective));
    }
    for _ in 0..random_points {
        let u = qp.u_box.sample(rng);
        let j = dense.eval(&u);
        if j + tol < jstar {
            return Err(format!("random point {u:?} beats the optimum: {j} < {jstar}"));
        }
    }
    let points = 33;
    let gmin = grid_min(&dense, &qp.u_box, points);
    if gmin + tol < jstar {
        return Err(format!("grid beats the optimum: {gmin} < {jstar}"));
    }
    // The nearest grid point is at most half a cell away per axis.
    let half: Vec<f64> = (0..d).map(|i| 0.5 * qp.u_box.width(i) / (points - 1) as f64).collect();
    let g = dense.grad(&sol.inputs);
    let lmax = SymmetricEigen::new(qp.m1.clone()).eigenvalues.max();
    let slack: f64 =
        g.iter().zip(&half).map(|(g, h)| g.abs() * h).sum::<f64>() + lmax * half.iter().map(|h| h * h).sum::<f64>();
    if gmin - jstar > slack + 1e-12 {
        return Err(format!("grid {gmin} vs {jstar}, slack {slack}"));
    }
    Ok(sol.kkt_residual)
}
