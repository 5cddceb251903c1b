use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{assemble_qp, RegionQp};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::pwl::RegionTree;
use crate::weights::QuadWeights;

const MAX_ITERATIONS: usize = 500;
const ENUMERATION_MAX_DIM: usize = 6;
const ACCEPT_RESIDUAL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub region: usize,
    /// Minimizer in the coordinates of the QP.
    pub inputs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

struct Problem<'a> {
    h: DMatrix<f64>,
    q: DVector<f64>,
    lo: &'a [f64],
    hi: &'a [f64],
}

impl Problem<'_> {
    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.h * u + &self.q
    }

    fn value(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.q.dot(u)
    }

    fn project(&self, u: &mut DVector<f64>) {
        for i in 0..u.len() {
            u[i] = u[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Per-coordinate violation of the box KKT conditions, maximised.
    fn kkt_residual(&self, u: &DVector<f64>) -> f64 {
        let g = self.gradient(u);
        (0..u.len())
            .map(|i| {
                if u[i] <= self.lo[i] {
                    (-g[i]).max(0.0)
                } else if u[i] >= self.hi[i] {
                    g[i].max(0.0)
                } else {
                    g[i].abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Minimizer with coordinates in `fixed` pinned to the given values.
    fn reduced_solve(&self, fixed: &[Option<f64>]) -> Option<DVector<f64>> {
        let free: Vec<usize> = (0..fixed.len()).filter(|&i| fixed[i].is_none()).collect();
        let mut u = DVector::from_iterator(fixed.len(), fixed.iter().map(|f| f.unwrap_or(0.0)));
        if free.is_empty() {
            return Some(u);
        }
        let rhs = -(&self.h * &u + &self.q);
        let hff = DMatrix::from_fn(free.len(), free.len(), |r, c| self.h[(free[r], free[c])]);
        let rf = DVector::from_fn(free.len(), |r, _| rhs[free[r]]);
        let sol = hff.cholesky()?.solve(&rf);
        for (k, &i) in free.iter().enumerate() {
            u[i] = sol[k];
        }
        Some(u)
    }

    fn projected_gradient(&self, start: DVector<f64>) -> (DVector<f64>, usize) {
        let lipschitz = (0..self.h.nrows())
            .map(|r| self.h.row(r).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut u = start;
        let mut prev = u.clone();
        let mut momentum = 0.0;
        for it in 1..=MAX_ITERATIONS {
            let mut y = &u + momentum * (&u - &prev);
            self.project(&mut y);
            let mut z = &y - self.gradient(&y) / lipschitz;
            self.project(&mut z);
            let p = &z - &u;
            let curvature = p.dot(&(&self.h * &p));
            let slope = self.gradient(&u).dot(&p);
            if curvature <= 0.0 || slope >= 0.0 {
                if momentum == 0.0 {
                    return (u, it);
                }
                momentum = 0.0;
                continue;
            }
            let t = (-slope / curvature).min(1.0);
            prev = u.clone();
            u += t * p;
            if self.kkt_residual(&u) <= ACCEPT_RESIDUAL {
                return (u, it);
            }
            momentum = (it as f64 - 1.0) / (it as f64 + 2.0);
        }
        (u, MAX_ITERATIONS)
    }

    /// Primal-dual active-set refinement from a near-optimal point.
    fn polish(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let d = u.len();
        let g = self.gradient(u);
        let mut fixed: Vec<Option<f64>> = (0..d)
            .map(|i| {
                if u[i] <= self.lo[i] && g[i] > 0.0 {
                    Some(self.lo[i])
                } else if u[i] >= self.hi[i] && g[i] < 0.0 {
                    Some(self.hi[i])
                } else {
                    None
                }
            })
            .collect();
        for _ in 0..2 * d + 2 {
            let cand = self.reduced_solve(&fixed)?;
            let g = self.gradient(&cand);
            let mut changed = false;
            for i in 0..d {
                match fixed[i] {
                    None if cand[i] < self.lo[i] => {
                        fixed[i] = Some(self.lo[i]);
                        changed = true;
                    }
                    None if cand[i] > self.hi[i] => {
                        fixed[i] = Some(self.hi[i]);
                        changed = true;
                    }
                    Some(v) if (v == self.lo[i] && g[i] < 0.0) || (v == self.hi[i] && g[i] > 0.0) => {
                        fixed[i] = None;
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return Some(cand);
            }
        }
        None
    }

    /// Checks every lower/upper/free pattern; exact for strictly convex QPs.
    fn enumerate(&self) -> Option<DVector<f64>> {
        let d = self.q.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            let fixed: Vec<Option<f64>> = (0..d)
                .map(|i| {
                    let s = c % 3;
                    c /= 3;
                    match s {
                        0 => None,
                        1 => Some(self.lo[i]),
                        _ => Some(self.hi[i]),
                    }
                })
                .collect();
            let Some(u) = self.reduced_solve(&fixed) else { continue };
            if (0..d).any(|i| u[i] < self.lo[i] || u[i] > self.hi[i]) {
                continue;
            }
            let v = self.value(&u);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, u));
            }
        }
        best.map(|(_, u)| u)
    }
}

/// Minimizes the region objective over its input box for the measured `x`.
pub fn solve_box_qp(qp: &RegionQp, x: &[f64]) -> Result<QpSolution> {
    if x.len() != qp.x_box.dim() {
        return Err(Error::dims("measured state", qp.x_box.dim(), x.len()));
    }
    if !qp.x_box.contains(x) {
        return Err(Error::RegionNotApplicable { region: qp.region });
    }
    let xv = DVector::from_column_slice(x);
    let problem = Problem {
        h: 2.0 * &qp.m1,
        q: qp.m3.transpose() * &xv + &qp.m4,
        lo: &qp.u_box.lo,
        hi: &qp.u_box.hi,
    };
    let chol = problem.h.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let mut u = chol.solve(&(-&problem.q));
    let mut iterations = 0;
    if !qp.u_box.contains(u.as_slice()) {
        problem.project(&mut u);
        let (pg, its) = problem.projected_gradient(u);
        iterations = its;
        u = match problem.polish(&pg) {
            Some(p) if problem.kkt_residual(&p) <= ACCEPT_RESIDUAL => p,
            _ if pg.len() <= ENUMERATION_MAX_DIM => problem.enumerate().unwrap_or(pg),
            _ => pg,
        };
    }
    problem.project(&mut u);
    let kkt_residual = problem.kkt_residual(&u);
    let inputs = u.as_slice().to_vec();
    Ok(QpSolution {
        region: qp.region,
        objective: qp.objective(x, &inputs),
        inputs,
        iterations,
        kkt_residual,
    })
}

/// A per-region optimum for the measured state.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub region: usize,
    /// Input sequence in tree coordinates.
    pub inputs: Vec<f64>,
    /// Objective under the region's affine surrogate.
    pub affine_objective: f64,
}

/// Solves the QP of every region whose state slab holds `x`.
///
/// `weights` are in tree coordinates and `u_bounds` is the per-step input
/// box in tree coordinates. Regions outside that box are skipped; failed
/// regions are dropped and logged.
pub fn candidates_for_state(
    tree: &RegionTree,
    weights: &QuadWeights,
    u_bounds: &BoxDomain,
    x: &[f64],
) -> Result<Vec<Candidate>> {
    let per_step = u_bounds.repeat(tree.horizon);
    // Regions entirely outside the input bounds hold no feasible sequence.
    let regions: Vec<_> = tree
        .candidate_regions(x)?
        .into_iter()
        .filter(|r| r.u_box(tree.state_dim).intersect(&per_step).is_some())
        .collect();
    let solved: Vec<Option<Candidate>> = regions
        .par_iter()
        .map(|r| {
            let result = assemble_qp(r, weights, u_bounds).and_then(|qp| solve_box_qp(&qp, x));
            match result {
                Ok(sol) => Some(Candidate {
                    region: r.id,
                    inputs: sol.inputs,
                    affine_objective: sol.objective,
                }),
                Err(e) => {
                    log::warn!("region {} dropped: {e}", r.id);
                    None
                }
            }
        })
        .collect();
    let mut out: Vec<Candidate> = solved.into_iter().flatten().collect();
    if out.is_empty() {
        return Err(Error::NoCandidates);
    }
    out.sort_by_key(|c| c.region);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(m1: DMatrix<f64>, m4: DVector<f64>, lo: f64, hi: f64) -> RegionQp {
        let d = m1.nrows();
        RegionQp {
            region: 0,
            m1,
            m2: DMatrix::zeros(1, 1),
            m3: DMatrix::zeros(1, d),
            m4,
            m5: DVector::zeros(1),
            m6: 0.0,
            x_box: BoxDomain::symmetric(&[1.0]).unwrap(),
            u_box: BoxDomain::new(vec![lo; d], vec![hi; d]).unwrap(),
        }
    }

    #[test]
    fn identity_centered() {
        let sol = solve_box_qp(&qp(DMatrix::identity(3, 3), DVector::zeros(3), -1.0, 1.0), &[0.0]).unwrap();
        assert_eq!(sol.inputs, vec![0.0; 3]);
    }

    #[test]
    fn active_bound() {
        // (u - 2)² = u² - 4u + 4
        let mut p = qp(DMatrix::identity(1, 1), DVector::from_element(1, -4.0), -1.0, 1.0);
        p.m6 = 4.0;
        let sol = solve_box_qp(&p, &[0.0]).unwrap();
        assert_eq!(sol.inputs, vec![1.0]);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!(sol.kkt_residual <= 1e-7);
    }

    #[test]
    fn coupled_problem_meets_kkt() {
        let m1 = DMatrix::from_row_slice(2, 2, &[2.0, 1.9, 1.9, 2.0]);
        let sol = solve_box_qp(&qp(m1, DVector::from_row_slice(&[-10.0, 3.0]), -1.0, 1.0), &[0.0]).unwrap();
        assert!(sol.kkt_residual <= 1e-7, "{sol:?}");
    }

    #[test]
    fn inapplicable_state() {
        let err = solve_box_qp(&qp(DMatrix::identity(1, 1), DVector::zeros(1), -1.0, 1.0), &[3.0]).unwrap_err();
        assert!(matches!(err, Error::RegionNotApplicable { region: 0 }));
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let m1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = solve_box_qp(&qp(m1, DVector::zeros(2), -1.0, 1.0), &[0.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite));
    }
}
