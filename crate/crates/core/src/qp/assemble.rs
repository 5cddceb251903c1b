use nalgebra::{DMatrix, DVector};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::pwl::Region;
use crate::weights::QuadWeights;

/// Objective `UᵀM₁U + xᵀM₂x + xᵀM₃U + M₄U + M₅x + M₆` of one region, with the
/// region's state slab and the input box it may be solved over.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionQp {
    pub region: usize,
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub m3: DMatrix<f64>,
    pub m4: DVector<f64>,
    pub m5: DVector<f64>,
    pub m6: f64,
    pub x_box: BoxDomain,
    pub u_box: BoxDomain,
}

impl RegionQp {
    pub fn input_len(&self) -> usize {
        self.m1.nrows()
    }

    pub fn objective(&self, x: &[f64], u: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let u = DVector::from_column_slice(u);
        (u.transpose() * &self.m1 * &u)[0]
            + (x.transpose() * &self.m2 * &x)[0]
            + (x.transpose() * &self.m3 * &u)[0]
            + self.m4.dot(&u)
            + self.m5.dot(&x)
            + self.m6
    }
}

/// Builds the quadratic program of `region` for diagonal weights given in the
/// region's coordinates. `u_bounds` is the per-step input box; the QP box is
/// the region's input box intersected with it at every step.
pub fn assemble_qp(region: &Region, weights: &QuadWeights, u_bounds: &BoxDomain) -> Result<RegionQp> {
    let n = weights.state.len();
    let m = weights.input.len();
    let np = region.maps.len();
    let d = m * np;
    if region.bounds.dim() != n + d || u_bounds.dim() != m {
        return Err(Error::dims("region/weights", n + d, region.bounds.dim()));
    }
    if !weights.input_is_positive() {
        return Err(Error::InvalidConfig("input weights must be positive".into()));
    }
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(&weights.state));
    let mut m1 = DMatrix::<f64>::zeros(d, d);
    let mut m2 = DMatrix::<f64>::zeros(n, n);
    let mut m3 = DMatrix::<f64>::zeros(n, d);
    let mut m4 = DVector::<f64>::zeros(d);
    let mut m5 = DVector::<f64>::zeros(n);
    let mut m6 = 0.0;
    for map in &region.maps {
        if map.gain.rows != n || map.gain.cols < n || (map.gain.cols - n) % m != 0 {
            return Err(Error::dims("affine map", n, map.gain.rows));
        }
        let mut state_gain = DMatrix::<f64>::zeros(n, n);
        let mut input_gain = DMatrix::<f64>::zeros(n, d);
        for r in 0..n {
            for c in 0..map.gain.cols {
                let v = map.gain.get(r, c);
                if c < n {
                    state_gain[(r, c)] = v;
                } else {
                    input_gain[(r, c - n)] = v;
                }
            }
        }
        let offset = DVector::from_column_slice(&map.offset);
        let w_input = &w * &input_gain;
        let w_state = &w * &state_gain;
        let w_offset = &w * &offset;
        m1 += input_gain.transpose() * &w_input;
        m2 += state_gain.transpose() * &w_state;
        m3 += 2.0 * state_gain.transpose() * &w_input;
        m4 += 2.0 * input_gain.transpose() * &w_offset;
        m5 += 2.0 * state_gain.transpose() * &w_offset;
        m6 += offset.dot(&w_offset);
    }
    for k in 0..np {
        for j in 0..m {
            m1[(k * m + j, k * m + j)] += weights.input[j];
        }
    }
    let m1 = 0.5 * (&m1 + m1.transpose());
    let u_box = region
        .u_box(n)
        .intersect(&u_bounds.repeat(np))
        .ok_or(Error::EmptyDomain)?;
    Ok(RegionQp {
        region: region.id,
        m1,
        m2,
        m3,
        m4,
        m5,
        m6,
        x_box: region.x_box(n),
        u_box,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use crate::pwl::AffineMap;

    fn scalar_region(wbar: f64, what: f64, wtilde: f64) -> Region {
        Region {
            id: 0,
            depth: 0,
            bounds: BoxDomain::symmetric(&[1.0, 1.0]).unwrap(),
            maps: vec![AffineMap {
                gain: Matrix::from_rows(&[vec![wbar, what]]),
                offset: vec![wtilde],
            }],
            max_error: vec![vec![0.0]],
            saturated: false,
        }
    }

    #[test]
    fn scalar_substitution() {
        let w = QuadWeights::new(vec![3.0], vec![0.5]).unwrap();
        let qp = assemble_qp(&scalar_region(2.0, 3.0, 1.0), &w, &BoxDomain::symmetric(&[1.0]).unwrap()).unwrap();
        assert_eq!(qp.m1[(0, 0)], 27.5);
        assert_eq!(qp.m2[(0, 0)], 12.0);
        assert_eq!(qp.m3[(0, 0)], 36.0);
        assert_eq!(qp.m4[0], 18.0);
        assert_eq!(qp.m5[0], 12.0);
        assert_eq!(qp.m6, 3.0);
    }

    #[test]
    fn zero_coefficients_leave_input_weights() {
        let w = QuadWeights::new(vec![3.0], vec![0.5]).unwrap();
        let qp = assemble_qp(&scalar_region(0.0, 0.0, 0.0), &w, &BoxDomain::symmetric(&[1.0]).unwrap()).unwrap();
        assert_eq!(qp.m1[(0, 0)], 0.5);
        assert_eq!((qp.m2[(0, 0)], qp.m3[(0, 0)], qp.m4[0], qp.m5[0], qp.m6), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_zero_input_weight() {
        let w = QuadWeights::new(vec![3.0], vec![0.0]).unwrap();
        assert!(assemble_qp(&scalar_region(1.0, 1.0, 1.0), &w, &BoxDomain::symmetric(&[1.0]).unwrap()).is_err());
    }
}
