use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

/// Per-dimension affine map of `[lo, hi]` onto `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl MinMaxScaler {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = BoxDomain::new(lo, hi)?;
        Ok(Self { lo: b.lo, hi: b.hi })
    }

    pub fn from_box(b: &BoxDomain) -> Self {
        Self {
            lo: b.lo.clone(),
            hi: b.hi.clone(),
        }
    }

    /// Identity scaler on `[-1, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![-1.0; dim],
            hi: vec![1.0; dim],
        }
    }

    /// Calibrates on the per-column extremes of row-major data.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDomain)?;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            for (d, v) in row.iter().enumerate() {
                lo[d] = lo[d].min(*v);
                hi[d] = hi[d].max(*v);
            }
        }
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn half_range(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    /// True when `lo = -hi`, so the origin maps to the origin and the map is
    /// a pure per-dimension scaling.
    pub fn is_zero_centered(&self) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .all(|(l, h)| (l + h).abs() <= 1e-12 * (h - l))
    }

    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(d, x)| self.forward_one(d, *x))
            .collect()
    }

    #[inline]
    pub fn forward_one(&self, d: usize, v: f64) -> f64 {
        2.0 * (v - self.lo[d]) / (self.hi[d] - self.lo[d]) - 1.0
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(d, x)| self.inverse_one(d, *x))
            .collect()
    }

    #[inline]
    pub fn inverse_one(&self, d: usize, z: f64) -> f64 {
        self.lo[d] + 0.5 * (z + 1.0) * (self.hi[d] - self.lo[d])
    }

    pub fn forward_box(&self, b: &BoxDomain) -> BoxDomain {
        BoxDomain {
            lo: self.forward(&b.lo),
            hi: self.forward(&b.hi),
        }
    }

    pub fn concat(&self, other: &MinMaxScaler) -> MinMaxScaler {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        MinMaxScaler { lo, hi }
    }

    pub fn repeat(&self, times: usize) -> MinMaxScaler {
        MinMaxScaler {
            lo: self.lo.repeat(times),
            hi: self.hi.repeat(times),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn maps_bounds_to_unit_interval() {
        let s = MinMaxScaler::new(vec![-1.95, 0.0], vec![1.95, 10.0]).unwrap();
        assert_eq!(s.forward(&[-1.95, 0.0]), vec![-1.0, -1.0]);
        assert_eq!(s.forward(&[1.95, 10.0]), vec![1.0, 1.0]);
        assert!(!s.is_zero_centered());
        assert!(MinMaxScaler::new(vec![-2.0], vec![2.0]).unwrap().is_zero_centered());
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(MinMaxScaler::new(vec![1.0], vec![1.0]).is_err());
        assert!(MinMaxScaler::new(vec![2.0], vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(lo in -1e3f64..1e3, width in 1e-3f64..1e3, t in 0.0f64..=1.0) {
            let s = MinMaxScaler::new(vec![lo], vec![lo + width]).unwrap();
            let v = lo + t * width;
            let back = s.inverse(&s.forward(&[v]))[0];
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
}
