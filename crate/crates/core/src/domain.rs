//! Axis-aligned boxes.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    /// Builds a box, requiring `lo < hi` in every dimension.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dims("box bounds", lo.len(), hi.len()));
        }
        if lo.is_empty() {
            return Err(Error::EmptyDomain);
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) || l >= h {
                return Err(Error::InvalidConfig(format!(
                    "box dimension {i} has lo = {l}, hi = {h}; need finite lo < hi"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(half_widths: &[f64]) -> Result<Self> {
        Self::new(
            half_widths.iter().map(|h| -h).collect(),
            half_widths.to_vec(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.width(d)).product()
    }

    /// Closed-box membership.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn scaled_by(&self, factor: f64) -> Self {
        let c = self.center();
        let lo = c
            .iter()
            .zip(&self.lo)
            .map(|(c, l)| c + factor * (l - c))
            .collect();
        let hi = c
            .iter()
            .zip(&self.hi)
            .map(|(c, h)| c + factor * (h - c))
            .collect();
        Self { lo, hi }
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (v, (l, h)) in p.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| rng.random_range(*l..*h))
            .collect()
    }

    pub fn sample_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, (l, h)) in out.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *o = rng.random_range(*l..*h);
        }
    }

    /// Intersection of two boxes, `None` when it has empty interior.
    pub fn intersect(&self, other: &BoxDomain) -> Option<BoxDomain> {
        if self.dim() != other.dim() {
            return None;
        }
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        lo.iter()
            .zip(&hi)
            .all(|(l, h)| l < h)
            .then_some(BoxDomain { lo, hi })
    }

    /// Sub-box over the dimension range `[start, end)`.
    pub fn project(&self, start: usize, end: usize) -> BoxDomain {
        BoxDomain {
            lo: self.lo[start..end].to_vec(),
            hi: self.hi[start..end].to_vec(),
        }
    }

    pub fn concat(&self, other: &BoxDomain) -> BoxDomain {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        BoxDomain { lo, hi }
    }

    pub fn repeat(&self, times: usize) -> BoxDomain {
        BoxDomain {
            lo: self.lo.repeat(times),
            hi: self.hi.repeat(times),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_bounds() {
        assert!(BoxDomain::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(BoxDomain::new(vec![], vec![]).is_err());
        assert!(BoxDomain::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn scaling_about_center() {
        let b = BoxDomain::new(vec![-2.0, 0.0], vec![2.0, 4.0]).unwrap();
        let s = b.scaled_by(1.5);
        assert_eq!(s.lo, vec![-3.0, -1.0]);
        assert_eq!(s.hi, vec![3.0, 5.0]);
        assert_eq!(b.volume(), 16.0);
    }

    #[test]
    fn intersection() {
        let a = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let b = BoxDomain::new(vec![1.0, -1.0], vec![3.0, 1.0]).unwrap();
        let c = a.intersect(&b).unwrap();
        assert_eq!(c.lo, vec![1.0, 0.0]);
        assert_eq!(c.hi, vec![2.0, 1.0]);
        let d = BoxDomain::new(vec![2.0, 0.0], vec![3.0, 1.0]).unwrap();
        assert!(a.intersect(&d).is_none());
    }
}
