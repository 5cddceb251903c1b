//! Explicit model predictive control with input-convex neural network surrogates.

pub mod domain;
pub mod error;
pub mod nn;
pub mod plant;
pub mod pwl;
pub mod qp;
pub mod miqp;
pub mod control;
pub mod bridge;
pub mod seed;
pub mod weights;

pub use domain::BoxDomain;
pub use error::{Error, Result};
pub use weights::QuadWeights;
