use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Softplus => v.max(0.0) + (-v.abs()).exp().ln_1p(),
            Activation::Linear => v,
        }
    }

    /// Derivative with respect to the pre-activation. Relu uses 0 at the kink.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => 1.0 / (1.0 + (-pre).exp()),
            Activation::Linear => 1.0,
        }
    }

    /// Whether the function is convex and non-decreasing on the real line.
    pub fn is_convex_nondecreasing(self) -> bool {
        matches!(
            self,
            Activation::Relu | Activation::Softplus | Activation::Linear
        )
    }

    /// Whether every output of the function is non-negative.
    pub fn is_nonnegative(self) -> bool {
        matches!(self, Activation::Relu | Activation::Softplus)
    }
}
