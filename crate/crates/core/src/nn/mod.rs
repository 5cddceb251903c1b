//! Dense network engine: ICNN and FNN models, training, convexity checks.

mod activation;
mod convexity;
mod dataset;
mod horizon;
mod matrix;
mod network;
mod scaler;
mod surface;
mod train;

pub use activation::Activation;
pub use convexity::{certify_convexity, sample_midpoint_convexity, static_issues, ConvexityReport};
pub use dataset::{Dataset, SampleTable, Split, SplitFractions, SCALED_SLACK};
pub use horizon::{fit_step_model, FitOutcome, Horizon, ModelSpec, StepModel, MODEL_FORMAT_VERSION};
pub use matrix::Matrix;
pub use network::{project_nonnegative, Architecture, Layer, Network};
pub use scaler::MinMaxScaler;
pub use surface::{objective_surface, GridAxis, Surface};
pub use train::{train, EpochLoss, TrainConfig, TrainReport};

/// Anything that maps an input vector to an output vector.
pub trait Predictor: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Writes the prediction into `out`; buffers must have the right lengths.
    fn predict_into(&self, input: &[f64], out: &mut [f64]);

    fn predict(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.predict_into(input, &mut out);
        out
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn predict_into(&self, input: &[f64], out: &mut [f64]) {
        (**self).predict_into(input, out)
    }
}
