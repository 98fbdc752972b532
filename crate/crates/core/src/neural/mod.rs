//! Small dense autodiff stack for quantile regression.
//!
//! Everything is `f64` and CPU-only. A [`Graph`] records one forward pass;
//! [`Graph::backward`] returns a gradient for each registered parameter.
//! [`Model`] wires the four supported architectures onto the graph, and
//! [`train_quantile_model`] fits one model to one quantile level with Adam.

mod adam;
mod gradcheck;
mod graph;
mod loss;
mod model;
mod tensor;
mod train;

pub use adam::{clip_grad_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, GRAD_FLOOR};
pub use graph::{Graph, Var};
pub use loss::tilted_loss;
pub use model::{Architecture, Model, ModelSpec};
pub use tensor::Tensor;
pub use train::{train_quantile_model, EpochRecord, TrainConfig, TrainedModel};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("quantile level {0} outside (0, 1)")]
    InvalidQuantile(f64),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("backward called without a recorded forward pass")]
    BackwardBeforeForward,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("no training data")]
    EmptyData,
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
}
