//! Small convolutional networks for classifying topoplot images.

mod arch;
mod gradcam;
pub mod layers;
mod model;
mod network;
mod scalar;
mod tensor;
mod train;

pub use arch::{build_architecture, BlockSpec, CnnKind, InputShape, NetworkSpec, PoolSpec};
pub use gradcam::{grad_cam, HeatMap};
pub use model::{
    images_to_tensor, ModelMetadata, Prediction, RasterConvention, TrainedModel, MODEL_MAGIC,
    NEGATIVE, POSITIVE,
};
pub use network::{Block, ForwardCache, Network};
pub use scalar::{matmul, Scalar};
pub use tensor::Tensor;
pub use train::{
    gradient_norm, split_indices, train, EpochRecord, History, LabeledImage, Sgd, StepNorm,
    TrainConfig, MAX_EPOCHS_CAP,
};

/// Whether batchnorm uses batch statistics or running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
