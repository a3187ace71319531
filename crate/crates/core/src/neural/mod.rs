//! Convolutional classifier trained with weighted cross-entropy, step-decay
//! SGD, crop/flip augmentation and best-on-validation checkpointing.

pub mod augment;
pub mod loss;
pub mod net;
pub mod train;

use thiserror::Error;

use crate::image::ImageError;

pub use augment::{augment_image, AugmentInfo};
pub use loss::{ce_loss, class_weights, weighted_ce_loss, ClassWeights, WeightMode};
pub use net::{image_to_tensor, NetConfig, NetModel};
pub use train::{
    evaluate_network, load_checkpoint, load_labeled, network_logits, save_checkpoint,
    train_network, write_curves, EpochLog, LabeledImage, LossKind, Reduction, TrainConfig,
    TrainMode, TrainedNet,
};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("label {0:?} is not in the class list")]
    UnknownLabel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("cannot load image for sample {sample}: {source}")]
    ImageLoad {
        sample: String,
        #[source]
        source: ImageError,
    },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
}
