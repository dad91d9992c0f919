//! Frame encoder: triplet loss, training, epoch selection and checkpoints.

pub mod loss;
pub mod model;
pub mod train;

pub use loss::{batch_triplet_loss, triplet_loss, triplet_loss_grad};
pub use model::{eval_input, eval_inputs, EncoderModel, InitKind};
pub use train::{
    clip_probabilities, frame_accuracy, train, train_classifier, validation_criterion, EpochRecord, SelectionMode,
    TrainConfig, TrainData, TrainMode, TrainOutcome,
};
