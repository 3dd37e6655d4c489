//! Contextual temporal relation classifier.

pub mod adadelta;
pub mod checkpoint;
pub mod embeddings;
pub mod model;
pub mod train;

pub use adadelta::{adadelta_update, Adadelta};
pub use checkpoint::Checkpoint;
pub use embeddings::{load_embeddings, EmbeddingFormat, EmbeddingTable, PAD_TOKEN};
pub use model::{
    forward, gradient_check, loss_and_gradients, predict, predict_tokens, relative_error, Activations, Example,
    ModelParams, ModelShape, Prediction, Sequence, VectorCache, CLASSES, N_CLASSES,
};
pub use train::{best_epoch, data_fingerprint, dropout_mask, train, EpochReport, TrainConfig, TrainOutcome, TrainReport};
