//! Dense feed-forward networks written from scratch: forward pass, exact
//! backpropagation (parameters and inputs), Adam, mini-batch training with
//! early stopping, and JSON persistence.

mod activation;
mod adam;
mod io;
mod loss;
mod mlp;
mod train;

pub use activation::Activation;
pub use adam::{AdamConfig, AdamState};
pub(crate) use io::read_versioned;
pub use io::{load_model, save_model, ModelFile, MODEL_SCHEMA_VERSION};
pub use loss::{mae_metric, mse_loss, mse_with_grad};
pub use mlp::{ForwardCache, GradTargets, Gradients, Layer, MlpModel, ModelMeta, TrainingFingerprint};
pub use train::{
    evaluate, per_sample_errors, train, train_with_observer, EpochRecord, StopReason, Supervised, TrainConfig,
    TrainReport,
};
