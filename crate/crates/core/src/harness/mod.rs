//! Experiment orchestration: configuration, metrics, checkpoints, training and evaluation.

mod checkpoint;
mod config;
pub mod gradcheck;
mod metrics;
mod run;

pub use checkpoint::{Checkpoint, NamedTensor, MAGIC, VERSION};
pub use config::{parse_entries, DataSource, TrainConfig, TrainMode};
pub use metrics::{kappa, ConfusionMatrix};
pub use run::{
    classify_embedding, config_echo, evaluate, evaluate_checkpoint, gallery_embeddings, load_model, metrics_csv, model_config, parse_echo,
    predict_image, resolve_data, train, train_on, EvalOptions, Evaluation, MetricsRow, Prediction, Splits, TrainOutcome,
};
