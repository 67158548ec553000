//! Losses, optimizer, learning-rate schedule, metrics and the training loop.

mod fit;
mod loss;
mod metrics;
mod optim;

pub use fit::{evaluate, train_loop, EpochRecord, SelectionMetric, TrainConfig, TrainReport};
pub use loss::{balanced_class_weights, cross_entropy, weighted_cross_entropy};
pub use metrics::{argmax, binary_auc, metrics, ClassMetrics, MetricsReport};
pub use optim::{
    adam_step, reduce_lr_on_plateau, AdamConfig, AdamState, Plateau, PlateauConfig,
};
