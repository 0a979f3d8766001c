//! Optimisation, evaluation and checkpointing.

pub mod adam;
pub mod checkpoint;
pub mod evaluate;
pub mod loops;
pub mod metrics;
pub mod report;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Manifest, ParamEntry};
pub use evaluate::{
    evaluate, evaluate_on, Forecaster, LastValueRepeat, TruthOracle, STANDARD_HORIZONS,
};
pub use loops::{
    baseline_epoch, finetune_epoch, prepare_finetune, pretrain_epoch, reconstruction_mse,
    StageConfig, TrainerConfig, WindowPool,
};
pub use metrics::{compute_metrics, MetricAccumulator, Metrics, MAPE_FLOOR};
pub use report::{metrics_csv, EpochSummary, MetricRow, TrainReport};
