//! Training loop, evaluation metrics, ensembling and the ablation harness.

mod ablation;
mod config;
mod ensemble;
mod gradcheck;
mod metrics;
mod optimizer;
pub mod synthetic;
mod trainer;

pub use ablation::{run_ablation, run_depth_sweep, AblationRow, DepthRow, Variant};
pub use config::TrainConfig;
pub use ensemble::predict_probs;
pub use gradcheck::{
    micro_fixture_pairs, run_micro_gradcheck, run_micro_gradcheck_corrupted,
    MICRO_GRADCHECK_TOLERANCE,
};
pub use metrics::{average_precision, evaluate, reciprocal_rank, EvalReport};
pub use optimizer::{clip_global_norm, rmsprop_step, RmspropState};
pub use trainer::{overfit_smoke, train, EpochLog, TrainOutcome};
