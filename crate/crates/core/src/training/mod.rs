//! Three-stage training: prior preparation, joint depth and pose training,
//! and pose refinement against a frozen depth network.

mod batch;
mod infer;
mod models;
mod plan;
mod run;
mod step;
mod suite;

pub use batch::Batch;
pub use infer::{evaluate_depth, evaluate_pose, evaluate_pose_sequences, mean_pose, predict_depths, predict_trajectory};
pub use models::{Models, DEPTH_PREFIX, POSE_PREFIX};
pub use plan::{Architecture, EdgeMode, StageId, StagePlan};
pub use run::{
    epoch_checkpoint_path, final_checkpoint_path, load_models, prepare_priors, read_log, run_stage, validation_loss,
    EpochRecord, LogRecord, PriorSummary, RunOptions, StageOutcome,
};
pub use step::{batch_loss, eval_loss, train_step, StepResult};
pub use suite::{run_ablation_suite, run_edge_mode_suite, SuiteEval};
