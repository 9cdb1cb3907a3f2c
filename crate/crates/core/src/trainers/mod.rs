//! Host learning algorithms and the two-stage training loop.

mod eval;
mod optim;
mod ppo;
mod two_stage;
mod vd;

pub use eval::{evaluate, evaluate_policy, evaluate_policy_with, evaluate_qtable, EvalReport, PolicyEvalMode};
pub use optim::Adam;
pub use ppo::{collect_rollouts, ppo_update, PgTrainerConfig, PpoTrainer, ResonanceContext, RolloutStreams, UpdateStats};
pub use two_stage::{run_two_stage, run_value_decomposition, LogRow, StagePlan, TrainOutcome, TrainingObserver, VdOutcome};
pub use vd::{epsilon_at, vd_act, vd_update, QTable, ReplayBuffer, VdTrainerConfig, VdUpdateStats};
