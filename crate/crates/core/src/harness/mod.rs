//! The iterative training loop: supervised warm start on expert
//! demonstrations, then rounds of exploration, contrastive dataset
//! construction, preference optimization and held-out evaluation.

mod config;
mod eval;
mod expert;
mod gradcheck;
mod run;

pub use config::RunConfig;
pub use eval::{best_row, evaluate, read_metrics_csv, write_metrics_csv, EvalSummary, MetricsRow};
pub use gradcheck::{gradient_suite, loss_fixture, GradSuiteEntry, LossFixture};
pub use expert::{build_vocab, expert_thought, synthesize_expert, synthesize_experts, ExpertDemo};
pub use run::{
    effective_flags, run, run_iteration, run_sft, IterationOutput, Lab, LossRow, RunState, RunSummary, SftReport,
};
